#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace pickt::train {

inline constexpr double kThreshold = 0.5;

/// The five metrics plus class counts. Class metrics are empty (printed
/// "NA") when their class has no samples; AUC when either class is empty.
struct EvalReport {
  std::size_t count = 0;
  std::size_t wrong_total = 0;    // label 0
  std::size_t correct_total = 0;  // label 1
  std::size_t wrong_hits = 0;     // label 0 predicted < 0.5
  std::size_t correct_hits = 0;   // label 1 predicted >= 0.5
  std::optional<double> acc_wrong;
  std::optional<double> acc_correct;
  std::optional<double> acc_macro;
  std::optional<double> acc_micro;
  std::optional<double> auc;
};

/// Mann-Whitney AUC, ties counted one half, from integer doubled rank sums.
std::optional<double> auc_rank(const std::vector<double>& probs, const std::vector<int>& labels);

EvalReport compute_metrics(const std::vector<double>& probs, const std::vector<int>& labels,
                           double threshold = kThreshold);

std::string format_metric(const std::optional<double>& v, int digits = 4);
nlohmann::json report_to_json(const EvalReport& r);

/// Mean and sample standard deviation (n-1) per metric over folds; metrics
/// undefined in some fold are aggregated over the folds that define them.
struct MetricSummary {
  std::optional<double> mean;
  std::optional<double> stddev;
  std::size_t folds = 0;
  std::string formatted(int digits = 4) const;  // "mean±std"
};
struct FoldSummary {
  MetricSummary acc_wrong, acc_correct, acc_macro, acc_micro, auc;
};
FoldSummary summarize_folds(const std::vector<EvalReport>& folds);
nlohmann::json summary_to_json(const FoldSummary& s);

/// One student's predictions at evaluated positions.
struct StudentPredictions {
  std::string student_id;
  std::vector<double> probs;
  std::vector<int> labels;
};

enum class AchievementBand { Lowest, Low, Middle, High, Highest };
const char* band_name(AchievementBand b);
/// Right-closed edges: <=0.40, <=0.60, <=0.80, <=0.90, >0.90.
AchievementBand achievement_band(double correct_rate);

struct StratifiedReport {
  std::map<AchievementBand, EvalReport> bands;
  std::map<AchievementBand, std::size_t> students;
  std::vector<std::string> notes;  // empty bands
};
/// Bands students by their overall correct rate over their evaluated labels.
/// Students without labels are skipped with a note.
StratifiedReport stratify_by_achievement(const std::vector<StudentPredictions>& per_student);

}  // namespace pickt::train
