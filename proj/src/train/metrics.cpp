#include "pickt/train/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "pickt/core/error.hpp"

namespace pickt::train {

std::optional<double> auc_rank(const std::vector<double>& probs, const std::vector<int>& labels) {
  if (probs.size() != labels.size()) throw DimensionError("auc: probs and labels differ in length");
  for (double p : probs)
    if (!std::isfinite(p)) throw NumericalError("auc: non-finite probability");
  std::vector<std::size_t> order(probs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs[a] < probs[b]; });
  std::uint64_t pos = 0, neg = 0, doubled = 0;
  std::uint64_t neg_below = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    std::uint64_t gp = 0, gn = 0;
    while (j < order.size() && probs[order[j]] == probs[order[i]]) {
      (labels[order[j]] == 1 ? gp : gn) += 1;
      ++j;
    }
    doubled += 2 * gp * neg_below + gp * gn;
    neg_below += gn;
    pos += gp;
    neg += gn;
    i = j;
  }
  if (pos == 0 || neg == 0) return std::nullopt;
  return double(doubled) / (2.0 * double(pos) * double(neg));
}

EvalReport compute_metrics(const std::vector<double>& probs, const std::vector<int>& labels, double threshold) {
  if (probs.size() != labels.size()) throw DimensionError("metrics: probs and labels differ in length");
  EvalReport r;
  r.count = probs.size();
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw DataError("metrics: label must be 0 or 1");
    if (labels[i] == 1) {
      ++r.correct_total;
      if (probs[i] >= threshold) ++r.correct_hits;
    } else {
      ++r.wrong_total;
      if (probs[i] < threshold) ++r.wrong_hits;
    }
  }
  if (r.wrong_total) r.acc_wrong = double(r.wrong_hits) / double(r.wrong_total);
  if (r.correct_total) r.acc_correct = double(r.correct_hits) / double(r.correct_total);
  if (r.acc_wrong && r.acc_correct) r.acc_macro = (*r.acc_wrong + *r.acc_correct) / 2.0;
  if (r.count) r.acc_micro = double(r.wrong_hits + r.correct_hits) / double(r.count);
  r.auc = auc_rank(probs, labels);
  return r;
}

std::string format_metric(const std::optional<double>& v, int digits) {
  if (!v) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, *v);
  return buf;
}

nlohmann::json report_to_json(const EvalReport& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json("NA"); };
  return {{"count", r.count},
          {"wrong_total", r.wrong_total},
          {"correct_total", r.correct_total},
          {"wrong_hits", r.wrong_hits},
          {"correct_hits", r.correct_hits},
          {"acc_wrong", opt(r.acc_wrong)},
          {"acc_correct", opt(r.acc_correct)},
          {"acc_macro", opt(r.acc_macro)},
          {"acc_micro", opt(r.acc_micro)},
          {"auc", opt(r.auc)}};
}

namespace {

MetricSummary summarize(const std::vector<EvalReport>& folds, std::optional<double> EvalReport::*field) {
  std::vector<double> v;
  for (const auto& f : folds) {
    if (f.*field) v.push_back(*(f.*field));
  }
  MetricSummary s;
  s.folds = v.size();
  if (v.empty()) return s;
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
  s.mean = mean;
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    s.stddev = std::sqrt(ss / double(v.size() - 1));
  }
  return s;
}

}  // namespace

std::string MetricSummary::formatted(int digits) const {
  if (!mean) return "NA";
  return format_metric(mean, digits) + "±" + (stddev ? format_metric(stddev, digits) : std::string("NA"));
}

FoldSummary summarize_folds(const std::vector<EvalReport>& folds) {
  return {summarize(folds, &EvalReport::acc_wrong), summarize(folds, &EvalReport::acc_correct),
          summarize(folds, &EvalReport::acc_macro), summarize(folds, &EvalReport::acc_micro),
          summarize(folds, &EvalReport::auc)};
}

nlohmann::json summary_to_json(const FoldSummary& s) {
  auto one = [](const MetricSummary& m) {
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json("NA"); };
    return nlohmann::json{{"mean", opt(m.mean)}, {"std", opt(m.stddev)}, {"folds", m.folds}, {"text", m.formatted()}};
  };
  return {{"acc_wrong", one(s.acc_wrong)},
          {"acc_correct", one(s.acc_correct)},
          {"acc_macro", one(s.acc_macro)},
          {"acc_micro", one(s.acc_micro)},
          {"auc", one(s.auc)}};
}

const char* band_name(AchievementBand b) {
  switch (b) {
    case AchievementBand::Lowest:
      return "lowest";
    case AchievementBand::Low:
      return "low";
    case AchievementBand::Middle:
      return "middle";
    case AchievementBand::High:
      return "high";
    case AchievementBand::Highest:
      return "highest";
  }
  return "?";
}

AchievementBand achievement_band(double rate) {
  if (rate <= 0.40) return AchievementBand::Lowest;
  if (rate <= 0.60) return AchievementBand::Low;
  if (rate <= 0.80) return AchievementBand::Middle;
  if (rate <= 0.90) return AchievementBand::High;
  return AchievementBand::Highest;
}

StratifiedReport stratify_by_achievement(const std::vector<StudentPredictions>& per_student) {
  std::map<AchievementBand, std::pair<std::vector<double>, std::vector<int>>> pooled;
  StratifiedReport out;
  for (const auto& s : per_student) {
    if (s.labels.empty()) {
      out.notes.push_back("student " + s.student_id + " has no evaluated interactions");
      continue;
    }
    const auto correct = std::count(s.labels.begin(), s.labels.end(), 1);
    const AchievementBand band = achievement_band(double(correct) / double(s.labels.size()));
    auto& [p, l] = pooled[band];
    p.insert(p.end(), s.probs.begin(), s.probs.end());
    l.insert(l.end(), s.labels.begin(), s.labels.end());
    ++out.students[band];
  }
  for (AchievementBand b : {AchievementBand::Highest, AchievementBand::High, AchievementBand::Middle,
                            AchievementBand::Low, AchievementBand::Lowest}) {
    auto it = pooled.find(b);
    if (it == pooled.end()) {
      out.notes.push_back(std::string("band ") + band_name(b) + " is empty");
      continue;
    }
    out.bands[b] = compute_metrics(it->second.first, it->second.second);
  }
  return out;
}

}  // namespace pickt::train
