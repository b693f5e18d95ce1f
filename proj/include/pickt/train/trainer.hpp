#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pickt/data/features.hpp"
#include "pickt/model/pickt.hpp"
#include "pickt/train/metrics.hpp"

namespace pickt::train {

struct TrainConfig {
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  double learning_rate = 3e-4;
  std::uint64_t seed = 0;
  std::size_t eval_batch_size = 64;
};

/// Profiles from the two reference datasets: long sequences with few epochs,
/// and short sequences with many epochs.
struct TrainProfile {
  std::size_t max_seq_len;
  std::size_t batch_size;
  std::size_t epochs;
};
inline constexpr TrainProfile kLargeProfile{256, 128, 5};
inline constexpr TrainProfile kDbeProfile{32, 32, 50};

struct EpochRecord {
  std::size_t epoch = 0;
  std::string split;  // "train" or "val"
  double loss = 0.0;
  EvalReport report;
};

/// Per-epoch CSV: epoch,split,loss,acc_wrong,acc_correct,acc_macro,acc_micro,auc
struct EpochLog {
  std::vector<EpochRecord> rows;
  std::string csv() const;
  void write_csv(const std::filesystem::path& path) const;
};

/// Predictions at every scored position, in window order.
struct Predictions {
  std::vector<double> probs;
  std::vector<int> labels;
  std::vector<std::size_t> window;
  std::vector<std::size_t> position;
  std::vector<std::size_t> record;  // Dataset::records index
  double loss = 0.0;                // mean BCE over scored positions

  std::size_t size() const { return probs.size(); }
};

/// Inference-mode forward over `windows` in fixed-size batches.
Predictions predict(const model::PicktModel& model, const std::vector<data::SequenceWindow>& windows,
                    std::size_t batch_size);
EvalReport evaluate(const model::PicktModel& model, const std::vector<data::SequenceWindow>& windows,
                    std::size_t batch_size, double* loss = nullptr);
/// Groups predictions by the windows' student ids (sorted by id).
std::vector<StudentPredictions> by_student(const Predictions& predictions,
                                           const std::vector<data::SequenceWindow>& windows);

struct TrainResult {
  EpochLog log;
  std::optional<double> best_val_auc;
  std::size_t best_epoch = 0;  // 0 means the initial parameters
  ParamStore best_params;
  std::uint64_t steps = 0;
};

/// Seeded shuffled mini-batches, forward, BCE, backward and Adam per batch.
/// After every epoch the training loss/metrics (from the dropout-active
/// predictions made during the epoch) and validation metrics are logged. The
/// parameters of the best validation AUC epoch are kept (last epoch when
/// validation AUC is undefined). Throws NumericalError naming the batch on a
/// non-finite loss.
TrainResult train(model::PicktModel& model, const std::vector<data::SequenceWindow>& train_windows,
                  const std::vector<data::SequenceWindow>& val_windows, const TrainConfig& config,
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

}  // namespace pickt::train
