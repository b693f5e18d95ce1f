#include "pickt/train/trainer.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include "pickt/core/error.hpp"
#include "pickt/core/ops.hpp"
#include "pickt/core/tape.hpp"

namespace pickt::train {

std::string EpochLog::csv() const {
  std::string out = "epoch,split,loss,acc_wrong,acc_correct,acc_macro,acc_micro,auc\n";
  for (const auto& r : rows) {
    out += std::to_string(r.epoch) + "," + r.split + "," + format_metric(r.loss, 6) + "," +
           format_metric(r.report.acc_wrong, 6) + "," + format_metric(r.report.acc_correct, 6) + "," +
           format_metric(r.report.acc_macro, 6) + "," + format_metric(r.report.acc_micro, 6) + "," +
           format_metric(r.report.auc, 6) + "\n";
  }
  return out;
}

void EpochLog::write_csv(const std::filesystem::path& path) const {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write " + path.string());
  f << csv();
}

namespace {

// Appends scored positions of one batch forward to `out`.
void collect(const data::Batch& b, const Tensor& probs, const std::vector<std::size_t>& members,
             const std::vector<data::SequenceWindow>& windows, Predictions& out) {
  for (Index i = 0; i < b.batch; ++i) {
    const auto& w = windows[members[std::size_t(i)]];
    for (Index t = 0; t < b.lengths[std::size_t(i)]; ++t) {
      if (!w.scored[std::size_t(t)]) continue;
      out.probs.push_back(double(probs.at(i * b.len + t)));
      out.labels.push_back(w.labels[std::size_t(t)]);
      out.window.push_back(members[std::size_t(i)]);
      out.position.push_back(std::size_t(t));
      out.record.push_back(w.records[std::size_t(t)]);
    }
  }
}

std::string batch_students(const std::vector<data::SequenceWindow>& windows, const std::vector<std::size_t>& members) {
  std::string s;
  for (std::size_t m : members) s += (s.empty() ? "" : ",") + windows[m].student_id;
  return s;
}

}  // namespace

Predictions predict(const model::PicktModel& model, const std::vector<data::SequenceWindow>& windows,
                    std::size_t batch_size) {
  if (batch_size == 0) throw ParameterError("batch size must be positive");
  NoGradGuard no_grad;
  Predictions out;
  double loss_sum = 0.0;
  std::size_t valid = 0;
  const model::ForwardOptions opts;
  for (std::size_t start = 0; start < windows.size(); start += batch_size) {
    std::vector<std::size_t> members(std::min(batch_size, windows.size() - start));
    std::iota(members.begin(), members.end(), start);
    const data::Batch b = data::make_batch(windows, members);
    if (b.scored_count() == 0) continue;
    const model::ForwardResult r = model.forward(b, opts);
    const auto mask = model::loss_mask_bytes(b);
    const BceResult l = bce_loss(r.probs, b.labels, mask);
    if (!std::isfinite(double(l.loss.item())))
      throw NumericalError("non-finite prediction in evaluation batch " + std::to_string(start / batch_size) +
                           " (students " + batch_students(windows, members) + ")");
    loss_sum += double(l.loss.item()) * double(l.valid_count);
    valid += std::size_t(l.valid_count);
    collect(b, r.probs, members, windows, out);
  }
  out.loss = valid ? loss_sum / double(valid) : 0.0;
  return out;
}

EvalReport evaluate(const model::PicktModel& model, const std::vector<data::SequenceWindow>& windows,
                    std::size_t batch_size, double* loss) {
  const Predictions p = predict(model, windows, batch_size);
  if (loss) *loss = p.loss;
  return compute_metrics(p.probs, p.labels);
}

std::vector<StudentPredictions> by_student(const Predictions& p, const std::vector<data::SequenceWindow>& windows) {
  std::map<std::string, StudentPredictions> m;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const std::string& s = windows[p.window[i]].student_id;
    auto& sp = m[s];
    sp.student_id = s;
    sp.probs.push_back(p.probs[i]);
    sp.labels.push_back(p.labels[i]);
  }
  std::vector<StudentPredictions> out;
  for (auto& [id, sp] : m) out.push_back(std::move(sp));
  return out;
}

TrainResult train(model::PicktModel& model, const std::vector<data::SequenceWindow>& train_windows,
                  const std::vector<data::SequenceWindow>& val_windows, const TrainConfig& config,
                  const std::function<void(const EpochRecord&)>& on_epoch) {
  if (config.batch_size == 0) throw ParameterError("train.batch_size must be positive");
  if (!(config.learning_rate > 0)) throw ParameterError("train.lr must be positive");
  TrainResult result;
  result.best_params = model.params().clone();
  AdamConfig adam_config;
  adam_config.learning_rate = config.learning_rate;
  AdamState adam(adam_config);
  const Rng root(config.seed);
  ParamStore& params = model.params();
  params.zero_grad();

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::vector<std::size_t> order(train_windows.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng = root.split("shuffle").split(epoch);
    shuffle(order.begin(), order.end(), shuffle_rng);
    Rng dropout_rng = root.split("dropout").split(epoch);
    model::ForwardOptions opts;
    opts.training = true;
    opts.rng = &dropout_rng;

    Predictions seen;
    double loss_sum = 0.0;
    std::size_t valid = 0;
    for (std::size_t start = 0, batch_id = 0; start < order.size(); start += config.batch_size, ++batch_id) {
      const std::vector<std::size_t> members(order.begin() + std::ptrdiff_t(start),
                                             order.begin() + std::ptrdiff_t(std::min(order.size(), start + config.batch_size)));
      const data::Batch b = data::make_batch(train_windows, members);
      if (b.scored_count() == 0) continue;
      const model::ForwardResult r = model.forward(b, opts);
      const auto mask = model::loss_mask_bytes(b);
      const BceResult l = bce_loss(r.probs, b.labels, mask);
      const double loss = double(l.loss.item());
      if (!std::isfinite(loss)) {
        current_tape().clear();
        throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                             std::to_string(batch_id) + " (students " + batch_students(train_windows, members) + ")");
      }
      backward(l.loss);
      adam_step(params, adam);
      params.zero_grad();
      ++result.steps;
      loss_sum += loss * double(l.valid_count);
      valid += std::size_t(l.valid_count);
      collect(b, r.probs, members, train_windows, seen);
    }

    EpochRecord tr{epoch, "train", valid ? loss_sum / double(valid) : 0.0, compute_metrics(seen.probs, seen.labels)};
    result.log.rows.push_back(tr);
    if (on_epoch) on_epoch(tr);

    double val_loss = 0.0;
    EpochRecord va{epoch, "val", 0.0, evaluate(model, val_windows, config.eval_batch_size, &val_loss)};
    va.loss = val_loss;
    result.log.rows.push_back(va);
    if (on_epoch) on_epoch(va);

    const bool better = va.report.auc && (!result.best_val_auc || *va.report.auc > *result.best_val_auc);
    if (better || (!va.report.auc && !result.best_val_auc)) {
      if (va.report.auc) result.best_val_auc = va.report.auc;
      result.best_epoch = epoch;
      result.best_params = params.clone();
    }
  }
  return result;
}

}  // namespace pickt::train
