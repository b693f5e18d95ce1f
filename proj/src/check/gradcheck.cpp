#include "pickt/check/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "pickt/core/error.hpp"
#include "pickt/core/ops.hpp"
#include "pickt/core/tape.hpp"
#include "pickt/data/synth.hpp"
#include "pickt/han/han.hpp"
#include "pickt/model/pickt.hpp"
#include "pickt/train/experiment.hpp"

namespace pickt::check {

namespace {

Tensor random(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0, bool grad = true) {
  std::vector<Real> v(std::size_t(shape_numel(shape)));
  for (auto& x : v) x = Real(lo + (hi - lo) * rng.uniform());
  return Tensor::from(std::move(shape), std::move(v), grad);
}

// Uniform in +-[lo, hi], away from a kink at 0.
Tensor away_from_zero(Shape shape, Rng& rng, double lo, double hi) {
  Tensor t = random(std::move(shape), rng, lo, hi);
  for (auto& x : t.data()) x = rng.uniform() < 0.5 ? -x : x;
  return t;
}

double dot(const Tensor& y, const std::vector<double>& r) {
  double s = 0.0;
  for (Index i = 0; i < y.numel(); ++i) s += double(y.at(i)) * r[std::size_t(i)];
  return s;
}

}  // namespace

GradCheckResult gradcheck(const std::string& name, const TensorFn& fn, std::vector<Tensor> inputs,
                          const GradCheckOptions& o) {
  GradCheckResult res;
  res.name = name;
  current_tape().clear();
  for (auto& t : inputs) t.zero_grad();

  std::vector<double> r;
  {
    const Tensor y = fn(inputs);
    Rng rng = Rng(o.seed).split("projection");
    r.resize(std::size_t(y.numel()));
    for (auto& x : r) x = rng.uniform() * 2.0 - 1.0;
    std::vector<Real> rv(r.begin(), r.end());
    const Tensor loss = sum(mul(y, Tensor::from(y.shape(), std::move(rv))));
    backward(loss);
  }

  std::vector<std::vector<Real>> analytic;
  for (const auto& t : inputs) {
    analytic.emplace_back(t.requires_grad() ? std::vector<Real>(t.grad().begin(), t.grad().end()) : std::vector<Real>{});
  }

  NoGradGuard no_grad;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor& t = inputs[k];
    if (!t.requires_grad()) continue;
    auto values = t.data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const Real saved = values[i];
      values[i] = Real(double(saved) + o.step);
      const double up = dot(fn(inputs), r);
      values[i] = Real(double(saved) - o.step);
      const double down = dot(fn(inputs), r);
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * o.step);
      const double a = double(analytic[k][i]);
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), o.floor});
      res.max_rel_error = std::max(res.max_rel_error, err);
      ++res.checked;
    }
  }
  res.passed = res.checked > 0 && res.max_rel_error < o.tolerance;
  return res;
}

std::vector<GradCheckResult> op_suite(const GradCheckOptions& o) {
  Rng rng = Rng(o.seed).split("ops");
  std::vector<GradCheckResult> out;
  auto run = [&](const std::string& name, const TensorFn& fn, std::vector<Tensor> in) {
    out.push_back(gradcheck(name, fn, std::move(in), o));
  };
  using V = const std::vector<Tensor>&;

  run("matmul", [](V x) { return matmul(x[0], x[1]); }, {random({3, 4}, rng), random({4, 2}, rng)});
  run("bmm", [](V x) { return bmm(x[0], x[1]); }, {random({2, 3, 4}, rng), random({2, 4, 2}, rng)});
  run("bmm_trans_b", [](V x) { return bmm(x[0], x[1], true); }, {random({2, 3, 4}, rng), random({2, 5, 4}, rng)});
  run("linear", [](V x) { return linear(x[0], x[1], x[2]); }, {random({3, 4}, rng), random({4, 5}, rng), random({5}, rng)});
  run("add", [](V x) { return add(x[0], x[1]); }, {random({2, 3}, rng), random({2, 3}, rng)});
  run("sub", [](V x) { return sub(x[0], x[1]); }, {random({2, 3}, rng), random({2, 3}, rng)});
  run("mul", [](V x) { return mul(x[0], x[1]); }, {random({2, 3}, rng), random({2, 3}, rng)});
  run("scale", [](V x) { return scale(x[0], Real(-1.7)); }, {random({2, 3}, rng)});
  run("add_bias", [](V x) { return add_bias(x[0], x[1]); }, {random({2, 3, 4}, rng), random({4}, rng)});
  run("gelu", [](V x) { return gelu(x[0]); }, {random({3, 4}, rng, -3.0, 3.0)});
  run("tanh", [](V x) { return tanh(x[0]); }, {random({3, 4}, rng, -2.0, 2.0)});
  run("sigmoid", [](V x) { return sigmoid(x[0]); }, {random({3, 4}, rng, -4.0, 4.0)});
  run("leaky_relu", [](V x) { return leaky_relu(x[0], Real(0.2)); }, {away_from_zero({3, 4}, rng, 0.05, 2.0)});
  run("softmax", [](V x) { return softmax(x[0]); }, {random({3, 5}, rng, -2.0, 2.0)});
  run("layer_norm", [](V x) { return layer_norm(x[0], x[1], x[2]); },
      {random({3, 6}, rng, -2.0, 2.0), random({6}, rng, 0.5, 1.5), random({6}, rng)});
  run("dropout", [](V x) {
        Rng r(11);
        return dropout(x[0], Real(0.3), r, true);
      },
      {random({4, 5}, rng)});
  run("reshape", [](V x) { return reshape(x[0], {3, 4}); }, {random({2, 6}, rng)});
  run("concat_cols", [](V x) { return concat_cols(std::span<const Tensor>(x.data(), 2)); },
      {random({3, 2}, rng), random({3, 4}, rng)});
  run("concat_rows", [](V x) { return concat_rows(std::span<const Tensor>(x.data(), 2)); },
      {random({2, 3}, rng), random({4, 3}, rng)});
  run("slice_cols", [](V x) { return slice_cols(x[0], 1, 3); }, {random({3, 5}, rng)});
  run("slice_rows", [](V x) { return slice_rows(x[0], 1, 2); }, {random({4, 3}, rng)});
  run("split_heads", [](V x) { return split_heads(x[0], 2, 3, 2); }, {random({6, 4}, rng)});
  run("merge_heads", [](V x) { return merge_heads(x[0], 2, 3, 2); }, {random({4, 3, 2}, rng)});
  const std::vector<std::int32_t> ids{2, 0, 2, 1};
  run("embedding", [ids](V x) { return embedding(x[0], ids); }, {random({3, 4}, rng)});
  const std::vector<std::int32_t> gidx{1, -1, 0, 1};
  run("gather_rows", [gidx](V x) { return gather_rows(x[0], gidx); }, {random({3, 4}, rng)});
  const std::vector<std::int32_t> sidx{4, 0, 4, 2};
  run("index_select", [sidx](V x) { return index_select(x[0], sidx); }, {random({5}, rng)});
  std::vector<Real> mask(2 * 3 * 3, 0);
  // A finite mask value: x - 1e9 swallows the difference step.
  mask[1] = mask[2] = mask[5] = Real(-3);
  run("add_mask", [mask](V x) { return add_mask(x[0], mask, 2); }, {random({4, 3, 3}, rng)});
  const std::vector<Index> offsets{0, 2, 3, 6};
  run("segment_softmax", [offsets](V x) { return segment_softmax(x[0], offsets); }, {random({6}, rng, -2.0, 2.0)});
  const std::vector<std::int32_t> nbr{0, 3, 1, 0, 2, 3};
  run("neighbor_aggregate", [nbr, offsets](V x) { return neighbor_aggregate(x[0], nbr, x[1], offsets); },
      {random({4, 3}, rng), random({6}, rng, 0.0, 1.0)});
  run("sum", [](V x) { return sum(x[0]); }, {random({3, 4}, rng)});
  run("mean", [](V x) { return mean(x[0]); }, {random({3, 4}, rng)});
  run("mean_rows", [](V x) { return mean_rows(x[0]); }, {random({4, 3}, rng)});
  run("stack", [](V x) { return stack(x); }, {random({1}, rng), random({1}, rng), random({1}, rng)});
  run("weighted_sum", [](V x) { return weighted_sum(std::span<const Tensor>(x.data(), 2), x[2]); },
      {random({2, 3}, rng), random({2, 3}, rng), random({2}, rng)});
  const std::vector<Real> labels{1, 0, 1, 0, 1};
  const std::vector<std::uint8_t> bmask{1, 1, 0, 1, 1};
  run("bce_loss", [labels, bmask](V x) { return bce_loss(x[0], labels, bmask).loss; },
      {random({5, 1}, rng, 0.05, 0.95)});
  return out;
}

GradCheckResult model_check(const GradCheckOptions& o) {
  data::SynthOptions so;
  so.students = 2;
  so.questions = 8;
  so.concepts = 3;
  so.min_interactions = 4;
  so.max_interactions = 6;
  so.seed = o.seed;
  const data::Dataset ds = data::synth_generate(so);
  const data::Vocabularies vocab = data::Vocabularies::build(ds);
  model::ModelConfig cfg = model::ModelConfig::tiny(model::VocabSizes::from(vocab));
  train::GraphOptions go;
  go.in_dim = std::size_t(cfg.han_config.in_dim);
  go.hash_dim = 16;
  const train::GraphBuild graph = train::build_graph(ds, go);

  model::PicktModel m(cfg, o.seed);
  m.attach_graph(graph.graph);
  Rng jitter = Rng(o.seed).split("jitter");
  std::vector<Tensor> params;
  for (auto& [name, t] : m.params().items()) {
    for (auto& x : t.data()) x = Real(double(x) + jitter.normal(0.0, 0.3));
    params.push_back(t);
  }

  const data::FeatureEncoder encoder(ds, vocab);
  const auto windows = data::window_sequences(encoder, std::size_t(cfg.max_seq_len), nullptr);
  const data::Batch batch = data::make_batch(windows);
  const auto mask = model::loss_mask_bytes(batch);
  const TensorFn fn = [&](const std::vector<Tensor>&) {
    const model::ForwardResult r = m.forward(batch, {});
    return bce_loss(r.probs, batch.labels, mask).loss;
  };
  return gradcheck("model.tiny", fn, params, o);
}

}  // namespace pickt::check
