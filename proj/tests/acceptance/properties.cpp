#include "properties.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "pickt/core/ops.hpp"
#include "pickt/core/rng.hpp"
#include "pickt/core/tape.hpp"
#include "pickt/data/synth.hpp"
#include "pickt/han/han.hpp"
#include "pickt/model/pickt.hpp"
#include "pickt/train/experiment.hpp"
#include "pickt/train/metrics.hpp"

using namespace pickt;

namespace props {

namespace {

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

struct Bench {
  data::Dataset ds;
  data::Vocabularies vocab;
  model::ModelConfig cfg;
  train::GraphBuild graph;
  std::vector<data::SequenceWindow> windows;
};

std::unique_ptr<Bench> make_bench(std::uint64_t seed, Index max_len) {
  auto b = std::make_unique<Bench>();
  data::SynthOptions so;
  so.students = 30;
  so.questions = 40;
  so.concepts = 8;
  so.min_interactions = 3;
  so.max_interactions = 30;
  so.seed = seed;
  b->ds = data::synth_generate(so);
  b->vocab = data::Vocabularies::build(b->ds);
  b->cfg = model::ModelConfig::selected(model::VocabSizes::from(b->vocab));
  b->cfg.encoder_layers = b->cfg.decoder_layers = 2;
  b->cfg.heads = 2;
  b->cfg.d_hidden = b->cfg.d_intermediate = 16;
  b->cfg.max_seq_len = max_len;
  b->cfg.han_config = {8, 8, 2, 16};
  train::GraphOptions go;
  go.in_dim = 8;
  go.hash_dim = 32;
  b->graph = train::build_graph(b->ds, go);
  const data::FeatureEncoder enc(b->ds, b->vocab);
  b->windows = data::window_sequences(enc, std::size_t(max_len));
  return b;
}

data::Batch random_batch(const Bench& b, Rng& rng) {
  const std::size_t n = 1 + rng.uniform_int(4);
  std::vector<std::size_t> members;
  for (std::size_t i = 0; i < n; ++i) members.push_back(rng.uniform_int(b.windows.size()));
  return data::make_batch(b.windows, members);
}

Index pick(Rng& rng, Index n) { return Index(rng.uniform_int(std::uint64_t(n))); }

// Replace every input at positions > t with fresh random values.
void scramble_after(data::Batch& x, Index t, const model::ModelConfig& c, Index nq, Index nc, Rng& rng) {
  for (Index b = 0; b < x.batch; ++b) {
    for (Index s = t + 1; s < x.len; ++s) {
      const auto i = std::size_t(b * x.len + s);
      x.question[i] = pick(rng, c.vocab.question);
      x.question_type[i] = pick(rng, c.vocab.question_type);
      x.difficulty[i] = pick(rng, c.vocab.difficulty);
      x.discrimination[i] = pick(rng, c.vocab.discrimination);
      x.activity[i] = pick(rng, c.vocab.activity);
      x.question_node[i] = pick(rng, nq + 1) - 1;
      x.concept_id[i] = pick(rng, c.vocab.concept_id);
      x.area[i] = pick(rng, c.vocab.area);
      x.content_type[i] = pick(rng, c.vocab.content_type);
      x.concept_node[i] = pick(rng, nc + 1) - 1;
      x.prev_response[i] = pick(rng, data::kResponseRows);
      x.prev_elapsed[i] = pick(rng, data::kElapsedRows);
      x.prev_lag[i] = pick(rng, data::kLagRows);
      x.labels[i] = Real(pick(rng, 2));
    }
  }
}

}  // namespace

Outcome causality(std::size_t batches, std::uint64_t seed) {
  const auto bench = make_bench(seed, 12);
  model::PicktModel m(bench->cfg, seed);
  m.attach_graph(bench->graph.graph);
  Rng rng = Rng(seed).split("causality");
  NoGradGuard ng;
  Outcome o;
  std::size_t changed = 0, compared = 0;
  for (std::size_t i = 0; i < batches; ++i) {
    data::Batch x = random_batch(*bench, rng);
    if (x.len < 2) x = data::make_batch(bench->windows, {0, 1});
    const Index t = pick(rng, x.len - 1);
    data::Batch y = x;
    scramble_after(y, t, bench->cfg, bench->graph.graph->questions(), bench->graph.graph->concepts(), rng);

    const bool training = i % 2 == 1;
    Rng dx = Rng(seed).split("dropout").split(i), dy = dx;
    model::ForwardOptions ox, oy;
    ox.training = oy.training = training;
    ox.rng = &dx;
    oy.rng = &dy;
    const Tensor px = m.forward(x, ox).probs;
    const Tensor py = m.forward(y, oy).probs;
    for (Index b = 0; b < x.batch; ++b) {
      for (Index s = 0; s <= t && s < x.lengths[std::size_t(b)]; ++s) {
        ++compared;
        if (px.at(b * x.len + s) != py.at(b * x.len + s)) ++changed;
      }
    }
    ++o.cases;
  }
  o.value = double(changed);
  o.passed = changed == 0 && compared > 0;
  o.detail = std::to_string(compared) + " earlier predictions compared, " + std::to_string(changed) + " changed";
  return o;
}

Outcome fusion_identity(std::size_t trials, std::uint64_t seed, double tolerance) {
  const auto bench = make_bench(seed, 10);
  model::PicktModel m(bench->cfg, seed);
  m.attach_graph(bench->graph.graph);
  const model::ModelConfig& c = bench->cfg;
  Rng rng = Rng(seed).split("fusion");
  NoGradGuard ng;
  Outcome o;
  double worst = 0.0;
  bool model_uses_layer = true;
  for (std::size_t trial = 0; trial < trials; ++trial) {
    const data::Batch x = random_batch(*bench, rng);
    const Index B = x.batch, L = x.len, H = c.heads, d = c.d_hidden, dk = d / H;
    const std::vector<Real> mask = model::causal_mask(x.lengths, L);
    model::ForwardOptions opt;
    opt.zero_concept_scores = true;
    opt.keep_attention = true;
    const model::ForwardResult full = m.forward(x, opt);

    const han::HanOutput h = han::han_forward(*bench->graph.graph, han::build_metapaths(*bench->graph.graph), m.params(),
                                              c.han_config);
    const ParamStore& p = m.params();
    Tensor xq = layer_norm(model::question_features(p, x, h.questions), p.get("emb.question.ln.gain"),
                           p.get("emb.question.ln.bias"));
    Tensor xc = layer_norm(model::concept_features(p, x, h.concepts), p.get("emb.concept.ln.gain"),
                           p.get("emb.concept.ln.bias"));
    for (Index l = 0; l < c.encoder_layers; ++l) {
      const std::string pre = "encoder.layer" + std::to_string(l) + ".";
      const model::FusedLayerOutput f = model::fused_encoder_layer(xq, xc, mask, p, pre, c, B, L, opt);
      const Tensor& wq = p.get(pre + "q.attn.wq");
      const Tensor& bq = p.get(pre + "q.attn.bq");
      const Tensor& wk = p.get(pre + "q.attn.wk");
      const Tensor& bk = p.get(pre + "q.attn.bk");
      // Oracle: per-head scaled dot products of the question stream only.
      std::vector<double> Q(std::size_t(B * L * d)), K(std::size_t(B * L * d));
      for (Index r = 0; r < B * L; ++r)
        for (Index j = 0; j < d; ++j) {
          double q = bq.at(j), k = bk.at(j);
          for (Index i = 0; i < d; ++i) {
            q += double(xq.at(r * d + i)) * wq.at(i * d + j);
            k += double(xq.at(r * d + i)) * wk.at(i * d + j);
          }
          Q[std::size_t(r * d + j)] = q;
          K[std::size_t(r * d + j)] = k;
        }
      for (Index b = 0; b < B; ++b)
        for (Index hh = 0; hh < H; ++hh)
          for (Index qi = 0; qi < L; ++qi) {
            std::vector<double> row(static_cast<std::size_t>(L));
            double mx = -1e300;
            for (Index ki = 0; ki < L; ++ki) {
              double s = 0;
              for (Index j = 0; j < dk; ++j)
                s += Q[std::size_t((b * L + qi) * d + hh * dk + j)] * K[std::size_t((b * L + ki) * d + hh * dk + j)];
              s = s / std::sqrt(double(dk)) + mask[std::size_t((b * L + qi) * L + ki)];
              row[std::size_t(ki)] = s;
              mx = std::max(mx, s);
            }
            double z = 0;
            for (double& v : row) z += (v = std::exp(v - mx));
            for (Index ki = 0; ki < L; ++ki) {
              const Index at = ((b * H + hh) * L + qi) * L + ki;
              worst = std::max(worst, std::abs(row[std::size_t(ki)] / z - double(f.attention.at(at))));
              if (f.attention.at(at) != full.encoder_attention[std::size_t(l)].at(at)) model_uses_layer = false;
            }
          }
      xq = f.question_stream;
      xc = f.concept_stream;
    }
    ++o.cases;
  }
  o.value = worst;
  o.passed = worst <= tolerance && model_uses_layer;
  o.detail = "max |attention - softmax(question scores)| = " + sci(worst) +
             (model_uses_layer ? "" : "; model attention differs from the layer chain");
  return o;
}

double pairwise_auc(const std::vector<double>& probs, const std::vector<int>& labels) {
  long long twice = 0, pairs = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < probs.size(); ++j) {
      if (labels[j] != 0) continue;
      ++pairs;
      if (probs[i] > probs[j]) twice += 2;
      else if (probs[i] == probs[j]) twice += 1;
    }
  }
  if (pairs == 0) return -1.0;
  return double(twice) / double(2 * pairs);
}

Outcome metric_oracle(std::size_t vectors, std::size_t max_n, std::uint64_t seed) {
  Rng rng = Rng(seed).split("metrics");
  Outcome o;
  double worst = 0.0;
  bool ok = true;
  for (std::size_t v = 0; v < vectors; ++v) {
    const std::size_t n = v == 0 ? max_n : 1 + rng.uniform_int(max_n);
    const int levels = int(rng.uniform_int(4));  // 0: continuous, else 2..~20 distinct values
    const double pos_rate = rng.uniform();
    std::vector<double> p(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      p[i] = levels == 0 ? rng.uniform() : double(rng.uniform_int(std::uint64_t(levels * 6 - 4))) / double(levels * 6 - 5);
      y[i] = rng.uniform() < pos_rate ? 1 : 0;
    }
    const train::EvalReport r = train::compute_metrics(p, y);
    const double oracle = pairwise_auc(p, y);
    if (oracle < 0) {
      ok = ok && !r.auc;
    } else if (!r.auc) {
      ok = false;
    } else {
      worst = std::max(worst, std::abs(*r.auc - oracle));
      ok = ok && *r.auc == oracle;
    }
    std::size_t w = 0, c = 0, wh = 0, ch = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (y[i] == 1) {
        ++c;
        ch += p[i] >= 0.5;
      } else {
        ++w;
        wh += p[i] < 0.5;
      }
    }
    ok = ok && r.wrong_total == w && r.correct_total == c && r.wrong_hits == wh && r.correct_hits == ch;
    ok = ok && r.acc_micro && *r.acc_micro == double(wh + ch) / double(n);
    if (w > 0 && c > 0) {
      ok = ok && r.acc_macro && *r.acc_macro == (*r.acc_wrong + *r.acc_correct) / 2;
    } else {
      ok = ok && !r.acc_macro;
    }
    ++o.cases;
  }
  o.value = worst;
  o.passed = ok;
  o.detail = "max |rank AUC - pairwise AUC| = " + sci(worst);
  return o;
}

}  // namespace props
