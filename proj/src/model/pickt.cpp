#include "pickt/model/pickt.hpp"

#include <cmath>

#include "pickt/core/error.hpp"
#include "pickt/core/ops.hpp"

namespace pickt::model {

namespace {

std::vector<std::int32_t> to_i32(const std::vector<Index>& v) { return {v.begin(), v.end()}; }

Tensor lookup(const ParamStore& params, const std::string& name, const std::vector<Index>& ids) {
  const auto idx = to_i32(ids);
  return embedding(params.get(name), idx);
}

Tensor positions(const ParamStore& params, const data::Batch& batch) {
  const Tensor& table = params.get("emb.position");
  if (batch.len > table.dim(0)) {
    throw ContractError("window length " + std::to_string(batch.len) + " exceeds model.max_seq_len " +
                        std::to_string(table.dim(0)));
  }
  std::vector<std::int32_t> pos(std::size_t(batch.batch * batch.len));
  for (std::size_t i = 0; i < pos.size(); ++i) pos[i] = std::int32_t(Index(i) % batch.len);
  return embedding(table, pos);
}

Tensor drop(const Tensor& x, const ModelConfig& c, const ForwardOptions& o) {
  if (!o.training || c.dropout == 0) return x;
  if (!o.rng) throw ContractError("training forward with dropout needs an Rng");
  return dropout(x, c.dropout, *o.rng, true);
}

Tensor norm(const Tensor& x, const ParamStore& p, const std::string& prefix) {
  return layer_norm(x, p.get(prefix + "gain"), p.get(prefix + "bias"));
}

Tensor feed_forward(const Tensor& x, const ParamStore& p, const std::string& prefix) {
  return linear(gelu(linear(x, p.get(prefix + "w1"), p.get(prefix + "b1"))), p.get(prefix + "w2"),
                p.get(prefix + "b2"));
}

void add_attention(ParamStore& p, const std::string& prefix, Index d, Rng& rng) {
  for (const char* m : {"q", "k", "v", "o"}) {
    p.normal(prefix + "w" + m, {d, d}, rng);
    p.zeros(prefix + "b" + m, {d});
  }
}

void add_norm(ParamStore& p, const std::string& prefix, Index d) {
  p.ones(prefix + "gain", {d});
  p.zeros(prefix + "bias", {d});
}

void add_ffn(ParamStore& p, const std::string& prefix, Index d, Index di, Rng& rng) {
  p.normal(prefix + "w1", {d, di}, rng);
  p.zeros(prefix + "b1", {di});
  p.normal(prefix + "w2", {di, d}, rng);
  p.zeros(prefix + "b2", {d});
}

std::string layer_prefix(const char* stack, Index l) { return std::string(stack) + ".layer" + std::to_string(l) + "."; }

}  // namespace

std::vector<Real> causal_mask(const std::vector<Index>& lengths, Index len) {
  std::vector<Real> mask(lengths.size() * std::size_t(len * len), kMaskValue);
  for (std::size_t b = 0; b < lengths.size(); ++b) {
    Real* m = mask.data() + b * std::size_t(len * len);
    for (Index q = 0; q < len; ++q) {
      for (Index k = 0; k <= q && k < lengths[b]; ++k) m[q * len + k] = 0;
    }
  }
  return mask;
}

AttentionWeights AttentionWeights::at(const ParamStore& p, const std::string& prefix) {
  return {&p.get(prefix + "wq"), &p.get(prefix + "bq"), &p.get(prefix + "wk"), &p.get(prefix + "bk"),
          &p.get(prefix + "wv"), &p.get(prefix + "bv"), &p.get(prefix + "wo"), &p.get(prefix + "bo")};
}

Tensor attention_scores(const Tensor& query_in, const Tensor& key_in, const AttentionWeights& w, Index batch,
                        Index len, Index heads) {
  const Tensor q = split_heads(linear(query_in, *w.wq, *w.bq), batch, len, heads);
  const Tensor k = split_heads(linear(key_in, *w.wk, *w.bk), batch, len, heads);
  const Index dk = query_in.dim(1) / heads;
  return scale(bmm(q, k, true), Real(1.0 / std::sqrt(double(dk))));
}

Tensor multi_head_attention(const Tensor& query_in, const Tensor& kv_in, std::span<const Real> mask,
                            const AttentionWeights& w, Index batch, Index len, Index heads, Tensor* weights_out) {
  const Tensor a = softmax(add_mask(attention_scores(query_in, kv_in, w, batch, len, heads), mask, heads));
  if (weights_out) *weights_out = a;
  const Tensor v = split_heads(linear(kv_in, *w.wv, *w.bv), batch, len, heads);
  return linear(merge_heads(bmm(a, v), batch, len, heads), *w.wo, *w.bo);
}

FusedLayerOutput fused_encoder_layer(const Tensor& x_q, const Tensor& x_c, std::span<const Real> mask,
                                     const ParamStore& p, const std::string& prefix, const ModelConfig& c, Index batch,
                                     Index len, const ForwardOptions& o) {
  const AttentionWeights wq = AttentionWeights::at(p, prefix + "q.attn.");
  const AttentionWeights wc = AttentionWeights::at(p, prefix + "c.attn.");
  const Tensor s_q = attention_scores(x_q, x_q, wq, batch, len, c.heads);
  const Tensor s_c = attention_scores(x_c, x_c, wc, batch, len, c.heads);
  const Tensor fused = o.zero_concept_scores ? s_q : add(s_q, s_c);

  FusedLayerOutput out;
  out.attention = softmax(add_mask(fused, mask, c.heads));
  auto finish = [&](const Tensor& x, const AttentionWeights& w, const std::string& s) {
    const Tensor v = split_heads(linear(x, *w.wv, *w.bv), batch, len, c.heads);
    const Tensor attended = linear(merge_heads(bmm(out.attention, v), batch, len, c.heads), *w.wo, *w.bo);
    const Tensor x1 = norm(add(x, drop(attended, c, o)), p, prefix + s + "ln1.");
    return norm(add(x1, drop(feed_forward(x1, p, prefix + s + "ffn."), c, o)), p, prefix + s + "ln2.");
  };
  out.question_stream = finish(x_q, wq, "q.");
  out.concept_stream = finish(x_c, wc, "c.");
  return out;
}

Tensor predict_head(const Tensor& z, const ParamStore& p, const ModelConfig& c, const ForwardOptions& o) {
  const Tensor h = tanh(linear(drop(z, c, o), p.get("head.f1.w"), p.get("head.f1.b")));
  return sigmoid(linear(drop(h, c, o), p.get("head.f2.w"), p.get("head.f2.b")));
}

ParamStore init_params(const ModelConfig& c, std::uint64_t seed) {
  c.validate();
  Rng rng = Rng(seed).split("init");
  ParamStore p;
  const Index d = c.d_hidden;
  p.normal("emb.question.id", {c.vocab.question, d}, rng);
  p.normal("emb.question.type", {c.vocab.question_type, d}, rng);
  p.normal("emb.question.difficulty", {c.vocab.difficulty, d}, rng);
  p.normal("emb.question.discrimination", {c.vocab.discrimination, d}, rng);
  p.normal("emb.question.activity", {c.vocab.activity, d}, rng);
  p.normal("emb.concept.id", {c.vocab.concept_id, d}, rng);
  p.normal("emb.concept.area", {c.vocab.area, d}, rng);
  p.normal("emb.concept.content_type", {c.vocab.content_type, d}, rng);
  p.normal("emb.action.response", {data::kResponseRows, d}, rng);
  p.normal("emb.action.elapsed", {data::kElapsedRows, d}, rng);
  p.normal("emb.action.lag", {data::kLagRows, d}, rng);
  p.normal("emb.position", {c.max_seq_len, d}, rng);
  add_norm(p, "emb.question.ln.", d);
  add_norm(p, "emb.concept.ln.", d);
  add_norm(p, "emb.action.ln.", d);

  for (Index l = 0; l < c.encoder_layers; ++l) {
    const std::string pre = layer_prefix("encoder", l);
    for (const char* s : {"q.", "c."}) {
      add_attention(p, pre + s + "attn.", d, rng);
      add_norm(p, pre + s + "ln1.", d);
      add_ffn(p, pre + s + "ffn.", d, c.d_intermediate, rng);
      add_norm(p, pre + s + "ln2.", d);
    }
  }
  for (Index l = 0; l < c.decoder_layers; ++l) {
    const std::string pre = layer_prefix("decoder", l);
    add_attention(p, pre + "self.", d, rng);
    add_norm(p, pre + "ln1.", d);
    add_attention(p, pre + "cross.", d, rng);
    add_norm(p, pre + "ln2.", d);
    add_ffn(p, pre + "ffn.", d, c.d_intermediate, rng);
    add_norm(p, pre + "ln3.", d);
  }
  p.normal("head.f1.w", {d, d}, rng);
  p.zeros("head.f1.b", {d});
  p.normal("head.f2.w", {d, 1}, rng);
  p.zeros("head.f2.b", {1});

  if (c.han) {
    Rng han_rng = Rng(seed).split("init.han");
    han::han_init(p, c.han_config, han_rng);
  }
  return p;
}

Tensor question_features(const ParamStore& p, const data::Batch& b, const Tensor& han_rows) {
  Tensor x = lookup(p, "emb.question.id", b.question);
  x = add(x, lookup(p, "emb.question.type", b.question_type));
  x = add(x, lookup(p, "emb.question.difficulty", b.difficulty));
  x = add(x, lookup(p, "emb.question.discrimination", b.discrimination));
  x = add(x, lookup(p, "emb.question.activity", b.activity));
  x = add(x, positions(p, b));
  if (han_rows.defined()) x = add(x, gather_rows(han_rows, to_i32(b.question_node)));
  return x;
}

Tensor concept_features(const ParamStore& p, const data::Batch& b, const Tensor& han_rows) {
  Tensor x = lookup(p, "emb.concept.id", b.concept_id);
  x = add(x, lookup(p, "emb.concept.area", b.area));
  x = add(x, lookup(p, "emb.concept.content_type", b.content_type));
  x = add(x, positions(p, b));
  if (han_rows.defined()) x = add(x, gather_rows(han_rows, to_i32(b.concept_node)));
  return x;
}

Tensor action_features(const ParamStore& p, const data::Batch& b) {
  Tensor x = lookup(p, "emb.action.response", b.prev_response);
  x = add(x, lookup(p, "emb.action.elapsed", b.prev_elapsed));
  x = add(x, lookup(p, "emb.action.lag", b.prev_lag));
  return add(x, positions(p, b));
}

PicktModel::PicktModel(ModelConfig config, std::uint64_t seed)
    : config_(std::move(config)), params_(init_params(config_, seed)) {}

PicktModel::PicktModel(ModelConfig config, ParamStore params) : config_(std::move(config)), params_(std::move(params)) {
  const ParamStore layout = init_params(config_, 0);
  if (layout.size() != params_.size()) {
    throw DataError("parameter set holds " + std::to_string(params_.size()) + " tensors, config expects " +
                    std::to_string(layout.size()));
  }
  for (const auto& [name, t] : layout.items()) {
    if (!params_.contains(name)) throw DataError("missing parameter '" + name + "'");
    if (params_.get(name).shape() != t.shape()) {
      throw DataError("parameter '" + name + "' has shape " + shape_str(params_.get(name).shape()) + ", expected " +
                      shape_str(t.shape()));
    }
  }
}

void PicktModel::attach_graph(std::shared_ptr<const han::HeteroGraph> graph) {
  if (!config_.han) return;
  graph->validate();
  metapaths_ = han::build_metapaths(*graph);
  graph_ = std::move(graph);
}

ForwardResult PicktModel::forward(const data::Batch& batch, const ForwardOptions& o) const {
  const ModelConfig& c = config_;
  if (batch.batch == 0 || batch.len == 0) throw ContractError("forward on an empty batch");
  const Index B = batch.batch, L = batch.len;
  const std::vector<Real> mask = causal_mask(batch.lengths, L);
  ForwardResult result;

  Tensor han_q, han_c;
  if (c.han) {
    if (!graph_) throw ContractError("HAN is enabled but no knowledge graph is attached");
    han::HanOutput h = han::han_forward(*graph_, metapaths_, params_, c.han_config);
    han_q = h.questions;
    han_c = h.concepts;
    result.question_beta = std::move(h.question_beta);
    result.concept_beta = std::move(h.concept_beta);
  }

  Tensor xq = drop(norm(question_features(params_, batch, han_q), params_, "emb.question.ln."), c, o);
  Tensor xc = drop(norm(concept_features(params_, batch, han_c), params_, "emb.concept.ln."), c, o);
  for (Index l = 0; l < c.encoder_layers; ++l) {
    FusedLayerOutput f = fused_encoder_layer(xq, xc, mask, params_, layer_prefix("encoder", l), c, B, L, o);
    xq = f.question_stream;
    xc = f.concept_stream;
    if (o.keep_attention) result.encoder_attention.push_back(f.attention);
  }
  const Tensor enc = scale(add(xq, xc), Real(0.5));

  Tensor x = drop(norm(action_features(params_, batch), params_, "emb.action.ln."), c, o);
  for (Index l = 0; l < c.decoder_layers; ++l) {
    const std::string pre = layer_prefix("decoder", l);
    const Tensor self = multi_head_attention(x, x, mask, AttentionWeights::at(params_, pre + "self."), B, L, c.heads);
    x = norm(add(x, drop(self, c, o)), params_, pre + "ln1.");
    const Tensor cross =
        multi_head_attention(x, enc, mask, AttentionWeights::at(params_, pre + "cross."), B, L, c.heads);
    x = norm(add(x, drop(cross, c, o)), params_, pre + "ln2.");
    x = norm(add(x, drop(feed_forward(x, params_, pre + "ffn."), c, o)), params_, pre + "ln3.");
  }
  result.probs = predict_head(x, params_, c, o);
  return result;
}

std::vector<std::uint8_t> loss_mask_bytes(const data::Batch& batch) {
  std::vector<std::uint8_t> m(batch.loss_mask.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = batch.loss_mask[i] != 0 ? 1 : 0;
  return m;
}

}  // namespace pickt::model
