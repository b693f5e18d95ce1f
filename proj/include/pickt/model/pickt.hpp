#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "pickt/core/params.hpp"
#include "pickt/core/rng.hpp"
#include "pickt/data/features.hpp"
#include "pickt/han/graph.hpp"
#include "pickt/han/han.hpp"
#include "pickt/model/config.hpp"

namespace pickt::model {

inline constexpr Real kMaskValue = Real(-1e9);

/// Causal plus key-padding mask [B x L x L]: 0 where key <= query and key is
/// inside the window, -1e9 elsewhere.
std::vector<Real> causal_mask(const std::vector<Index>& lengths, Index len);

/// Per-call switches. `rng` is required when training with dropout > 0.
struct ForwardOptions {
  bool training = false;
  Rng* rng = nullptr;
  bool zero_concept_scores = false;  // drop the concept stream's scores from the fused sum
  bool keep_attention = false;       // fill ForwardResult::encoder_attention
};

/// Attention projections of one block under `prefix` (wq,bq,wk,bk,wv,bv,wo,bo).
struct AttentionWeights {
  const Tensor *wq, *bq, *wk, *bk, *wv, *bv, *wo, *bo;
  static AttentionWeights at(const ParamStore& params, const std::string& prefix);
};

/// Scaled dot-product scores per head, [B*h x lq x lk], before masking.
Tensor attention_scores(const Tensor& query_in, const Tensor& key_in, const AttentionWeights& w, Index batch,
                        Index len, Index heads);

/// Standard multi-head attention with output projection. `weights_out`, when
/// given, receives the softmaxed attention [B*h x L x L].
Tensor multi_head_attention(const Tensor& query_in, const Tensor& kv_in, std::span<const Real> mask,
                            const AttentionWeights& w, Index batch, Index len, Index heads,
                            Tensor* weights_out = nullptr);

struct FusedLayerOutput {
  Tensor question_stream;
  Tensor concept_stream;
  Tensor attention;  // shared softmax weights [B*h x L x L]
};

/// One encoder layer: each stream forms its own scores, the two score tensors
/// are summed before one shared softmax, and each stream aggregates its own
/// values with those weights, then output projection, residual, layer norm,
/// feed-forward, residual, layer norm.
FusedLayerOutput fused_encoder_layer(const Tensor& x_q, const Tensor& x_c, std::span<const Real> mask,
                                     const ParamStore& params, const std::string& prefix, const ModelConfig& config,
                                     Index batch, Index len, const ForwardOptions& options);

/// sigmoid(f2(dropout(tanh(f1(dropout(z)))))) -> [rows x 1]
Tensor predict_head(const Tensor& z, const ParamStore& params, const ModelConfig& config,
                    const ForwardOptions& options);

/// Registers every model tensor: N(0, 0.02^2) weights, zero biases, unit
/// layer-norm gains. HAN tensors only when config.han.
ParamStore init_params(const ModelConfig& config, std::uint64_t seed);

/// Sum of the categorical, position and HAN rows for each stream, before
/// layer norm. HAN rows come from `han_rows` ([n_nodes x d]) when defined.
Tensor question_features(const ParamStore& params, const data::Batch& batch, const Tensor& han_rows);
Tensor concept_features(const ParamStore& params, const data::Batch& batch, const Tensor& han_rows);
Tensor action_features(const ParamStore& params, const data::Batch& batch);

struct ForwardResult {
  Tensor probs;  // [B*L x 1], padded positions included
  std::vector<Tensor> encoder_attention;
  std::vector<Real> question_beta;
  std::vector<Real> concept_beta;
};

/// Parameters plus the read-only knowledge graph the HAN runs over.
class PicktModel {
 public:
  PicktModel(ModelConfig config, std::uint64_t seed);
  PicktModel(ModelConfig config, ParamStore params);

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  /// Required before forward when config.han; ignored otherwise.
  void attach_graph(std::shared_ptr<const han::HeteroGraph> graph);
  const han::HeteroGraph* graph() const { return graph_.get(); }

  ForwardResult forward(const data::Batch& batch, const ForwardOptions& options) const;

 private:
  ModelConfig config_;
  ParamStore params_;
  std::shared_ptr<const han::HeteroGraph> graph_;
  std::vector<han::MetaPathAdjacency> metapaths_;
};

/// Loss mask of a batch as bytes, for bce_loss.
std::vector<std::uint8_t> loss_mask_bytes(const data::Batch& batch);

}  // namespace pickt::model
