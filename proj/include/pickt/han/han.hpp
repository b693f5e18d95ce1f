#pragma once

#include <span>
#include <string>
#include <vector>

#include "pickt/core/params.hpp"
#include "pickt/core/tensor.hpp"
#include "pickt/han/graph.hpp"

namespace pickt::han {

struct HanConfig {
  Index in_dim = 64;
  Index hidden_dim = 128;
  Index heads = 4;
  Index out_dim = 512;

  Index head_dim() const { return hidden_dim / heads; }
  void validate() const;
};

/// Registers every HAN tensor under `prefix` ("han."): input projections per
/// node type, per-meta-path per-head attention vectors, semantic attention
/// (W, b, q) per node type, output projections. Biases start at zero.
void han_init(ParamStore& params, const HanConfig& config, Rng& rng, const std::string& prefix = "han.");

/// One meta-path, one head. e = LeakyReLU(a_l.h_i + a_r.h_j, 0.2) over each
/// target's neighbours, softmax within the neighbourhood, GELU of the weighted
/// sum. `target` is [n_t x w]; `source` holds the rows neighbour ids refer to.
struct NodeAttention {
  Tensor output;  // [n_t x w]
  Tensor alpha;   // [edges], aligned with adjacency.neighbors
};
NodeAttention node_attention(const Tensor& target, const Tensor& source, const MetaPathAdjacency& adjacency,
                             const Tensor& a_left, const Tensor& a_right);

/// w_p = mean_i q . tanh(W z_i^p + b); beta = softmax(w); Z = sum_p beta_p Z^p.
struct SemanticAttention {
  Tensor output;
  Tensor beta;  // [paths]
};
SemanticAttention semantic_attention(std::span<const Tensor> per_path, const Tensor& w, const Tensor& b,
                                     const Tensor& q);

struct HanOutput {
  Tensor questions;  // [n_q x out_dim]
  Tensor concepts;   // [n_c x out_dim]
  std::vector<Real> question_beta;  // QC, QCQ
  std::vector<Real> concept_beta;   // CC, CQC
};

/// Projection, node attention per meta-path and head, head concatenation,
/// semantic attention and output projection, recorded on the tape.
HanOutput han_forward(const HeteroGraph& graph, const std::vector<MetaPathAdjacency>& metapaths,
                      const ParamStore& params, const HanConfig& config, const std::string& prefix = "han.");

}  // namespace pickt::han
