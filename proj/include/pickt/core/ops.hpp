#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pickt/core/rng.hpp"
#include "pickt/core/tensor.hpp"

// Differentiable tensor operations. Each op computes its forward value
// eagerly and, when gradients are enabled and some input requires them,
// records a backward rule on the calling thread's tape.
namespace pickt {

// --- linear algebra -------------------------------------------------------

/// [m x k] * [k x n] -> [m x n]
Tensor matmul(const Tensor& a, const Tensor& b);
/// Batched product over the leading axis: [g x m x k] * [g x k x n], or
/// [g x m x k] * [g x n x k]^T when trans_b.
Tensor bmm(const Tensor& a, const Tensor& b, bool trans_b = false);
/// x[..., in] * w[in x out] + bias[out]. `bias` may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);

// --- elementwise ------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, Real factor);
/// x[..., n] + bias[n], broadcast over leading axes.
Tensor add_bias(const Tensor& x, const Tensor& bias);

/// x * Phi(x) with the exact normal CDF.
Tensor gelu(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor leaky_relu(const Tensor& x, Real slope);

/// Softmax over the last axis, max-subtracted.
Tensor softmax(const Tensor& x);
/// Per-row normalisation over the last axis followed by gain/bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, Real eps = Real(1e-12));
/// Inverted dropout. Identity when !training or p == 0. Requires 0 <= p < 1.
Tensor dropout(const Tensor& x, Real p, Rng& rng, bool training);

// --- shape ------------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor slice_cols(const Tensor& x, Index start, Index width);
Tensor slice_rows(const Tensor& x, Index start, Index count);
/// [batch*len x heads*dk] -> [batch*heads x len x dk]
Tensor split_heads(const Tensor& x, Index batch, Index len, Index heads);
/// [batch*heads x len x dk] -> [batch*len x heads*dk]
Tensor merge_heads(const Tensor& x, Index batch, Index len, Index heads);

// --- lookup -----------------------------------------------------------------

/// Rows of `table` selected by `ids`; throws ContractError for ids outside [0, rows).
Tensor embedding(const Tensor& table, std::span<const std::int32_t> ids);
/// Like embedding, but index -1 yields a zero row.
Tensor gather_rows(const Tensor& x, std::span<const std::int32_t> idx);
/// 1-D gather from a [n] or [n x 1] tensor.
Tensor index_select(const Tensor& x, std::span<const std::int32_t> idx);

// --- attention helpers ------------------------------------------------------

/// scores[batch*heads x lq x lk] + mask[batch x lq x lk] (constant).
Tensor add_mask(const Tensor& scores, std::span<const Real> mask, Index heads);
/// Softmax within each segment [offsets[t], offsets[t+1]) of a flat score vector.
Tensor segment_softmax(const Tensor& scores, std::span<const Index> offsets);
/// out[t] = sum over e in segment t of weights[e] * src[neighbors[e]].
Tensor neighbor_aggregate(const Tensor& src, std::span<const std::int32_t> neighbors, const Tensor& weights,
                          std::span<const Index> offsets);

// --- reductions -------------------------------------------------------------

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
/// [n x w] -> [w]
Tensor mean_rows(const Tensor& x);
/// Packs scalar tensors into a vector [p].
Tensor stack(std::span<const Tensor> scalars);
/// sum_p weights[p] * xs[p] over same-shaped tensors.
Tensor weighted_sum(std::span<const Tensor> xs, const Tensor& weights);

struct BceResult {
  Tensor loss;             // scalar
  Index valid_count = 0;   // T in the mean
  bool empty() const { return valid_count == 0; }
};

inline constexpr Real kProbClamp = Real(1e-7);

/// Mean binary cross-entropy over positions with mask != 0. Probabilities
/// are clamped to [1e-7, 1 - 1e-7]. With no valid position the loss is 0.
BceResult bce_loss(const Tensor& probs, std::span<const Real> labels, std::span<const std::uint8_t> mask);

/// Exact standard normal CDF.
double normal_cdf(double x);

}  // namespace pickt
