#pragma once

#include <cstddef>
#include <vector>

#include "pickt/embed/embedding.hpp"

namespace pickt::embed {

struct PcaModel {
  std::size_t dim = 0;         // input width d
  std::size_t components = 0;  // k
  std::vector<double> mean;    // d
  std::vector<double> basis;   // d x k row-major, orthonormal columns
  std::vector<double> eigenvalues;     // k, covariance eigenvalues (n-1 normalised)
  std::vector<double> explained_ratio;  // k, non-increasing
};

/// Top-k principal components from the sample covariance. The largest-magnitude
/// entry of each component is made positive. Throws ParameterError when
/// k > min(n, d) or k == 0.
PcaModel pca_fit(const EmbeddingTable& table, std::size_t k);

/// (x - mean) * basis for every row; DimensionError when widths differ.
EmbeddingTable pca_transform(const PcaModel& model, const EmbeddingTable& table);

/// Fits on `table` with k_eff = min(k, n, d), transforms, and zero-pads columns
/// up to k so tiny graphs still produce k-wide features.
EmbeddingTable pca_reduce(const EmbeddingTable& table, std::size_t k);

}  // namespace pickt::embed
