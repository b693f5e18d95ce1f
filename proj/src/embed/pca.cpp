#include "pickt/embed/pca.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "pickt/core/error.hpp"

namespace pickt::embed {

PcaModel pca_fit(const EmbeddingTable& table, std::size_t k) {
  const std::size_t n = table.rows(), d = table.dim;
  if (k == 0 || k > std::min(n, d)) {
    throw ParameterError("pca_fit: k=" + std::to_string(k) + " exceeds min(n=" + std::to_string(n) +
                         ", d=" + std::to_string(d) + ")");
  }
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) x(Eigen::Index(i), Eigen::Index(j)) = table.row(i)[j];
  }
  const Eigen::RowVectorXd mean = x.colwise().mean();
  x.rowwise() -= mean;
  const double denom = n > 1 ? double(n - 1) : 1.0;
  const Eigen::MatrixXd cov = (x.transpose() * x) / denom;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success) throw NumericalError("pca_fit: eigendecomposition failed");

  PcaModel m;
  m.dim = d;
  m.components = k;
  m.mean.assign(mean.data(), mean.data() + d);
  m.basis.assign(d * k, 0.0);
  const Eigen::VectorXd& values = eig.eigenvalues();  // ascending
  double total = 0.0;
  for (Eigen::Index i = 0; i < values.size(); ++i) total += std::max(0.0, values(i));
  for (std::size_t c = 0; c < k; ++c) {
    const Eigen::Index src = Eigen::Index(d - 1 - c);
    Eigen::VectorXd v = eig.eigenvectors().col(src);
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;
    for (std::size_t j = 0; j < d; ++j) m.basis[j * k + c] = v(Eigen::Index(j));
    const double lambda = std::max(0.0, values(src));
    m.eigenvalues.push_back(lambda);
    m.explained_ratio.push_back(total > 0 ? lambda / total : 0.0);
  }
  return m;
}

EmbeddingTable pca_transform(const PcaModel& model, const EmbeddingTable& table) {
  if (table.dim != model.dim) {
    throw DimensionError("pca_transform: table width " + std::to_string(table.dim) + " vs model width " +
                         std::to_string(model.dim));
  }
  const std::size_t k = model.components, d = model.dim;
  EmbeddingTable out;
  out.ids = table.ids;
  out.dim = k;
  out.source = table.source;
  out.model_tag = table.model_tag;
  out.values.assign(table.rows() * k, 0.0f);
  std::vector<double> centred(d);
  for (std::size_t i = 0; i < table.rows(); ++i) {
    for (std::size_t j = 0; j < d; ++j) centred[j] = double(table.row(i)[j]) - model.mean[j];
    for (std::size_t c = 0; c < k; ++c) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += centred[j] * model.basis[j * k + c];
      out.row(i)[c] = float(s);
    }
  }
  return out;
}

EmbeddingTable pca_reduce(const EmbeddingTable& table, std::size_t k) {
  const std::size_t k_eff = std::min({k, table.rows(), table.dim});
  EmbeddingTable out;
  out.ids = table.ids;
  out.dim = k;
  out.source = table.source;
  out.model_tag = table.model_tag;
  out.values.assign(table.rows() * k, 0.0f);
  if (k_eff == 0) return out;
  const EmbeddingTable reduced = pca_transform(pca_fit(table, k_eff), table);
  for (std::size_t i = 0; i < table.rows(); ++i) std::copy_n(reduced.row(i), k_eff, out.row(i));
  return out;
}

}  // namespace pickt::embed
