#include <cmath>
#include <fstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "pickt/core/error.hpp"
#include "pickt/core/rng.hpp"
#include "pickt/embed/embedding.hpp"
#include "pickt/embed/pca.hpp"

using namespace pickt;
using namespace pickt::embed;

namespace {

// Cyclic Jacobi eigenvalue iteration on a symmetric matrix; returns
// eigenvalues descending with eigenvectors as columns of `vecs`.
std::vector<double> jacobi_eigen(std::vector<double> a, std::size_t n, std::vector<double>& vecs) {
  vecs.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) vecs[i * n + i] = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a[p * n + q] * a[p * n + q];
    if (off < 1e-26) break;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a[p * n + q]) < 1e-300) continue;
        const double theta = (a[q * n + q] - a[p * n + p]) / (2 * a[p * n + q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1));
        const double c = 1 / std::sqrt(t * t + 1), s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k * n + p], akq = a[k * n + q];
          a[k * n + p] = c * akp - s * akq;
          a[k * n + q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p * n + k], aqk = a[q * n + k];
          a[p * n + k] = c * apk - s * aqk;
          a[q * n + k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = vecs[k * n + p], vkq = vecs[k * n + q];
          vecs[k * n + p] = c * vkp - s * vkq;
          vecs[k * n + q] = s * vkp + c * vkq;
        }
      }
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto x, auto y) { return a[x * n + x] > a[y * n + y]; });
  std::vector<double> vals(n), sorted(n * n);
  for (std::size_t j = 0; j < n; ++j) {
    vals[j] = a[order[j] * n + order[j]];
    for (std::size_t k = 0; k < n; ++k) sorted[k * n + j] = vecs[k * n + order[j]];
  }
  vecs = sorted;
  return vals;
}

EmbeddingTable random_table(std::size_t n, std::size_t d, std::uint64_t seed) {
  EmbeddingTable t;
  Rng rng(seed);
  for (std::size_t i = 0; i < n; ++i) t.ids.push_back("r" + std::to_string(i));
  t.dim = d;
  t.values.resize(n * d);
  // Anisotropic: column j scaled by (j + 1) so the spectrum is well separated.
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) t.values[i * d + j] = float(rng.normal() * double(j + 1) + 0.3 * double(j));
  return t;
}

}  // namespace

TEST_CASE("embedding files round-trip with ids, source and tag") {
  const auto dir = fixtures::fresh_dir("emb");
  EmbeddingTable t = random_table(5, 3, 1);
  t.source = EmbeddingSource::ExternalModel;
  t.model_tag = "sentence-model@v1";
  write_embeddings(t, dir / "x.emb");
  const EmbeddingTable back = read_embeddings(dir / "x.emb");
  CHECK(back.ids == t.ids);
  CHECK(back.dim == 3);
  CHECK(back.values == t.values);
  CHECK(back.source == EmbeddingSource::ExternalModel);
  CHECK(back.model_tag == t.model_tag);
  CHECK(std::filesystem::file_size(dir / "x.emb") == 8 + 1 + 4 + 4 + 1 + 2 + t.model_tag.size() + 5 * 3 * 4);
}

TEST_CASE("malformed embedding files are rejected") {
  const auto dir = fixtures::fresh_dir("emb_bad");
  const EmbeddingTable t = random_table(4, 2, 1);
  write_embeddings(t, dir / "x.emb");
  std::ifstream in(dir / "x.emb", std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), {});
  in.close();
  fixtures::write_file(dir / "x.emb", bytes.substr(0, bytes.size() - 3));
  CHECK_THROWS_AS(read_embeddings(dir / "x.emb"), DataError);
  std::string bad = bytes;
  bad[0] = 'X';
  fixtures::write_file(dir / "x.emb", bad);
  CHECK_THROWS_AS(read_embeddings(dir / "x.emb"), DataError);
  fixtures::write_file(dir / "x.emb", bytes);
  fixtures::write_file(dir / "x.emb.ids", "r0\nr1\n");
  CHECK_THROWS_AS(read_embeddings(dir / "x.emb"), DataError);
  CHECK_THROWS_AS(read_embeddings(dir / "missing.emb"), DataError);
}

TEST_CASE("hash embeddings are deterministic, unit norm, and zero for empty text") {
  const EmbeddingTable t = hash_embed({"add two halves", "add two halves", "", "angle sum of a triangle"},
                                      {"a", "b", "c", "d"}, 64);
  CHECK(t.dim == 64);
  auto norm = [&](std::size_t r) {
    double s = 0;
    for (std::size_t j = 0; j < 64; ++j) s += double(t.row(r)[j]) * t.row(r)[j];
    return std::sqrt(s);
  };
  CHECK(norm(0) == doctest::Approx(1.0));
  CHECK(norm(2) == 0.0);
  CHECK(std::equal(t.row(0), t.row(0) + 64, t.row(1)));
  CHECK_FALSE(std::equal(t.row(0), t.row(0) + 64, t.row(3)));
  CHECK(t.source == EmbeddingSource::HashFallback);
}

TEST_CASE("pca matches a Jacobi eigendecomposition of the sample covariance") {
  const std::size_t n = 60, d = 6, k = 4;
  const EmbeddingTable t = random_table(n, d, 3);
  std::vector<double> mean(d, 0.0), cov(d * d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mean[j] += t.values[i * d + j] / double(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b)
        cov[a * d + b] += (t.values[i * d + a] - mean[a]) * (t.values[i * d + b] - mean[b]) / double(n - 1);
  std::vector<double> vecs;
  const std::vector<double> vals = jacobi_eigen(cov, d, vecs);
  double total = 0;
  for (double v : vals) total += v;

  const PcaModel p = pca_fit(t, k);
  CHECK(p.dim == d);
  CHECK(p.components == k);
  for (std::size_t j = 0; j < d; ++j) CHECK(p.mean[j] == doctest::Approx(mean[j]).epsilon(1e-9));
  for (std::size_t c = 0; c < k; ++c) {
    CHECK(p.eigenvalues[c] == doctest::Approx(vals[c]).epsilon(1e-8));
    CHECK(p.explained_ratio[c] == doctest::Approx(vals[c] / total).epsilon(1e-8));
    if (c > 0) CHECK(p.explained_ratio[c] <= p.explained_ratio[c - 1]);
    // Oracle vector with the same sign convention: largest |entry| positive.
    std::size_t big = 0;
    for (std::size_t j = 1; j < d; ++j)
      if (std::abs(vecs[j * d + c]) > std::abs(vecs[big * d + c])) big = j;
    const double sign = vecs[big * d + c] < 0 ? -1.0 : 1.0;
    for (std::size_t j = 0; j < d; ++j) CHECK(p.basis[j * k + c] == doctest::Approx(sign * vecs[j * d + c]).epsilon(1e-7).scale(1.0));
  }
  // Orthonormal columns.
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = 0; b < k; ++b) {
      double s = 0;
      for (std::size_t j = 0; j < d; ++j) s += p.basis[j * k + a] * p.basis[j * k + b];
      CHECK(s == doctest::Approx(a == b ? 1.0 : 0.0).scale(1.0).epsilon(1e-10));
    }
}

TEST_CASE("pca transform projects centred rows and reduce pads to k") {
  const EmbeddingTable t = random_table(10, 4, 8);
  const PcaModel p = pca_fit(t, 2);
  const EmbeddingTable z = pca_transform(p, t);
  CHECK(z.dim == 2);
  CHECK(z.ids == t.ids);
  for (std::size_t i = 0; i < 10; ++i)
    for (std::size_t c = 0; c < 2; ++c) {
      double want = 0;
      for (std::size_t j = 0; j < 4; ++j) want += (t.values[i * 4 + j] - p.mean[j]) * p.basis[j * 2 + c];
      CHECK(double(z.row(i)[c]) == doctest::Approx(want).epsilon(1e-5).scale(1.0));
    }
  const EmbeddingTable small = random_table(3, 5, 2);
  const EmbeddingTable r = pca_reduce(small, 8);
  CHECK(r.dim == 8);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t c = 3; c < 8; ++c) CHECK(r.row(i)[c] == 0.0f);
  CHECK_THROWS_AS(pca_fit(t, 0), ParameterError);
  CHECK_THROWS_AS(pca_fit(t, 5), ParameterError);
  EmbeddingTable wrong = random_table(2, 3, 1);
  CHECK_THROWS_AS(pca_transform(p, wrong), DimensionError);
}

TEST_CASE("concatenated tables keep row order") {
  const EmbeddingTable a = random_table(2, 3, 1);
  EmbeddingTable b = random_table(1, 3, 2);
  b.ids = {"other"};
  const EmbeddingTable c = concat_tables(a, b);
  CHECK(c.rows() == 3);
  CHECK(c.ids.back() == "other");
  CHECK(std::equal(b.row(0), b.row(0) + 3, c.row(2)));
}
