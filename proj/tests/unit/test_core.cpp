#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "pickt/core/error.hpp"
#include "pickt/core/kernels.hpp"
#include "pickt/core/ops.hpp"
#include "pickt/core/params.hpp"
#include "pickt/core/rng.hpp"
#include "pickt/core/tape.hpp"

using namespace pickt;

namespace {

constexpr double kTol = kDoublePrecision ? 1e-12 : 1e-5;

std::vector<Real> randoms(std::size_t n, Rng& rng) {
  std::vector<Real> v(n);
  for (auto& x : v) x = Real(rng.uniform() * 2 - 1);
  return v;
}

// Row-major C = op(A) op(B) by the textbook triple loop.
std::vector<double> gemm_oracle(bool ta, bool tb, int m, int n, int k, const std::vector<Real>& a,
                                const std::vector<Real>& b) {
  std::vector<double> c(std::size_t(m) * std::size_t(n), 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      double s = 0;
      for (int p = 0; p < k; ++p) {
        const double av = ta ? a[std::size_t(p) * std::size_t(m) + std::size_t(i)] : a[std::size_t(i) * std::size_t(k) + std::size_t(p)];
        const double bv = tb ? b[std::size_t(j) * std::size_t(k) + std::size_t(p)] : b[std::size_t(p) * std::size_t(n) + std::size_t(j)];
        s += av * bv;
      }
      c[std::size_t(i) * std::size_t(n) + std::size_t(j)] = s;
    }
  return c;
}

void check_close(std::span<const Real> got, const std::vector<double>& want, double tol = kTol) {
  REQUIRE(got.size() == want.size());
  for (std::size_t i = 0; i < want.size(); ++i) {
    CHECK(double(got[i]) == doctest::Approx(want[i]).epsilon(tol).scale(1.0));
  }
}

}  // namespace

TEST_CASE("gemm matches the triple loop for every transpose combination") {
  Rng rng(3);
  for (auto [m, n, k] : {std::tuple{1, 1, 1}, std::tuple{5, 7, 3}, std::tuple{17, 9, 33}, std::tuple{8, 16, 64}}) {
    for (bool ta : {false, true})
      for (bool tb : {false, true}) {
        const auto a = randoms(std::size_t(m * k), rng);
        const auto b = randoms(std::size_t(k * n), rng);
        const auto want = gemm_oracle(ta, tb, m, n, k, a, b);
        std::vector<Real> c(std::size_t(m * n), Real(0));
        kernels::scalar::gemm(ta, tb, m, n, k, a.data(), b.data(), c.data(), false);
        check_close(c, want);
        kernels::gemm(ta, tb, m, n, k, a.data(), b.data(), c.data(), false);
        check_close(c, want);
        std::vector<Real> acc(std::size_t(m * n), Real(1));
        kernels::gemm(ta, tb, m, n, k, a.data(), b.data(), acc.data(), true);
        std::vector<double> plus_one(want);
        for (auto& v : plus_one) v += 1.0;
        check_close(acc, plus_one);
      }
  }
}

TEST_CASE("avx2 kernels agree with the scalar reference") {
  if (!kernels::avx2::compiled() || kernels::detected_isa() != kernels::Isa::avx2) {
    MESSAGE("AVX2 unavailable; equivalence not exercised");
    return;
  }
  Rng rng(5);
  for (std::size_t n : {1u, 3u, 4u, 7u, 8u, 15u, 16u, 31u, 100u, 1027u}) {
    const auto x = randoms(n, rng), y = randoms(n, rng);
    const double ds = kernels::scalar::dot(x.data(), y.data(), n);
    const double dv = kernels::avx2::dot(x.data(), y.data(), n);
    CHECK(dv == doctest::Approx(ds).epsilon(kTol * 10).scale(1.0));

    std::vector<Real> s1(y), v1(y);
    kernels::scalar::axpy(Real(0.7), x.data(), s1.data(), n);
    kernels::avx2::axpy(Real(0.7), x.data(), v1.data(), n);
    std::vector<Real> s2(n), v2(n), s3(n), v3(n);
    kernels::scalar::add(x.data(), y.data(), s2.data(), n);
    kernels::avx2::add(x.data(), y.data(), v2.data(), n);
    kernels::scalar::mul(x.data(), y.data(), s3.data(), n);
    kernels::avx2::mul(x.data(), y.data(), v3.data(), n);
    std::vector<Real> s4(x), v4(x);
    kernels::scalar::scale(Real(-1.3), s4.data(), n);
    kernels::avx2::scale(Real(-1.3), v4.data(), n);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(double(v1[i]) == doctest::Approx(double(s1[i])).epsilon(kTol).scale(1.0));
      CHECK(v2[i] == s2[i]);
      CHECK(v3[i] == s3[i]);
      CHECK(v4[i] == s4[i]);
    }
  }
  for (auto [m, n, k] : {std::tuple{3, 5, 7}, std::tuple{16, 16, 16}, std::tuple{33, 17, 65}}) {
    for (bool ta : {false, true})
      for (bool tb : {false, true}) {
        const auto a = randoms(std::size_t(m * k), rng);
        const auto b = randoms(std::size_t(k * n), rng);
        std::vector<Real> cs(std::size_t(m * n)), cv(std::size_t(m * n));
        kernels::scalar::gemm(ta, tb, m, n, k, a.data(), b.data(), cs.data(), false);
        kernels::avx2::gemm(ta, tb, m, n, k, a.data(), b.data(), cv.data(), false);
        for (std::size_t i = 0; i < cs.size(); ++i) {
          CHECK(double(cv[i]) == doctest::Approx(double(cs[i])).epsilon(kTol * 10).scale(1.0));
        }
      }
  }
}

TEST_CASE("zero terms never perturb a gemm result") {
  const std::vector<Real> a{Real(0.1), 0, 0, Real(0.2)};
  const std::vector<Real> b{Real(0.3), 0, 0, Real(0.7)};
  std::vector<Real> c(4);
  kernels::gemm(false, false, 2, 2, 2, a.data(), b.data(), c.data(), false);
  CHECK(c[0] == Real(0.1) * Real(0.3));
  CHECK(c[3] == Real(0.2) * Real(0.7));
  CHECK(c[1] == 0);
}

TEST_CASE("dispatch can be forced to scalar") {
  const auto before = kernels::active_isa();
  kernels::set_active_isa(kernels::Isa::scalar);
  CHECK(kernels::active_isa() == kernels::Isa::scalar);
  CHECK(kernels::isa_name(kernels::Isa::scalar) == "scalar");
  kernels::set_active_isa(before);
}

TEST_CASE("gelu uses the exact normal CDF") {
  const std::vector<double> xs{-3, -1, -0.5, 0, 0.25, 1, 2.5};
  const Tensor x = Tensor::from({Index(xs.size())}, std::vector<Real>(xs.begin(), xs.end()));
  const Tensor y = gelu(x);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double want = xs[i] * 0.5 * (1.0 + std::erf(xs[i] / std::sqrt(2.0)));
    CHECK(double(y.at(Index(i))) == doctest::Approx(want).epsilon(kTol).scale(1.0));
  }
  CHECK(normal_cdf(0.0) == doctest::Approx(0.5));
  CHECK(normal_cdf(1.959963984540054) == doctest::Approx(0.975).epsilon(1e-12));
}

TEST_CASE("softmax and layer norm match direct formulas") {
  Rng rng(9);
  const auto v = randoms(12, rng);
  const Tensor x = Tensor::from({3, 4}, v);
  const Tensor s = softmax(x);
  const Tensor g = Tensor::full({4}, Real(1.5));
  const Tensor b = Tensor::full({4}, Real(-0.25));
  const Tensor ln = layer_norm(x, g, b);
  for (int r = 0; r < 3; ++r) {
    double z = 0, mu = 0, var = 0;
    for (int c = 0; c < 4; ++c) z += std::exp(double(v[std::size_t(r * 4 + c)]));
    for (int c = 0; c < 4; ++c) mu += double(v[std::size_t(r * 4 + c)]) / 4;
    for (int c = 0; c < 4; ++c) var += std::pow(double(v[std::size_t(r * 4 + c)]) - mu, 2) / 4;
    for (int c = 0; c < 4; ++c) {
      const double xv = double(v[std::size_t(r * 4 + c)]);
      CHECK(double(s.at(r * 4 + c)) == doctest::Approx(std::exp(xv) / z).epsilon(kTol).scale(1.0));
      CHECK(double(ln.at(r * 4 + c)) ==
            doctest::Approx(1.5 * (xv - mu) / std::sqrt(var + 1e-12) - 0.25).epsilon(kTol * 10).scale(1.0));
    }
  }
}

TEST_CASE("softmax is stable for large inputs and masked entries") {
  const Tensor x = Tensor::from({1, 3}, {Real(1000), Real(1001), Real(-1e9)});
  const Tensor s = softmax(x);
  CHECK(std::isfinite(double(s.at(0))));
  CHECK(double(s.at(2)) == 0.0);
  CHECK(double(s.at(0) + s.at(1)) == doctest::Approx(1.0));
}

TEST_CASE("dropout is identity at inference and unbiased in training") {
  Rng rng(1);
  const Tensor x = Tensor::full({1000}, Real(1));
  const Tensor eval = dropout(x, Real(0.3), rng, false);
  for (Index i = 0; i < 1000; ++i) CHECK(eval.at(i) == Real(1));
  const Tensor tr = dropout(x, Real(0.3), rng, true);
  double total = 0;
  int zeros = 0;
  for (Index i = 0; i < 1000; ++i) {
    total += double(tr.at(i));
    if (tr.at(i) == 0) ++zeros;
    else CHECK(double(tr.at(i)) == doctest::Approx(1.0 / 0.7));
  }
  CHECK(zeros > 230);
  CHECK(zeros < 370);
  CHECK(total / 1000 == doctest::Approx(1.0).epsilon(0.1));
  CHECK_THROWS_AS(dropout(x, Real(1), rng, true), ParameterError);
}

TEST_CASE("bce loss matches a loop over valid positions") {
  const std::vector<Real> p{Real(0.9), Real(0.2), Real(0.6), Real(0), Real(1)};
  const std::vector<Real> y{1, 0, 0, 0, 1};
  const std::vector<std::uint8_t> mask{1, 1, 0, 1, 1};
  const BceResult r = bce_loss(Tensor::from({5, 1}, p), y, mask);
  double want = 0;
  int n = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!mask[i]) continue;
    const double q = std::clamp(double(p[i]), double(kProbClamp), 1.0 - double(kProbClamp));
    want += -(double(y[i]) * std::log(q) + (1 - double(y[i])) * std::log(1 - q));
    ++n;
  }
  CHECK(r.valid_count == 4);
  CHECK(double(r.loss.item()) == doctest::Approx(want / n).epsilon(kDoublePrecision ? 1e-12 : 1e-4));

  const std::vector<std::uint8_t> none(5, 0);
  const BceResult e = bce_loss(Tensor::from({5, 1}, p), y, none);
  CHECK(e.empty());
  CHECK(e.loss.item() == 0);
}

TEST_CASE("backward accumulates gradients and clears the tape") {
  const Tensor a = Tensor::from({2}, {Real(2), Real(3)}, true);
  const Tensor loss = sum(mul(a, a));
  CHECK(current_tape().size() > 0);
  backward(loss);
  CHECK(current_tape().empty());
  CHECK(double(a.grad()[0]) == doctest::Approx(4));
  CHECK(double(a.grad()[1]) == doctest::Approx(6));
  CHECK_THROWS_AS(backward(a), ContractError);
  current_tape().clear();
}

TEST_CASE("no-grad scopes record nothing") {
  const Tensor a = Tensor::from({2}, {Real(1), Real(2)}, true);
  {
    NoGradGuard g;
    (void)sum(mul(a, a));
    CHECK(current_tape().empty());
  }
  CHECK(grad_enabled());
}

TEST_CASE("adam step matches a scalar implementation") {
  ParamStore ps;
  Tensor& w = ps.add("w", Tensor::from({3}, {Real(0.5), Real(-1), Real(2)}, true));
  AdamConfig cfg;
  cfg.learning_rate = 0.01;
  AdamState st(cfg);
  std::vector<double> x{0.5, -1, 2}, m(3, 0), v(3, 0);
  for (int step = 1; step <= 5; ++step) {
    w.zero_grad();
    current_tape().clear();
    backward(sum(mul(mul(w, w), w)));  // d/dx x^3 = 3x^2
    adam_step(ps, st);
    for (std::size_t i = 0; i < 3; ++i) {
      const double g = 3 * x[i] * x[i];
      m[i] = 0.9 * m[i] + 0.1 * g;
      v[i] = 0.999 * v[i] + 0.001 * g * g;
      const double mh = m[i] / (1 - std::pow(0.9, step));
      const double vh = v[i] / (1 - std::pow(0.999, step));
      x[i] -= 0.01 * mh / (std::sqrt(vh) + 1e-12);
    }
  }
  CHECK(st.step() == 5);
  for (std::size_t i = 0; i < 3; ++i) CHECK(double(w.at(Index(i))) == doctest::Approx(x[i]).epsilon(kTol * 10));
}

TEST_CASE("rng streams are reproducible and independent") {
  Rng a(42), b(42);
  for (int i = 0; i < 10; ++i) CHECK(a.next_u64() == b.next_u64());
  const Rng root(7);
  CHECK(root.split("x").next_u64() == root.split("x").next_u64());
  CHECK(root.split("x").next_u64() != root.split("y").next_u64());
  CHECK(root.split(1).next_u64() != root.split(2).next_u64());
  Rng u(1);
  double mean = 0, sq = 0;
  for (int i = 0; i < 20000; ++i) {
    const double z = u.normal();
    mean += z / 20000;
    sq += z * z / 20000;
  }
  CHECK(std::abs(mean) < 0.03);
  CHECK(sq == doctest::Approx(1.0).epsilon(0.05));
  std::vector<int> perm(50);
  std::iota(perm.begin(), perm.end(), 0);
  Rng s(3);
  shuffle(perm.begin(), perm.end(), s);
  std::vector<int> sorted(perm);
  std::sort(sorted.begin(), sorted.end());
  for (int i = 0; i < 50; ++i) CHECK(sorted[std::size_t(i)] == i);
}

TEST_CASE("shape errors are reported") {
  CHECK_THROWS_AS(matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})), DimensionError);
  CHECK_THROWS_AS(embedding(Tensor::zeros({3, 2}), std::vector<std::int32_t>{3}), ContractError);
}

TEST_CASE("parameter stores clone deeply and count scalars") {
  ParamStore ps;
  Rng rng(1);
  ps.normal("a", {3, 4}, rng);
  ps.zeros("b", {4});
  CHECK(ps.count() == 16);
  ParamStore c = ps.clone();
  c.get("a").data()[0] = Real(99);
  CHECK(ps.get("a").at(0) != Real(99));
}

TEST_CASE("memory stats track live tensor bytes") {
  reset_peak_memory();
  const std::size_t before = memory_stats().live_bytes;
  {
    const Tensor t = Tensor::zeros({1000});
    CHECK(memory_stats().live_bytes >= before + 1000 * sizeof(Real));
  }
  CHECK(memory_stats().live_bytes == before);
  CHECK(memory_stats().peak_bytes >= before + 1000 * sizeof(Real));
}
