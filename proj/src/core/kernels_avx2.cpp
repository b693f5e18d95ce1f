// Compiled with -mavx2 -mfma; only reached through dispatch after a CPUID check.
#include <algorithm>
#include <cstring>
#include <vector>

#include "pickt/core/kernels.hpp"

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>
#define PICKT_HAVE_AVX2 1
#endif

namespace pickt::kernels::avx2 {

#ifdef PICKT_HAVE_AVX2

namespace {

template <class T>
struct Lanes;

template <>
struct Lanes<float> {
  using reg = __m256;
  static constexpr int width = 8;
  static reg zero() { return _mm256_setzero_ps(); }
  static reg load(const float* p) { return _mm256_loadu_ps(p); }
  static void store(float* p, reg v) { _mm256_storeu_ps(p, v); }
  static reg set1(float v) { return _mm256_set1_ps(v); }
  static reg fmadd(reg a, reg b, reg c) { return _mm256_fmadd_ps(a, b, c); }
  static reg add(reg a, reg b) { return _mm256_add_ps(a, b); }
  static reg mul(reg a, reg b) { return _mm256_mul_ps(a, b); }
  static float hsum(reg v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    __m128 shuf = _mm_movehdup_ps(lo);
    __m128 sums = _mm_add_ps(lo, shuf);
    shuf = _mm_movehl_ps(shuf, sums);
    sums = _mm_add_ss(sums, shuf);
    return _mm_cvtss_f32(sums);
  }
};

template <>
struct Lanes<double> {
  using reg = __m256d;
  static constexpr int width = 4;
  static reg zero() { return _mm256_setzero_pd(); }
  static reg load(const double* p) { return _mm256_loadu_pd(p); }
  static void store(double* p, reg v) { _mm256_storeu_pd(p, v); }
  static reg set1(double v) { return _mm256_set1_pd(v); }
  static reg fmadd(reg a, reg b, reg c) { return _mm256_fmadd_pd(a, b, c); }
  static reg add(reg a, reg b) { return _mm256_add_pd(a, b); }
  static reg mul(reg a, reg b) { return _mm256_mul_pd(a, b); }
  static double hsum(reg v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d high64 = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, high64));
  }
};

using V = Lanes<Real>;
constexpr int W = V::width;

// R rows of A (row-major, leading dim k) times a 2W-wide panel of B
// (row-major, leading dim n) starting at column j.
template <int R>
inline void micro_2w(const Real* a, const Real* b, Real* c, int n, int k, int j, bool accumulate) {
  V::reg acc0[R];
  V::reg acc1[R];
  for (int r = 0; r < R; ++r) {
    acc0[r] = V::zero();
    acc1[r] = V::zero();
  }
  for (int p = 0; p < k; ++p) {
    const Real* brow = b + static_cast<std::size_t>(p) * n + j;
    const V::reg b0 = V::load(brow);
    const V::reg b1 = V::load(brow + W);
    for (int r = 0; r < R; ++r) {
      const V::reg av = V::set1(a[static_cast<std::size_t>(r) * k + p]);
      acc0[r] = V::fmadd(av, b0, acc0[r]);
      acc1[r] = V::fmadd(av, b1, acc1[r]);
    }
  }
  for (int r = 0; r < R; ++r) {
    Real* crow = c + static_cast<std::size_t>(r) * n + j;
    if (accumulate) {
      V::store(crow, V::add(V::load(crow), acc0[r]));
      V::store(crow + W, V::add(V::load(crow + W), acc1[r]));
    } else {
      V::store(crow, acc0[r]);
      V::store(crow + W, acc1[r]);
    }
  }
}

template <int R>
inline void micro_w(const Real* a, const Real* b, Real* c, int n, int k, int j, bool accumulate) {
  V::reg acc[R];
  for (int r = 0; r < R; ++r) acc[r] = V::zero();
  for (int p = 0; p < k; ++p) {
    const V::reg b0 = V::load(b + static_cast<std::size_t>(p) * n + j);
    for (int r = 0; r < R; ++r) acc[r] = V::fmadd(V::set1(a[static_cast<std::size_t>(r) * k + p]), b0, acc[r]);
  }
  for (int r = 0; r < R; ++r) {
    Real* crow = c + static_cast<std::size_t>(r) * n + j;
    V::store(crow, accumulate ? V::add(V::load(crow), acc[r]) : acc[r]);
  }
}

template <int R>
inline void row_block(const Real* a, const Real* b, Real* c, int n, int k, bool accumulate) {
  int j = 0;
  for (; j + 2 * W <= n; j += 2 * W) micro_2w<R>(a, b, c, n, k, j, accumulate);
  for (; j + W <= n; j += W) micro_w<R>(a, b, c, n, k, j, accumulate);
  for (; j < n; ++j) {
    for (int r = 0; r < R; ++r) {
      Real acc{0};
      for (int p = 0; p < k; ++p) acc += a[static_cast<std::size_t>(r) * k + p] * b[static_cast<std::size_t>(p) * n + j];
      Real& out = c[static_cast<std::size_t>(r) * n + j];
      out = accumulate ? out + acc : acc;
    }
  }
}

thread_local std::vector<Real> t_pack_a;
thread_local std::vector<Real> t_pack_b;

}  // namespace

bool compiled() { return true; }

void gemm(bool trans_a, bool trans_b, int m, int n, int k, const Real* a, const Real* b, Real* c, bool accumulate) {
  if (m == 0 || n == 0) return;
  if (k == 0) {
    if (!accumulate) std::fill(c, c + static_cast<std::size_t>(m) * n, Real{0});
    return;
  }
  if (trans_a) {
    t_pack_a.resize(static_cast<std::size_t>(m) * k);
    for (int p = 0; p < k; ++p)
      for (int i = 0; i < m; ++i) t_pack_a[static_cast<std::size_t>(i) * k + p] = a[static_cast<std::size_t>(p) * m + i];
    a = t_pack_a.data();
  }
  if (trans_b) {
    t_pack_b.resize(static_cast<std::size_t>(k) * n);
    for (int j = 0; j < n; ++j)
      for (int p = 0; p < k; ++p) t_pack_b[static_cast<std::size_t>(p) * n + j] = b[static_cast<std::size_t>(j) * k + p];
    b = t_pack_b.data();
  }
  int i = 0;
  for (; i + 4 <= m; i += 4)
    row_block<4>(a + static_cast<std::size_t>(i) * k, b, c + static_cast<std::size_t>(i) * n, n, k, accumulate);
  for (; i < m; ++i)
    row_block<1>(a + static_cast<std::size_t>(i) * k, b, c + static_cast<std::size_t>(i) * n, n, k, accumulate);
}

Real dot(const Real* x, const Real* y, std::size_t n) {
  V::reg acc = V::zero();
  std::size_t i = 0;
  for (; i + W <= n; i += W) acc = V::fmadd(V::load(x + i), V::load(y + i), acc);
  Real s = V::hsum(acc);
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy(Real alpha, const Real* x, Real* y, std::size_t n) {
  const V::reg av = V::set1(alpha);
  std::size_t i = 0;
  for (; i + W <= n; i += W) V::store(y + i, V::fmadd(av, V::load(x + i), V::load(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void add(const Real* x, const Real* y, Real* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + W <= n; i += W) V::store(out + i, V::add(V::load(x + i), V::load(y + i)));
  for (; i < n; ++i) out[i] = x[i] + y[i];
}

void mul(const Real* x, const Real* y, Real* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + W <= n; i += W) V::store(out + i, V::mul(V::load(x + i), V::load(y + i)));
  for (; i < n; ++i) out[i] = x[i] * y[i];
}

void scale(Real alpha, Real* x, std::size_t n) {
  const V::reg av = V::set1(alpha);
  std::size_t i = 0;
  for (; i + W <= n; i += W) V::store(x + i, V::mul(av, V::load(x + i)));
  for (; i < n; ++i) x[i] *= alpha;
}

#else  // no AVX2 support in this toolchain: forward to the reference kernels

bool compiled() { return false; }
void gemm(bool ta, bool tb, int m, int n, int k, const Real* a, const Real* b, Real* c, bool acc) {
  scalar::gemm(ta, tb, m, n, k, a, b, c, acc);
}
Real dot(const Real* x, const Real* y, std::size_t n) { return scalar::dot(x, y, n); }
void axpy(Real alpha, const Real* x, Real* y, std::size_t n) { scalar::axpy(alpha, x, y, n); }
void add(const Real* x, const Real* y, Real* out, std::size_t n) { scalar::add(x, y, out, n); }
void mul(const Real* x, const Real* y, Real* out, std::size_t n) { scalar::mul(x, y, out, n); }
void scale(Real alpha, Real* x, std::size_t n) { scalar::scale(alpha, x, n); }

#endif

}  // namespace pickt::kernels::avx2
