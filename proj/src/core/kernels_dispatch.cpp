#include <atomic>
#include <cstdlib>
#include <string>

#include "pickt/core/error.hpp"
#include "pickt/core/kernels.hpp"

namespace pickt::kernels {

namespace {

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa initial_isa() {
  if (const char* env = std::getenv("PICKT_SIMD")) {
    if (std::string(env) == "scalar") return Isa::scalar;
  }
  return detected_isa();
}

std::atomic<Isa>& active() {
  static std::atomic<Isa> isa{initial_isa()};
  return isa;
}

}  // namespace

std::string_view isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

Isa detected_isa() {
  static const Isa isa = (avx2::compiled() && cpu_has_avx2()) ? Isa::avx2 : Isa::scalar;
  return isa;
}

Isa active_isa() { return active().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
  if (isa == Isa::avx2 && detected_isa() != Isa::avx2) throw ParameterError("AVX2 kernels are not available on this CPU");
  active().store(isa, std::memory_order_relaxed);
}

void gemm(bool trans_a, bool trans_b, int m, int n, int k, const Real* a, const Real* b, Real* c, bool accumulate) {
  if (active_isa() == Isa::avx2) {
    avx2::gemm(trans_a, trans_b, m, n, k, a, b, c, accumulate);
  } else {
    scalar::gemm(trans_a, trans_b, m, n, k, a, b, c, accumulate);
  }
}

Real dot(const Real* x, const Real* y, std::size_t n) {
  return active_isa() == Isa::avx2 ? avx2::dot(x, y, n) : scalar::dot(x, y, n);
}

void axpy(Real alpha, const Real* x, Real* y, std::size_t n) {
  if (active_isa() == Isa::avx2) {
    avx2::axpy(alpha, x, y, n);
  } else {
    scalar::axpy(alpha, x, y, n);
  }
}

void add(const Real* x, const Real* y, Real* out, std::size_t n) {
  if (active_isa() == Isa::avx2) {
    avx2::add(x, y, out, n);
  } else {
    scalar::add(x, y, out, n);
  }
}

void mul(const Real* x, const Real* y, Real* out, std::size_t n) {
  if (active_isa() == Isa::avx2) {
    avx2::mul(x, y, out, n);
  } else {
    scalar::mul(x, y, out, n);
  }
}

void scale(Real alpha, Real* x, std::size_t n) {
  if (active_isa() == Isa::avx2) {
    avx2::scale(alpha, x, n);
  } else {
    scalar::scale(alpha, x, n);
  }
}

}  // namespace pickt::kernels
