#pragma once

#include <cstddef>
#include <string_view>

#include "pickt/core/real.hpp"

// Data-parallel inner loops used by the tensor ops. Every kernel has a scalar
// reference implementation; an AVX2+FMA variant is selected at runtime when
// the CPU supports it. Set PICKT_SIMD=scalar to force the reference path.
namespace pickt::kernels {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);

/// Best ISA this binary can run on this CPU.
Isa detected_isa();
/// ISA currently used by the dispatching entry points below.
Isa active_isa();
/// Overrides dispatch. Requesting avx2 on a CPU without it throws ParameterError.
void set_active_isa(Isa isa);

// C[m x n] = (accumulate ? C : 0) + op(A) * op(B)
// op(A) is m x k: A is stored m x k, or k x m when trans_a.
// op(B) is k x n: B is stored k x n, or n x k when trans_b.
// For every output element the products are summed in increasing k order,
// so zero terms never perturb a result.
void gemm(bool trans_a, bool trans_b, int m, int n, int k, const Real* a, const Real* b, Real* c, bool accumulate);

Real dot(const Real* x, const Real* y, std::size_t n);
/// y += alpha * x
void axpy(Real alpha, const Real* x, Real* y, std::size_t n);
/// out = x + y (out may alias either input)
void add(const Real* x, const Real* y, Real* out, std::size_t n);
/// out = x * y elementwise
void mul(const Real* x, const Real* y, Real* out, std::size_t n);
/// x *= alpha
void scale(Real alpha, Real* x, std::size_t n);

namespace scalar {
void gemm(bool trans_a, bool trans_b, int m, int n, int k, const Real* a, const Real* b, Real* c, bool accumulate);
Real dot(const Real* x, const Real* y, std::size_t n);
void axpy(Real alpha, const Real* x, Real* y, std::size_t n);
void add(const Real* x, const Real* y, Real* out, std::size_t n);
void mul(const Real* x, const Real* y, Real* out, std::size_t n);
void scale(Real alpha, Real* x, std::size_t n);
}  // namespace scalar

namespace avx2 {
bool compiled();
void gemm(bool trans_a, bool trans_b, int m, int n, int k, const Real* a, const Real* b, Real* c, bool accumulate);
Real dot(const Real* x, const Real* y, std::size_t n);
void axpy(Real alpha, const Real* x, Real* y, std::size_t n);
void add(const Real* x, const Real* y, Real* out, std::size_t n);
void mul(const Real* x, const Real* y, Real* out, std::size_t n);
void scale(Real alpha, Real* x, std::size_t n);
}  // namespace avx2

}  // namespace pickt::kernels
