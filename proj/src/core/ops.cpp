#include "pickt/core/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "pickt/core/error.hpp"
#include "pickt/core/kernels.hpp"
#include "pickt/core/tape.hpp"

namespace pickt {

namespace {

using ImplPtr = std::shared_ptr<TensorImpl>;

bool wants_grad(std::initializer_list<const Tensor*> inputs) {
  if (!grad_enabled()) return false;
  for (const Tensor* t : inputs) {
    if (t->defined() && t->requires_grad()) return true;
  }
  return false;
}

void check_finite([[maybe_unused]] const Tensor& t, [[maybe_unused]] const char* op) {
#ifndef NDEBUG
  for (Real v : t.data()) {
    if (!std::isfinite(v)) throw NumericalError(std::string("non-finite value produced by ") + op);
  }
#endif
}

Tensor finish(Tensor out, const char* op) {
  check_finite(out, op);
  return out;
}

void record(const char* op, std::initializer_list<const Tensor*> inputs, const Tensor& out, std::function<void()> bw) {
  std::vector<ImplPtr> ins;
  ins.reserve(inputs.size());
  for (const Tensor* t : inputs) {
    if (t->defined()) ins.push_back(t->shared());
  }
  current_tape().record(op, std::move(ins), out.shared(), std::move(bw));
}

Real* grad_ptr(TensorImpl* t) { return t->ensure_grad().data(); }
const Real* out_grad(TensorImpl* t) { return t->grad.data(); }

Index rows_of(const Tensor& x) { return x.numel() / x.dim(-1); }

void require_rank(const Tensor& x, Index rank, const char* op) {
  if (x.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " + shape_str(x.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

int as_int(Index v) { return static_cast<int>(v); }

}  // namespace

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

// --- linear algebra -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  if (a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: inner dimensions differ for " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const int m = as_int(a.dim(0)), k = as_int(a.dim(1)), n = as_int(b.dim(1));
  Tensor out = Tensor::zeros({m, n}, wants_grad({&a, &b}));
  kernels::gemm(false, false, m, n, k, a.data().data(), b.data().data(), out.data().data(), false);
  if (out.requires_grad()) {
    TensorImpl *ai = a.impl(), *bi = b.impl(), *oi = out.impl();
    record("matmul", {&a, &b}, out, [=] {
      if (ai->requires_grad) kernels::gemm(false, true, m, k, n, out_grad(oi), bi->data.data(), grad_ptr(ai), true);
      if (bi->requires_grad) kernels::gemm(true, false, k, n, m, ai->data.data(), out_grad(oi), grad_ptr(bi), true);
    });
  }
  return finish(out, "matmul");
}

Tensor bmm(const Tensor& a, const Tensor& b, bool trans_b) {
  require_rank(a, 3, "bmm");
  require_rank(b, 3, "bmm");
  const Index g = a.dim(0);
  const int m = as_int(a.dim(1)), k = as_int(a.dim(2));
  const int n = as_int(trans_b ? b.dim(1) : b.dim(2));
  const Index bk = trans_b ? b.dim(2) : b.dim(1);
  if (b.dim(0) != g || bk != k) {
    throw DimensionError("bmm: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                         (trans_b ? " (b transposed)" : ""));
  }
  Tensor out = Tensor::zeros({g, m, n}, wants_grad({&a, &b}));
  const std::size_t sa = static_cast<std::size_t>(m) * k, sb = static_cast<std::size_t>(k) * n,
                    sc = static_cast<std::size_t>(m) * n;
  for (Index i = 0; i < g; ++i) {
    kernels::gemm(false, trans_b, m, n, k, a.data().data() + i * sa, b.data().data() + i * sb,
                  out.data().data() + i * sc, false);
  }
  if (out.requires_grad()) {
    TensorImpl *ai = a.impl(), *bi = b.impl(), *oi = out.impl();
    record("bmm", {&a, &b}, out, [=] {
      for (Index i = 0; i < g; ++i) {
        const Real* dc = out_grad(oi) + i * sc;
        const Real* av = ai->data.data() + i * sa;
        const Real* bv = bi->data.data() + i * sb;
        if (ai->requires_grad) {
          // dA = dC * op(B)^T
          kernels::gemm(false, !trans_b, m, k, n, dc, bv, grad_ptr(ai) + i * sa, true);
        }
        if (bi->requires_grad) {
          if (trans_b) {
            kernels::gemm(true, false, n, k, m, dc, av, grad_ptr(bi) + i * sb, true);  // dB = dC^T A
          } else {
            kernels::gemm(true, false, k, n, m, av, dc, grad_ptr(bi) + i * sb, true);  // dB = A^T dC
          }
        }
      }
    });
  }
  return finish(out, "bmm");
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  require_rank(w, 2, "linear");
  const Index in = x.dim(-1);
  if (w.dim(0) != in) {
    throw DimensionError("linear: input " + shape_str(x.shape()) + " does not match weight " + shape_str(w.shape()));
  }
  const Index outw = w.dim(1);
  if (bias.defined() && bias.numel() != outw) {
    throw DimensionError("linear: bias " + shape_str(bias.shape()) + " does not match weight " + shape_str(w.shape()));
  }
  const int rows = as_int(rows_of(x));
  Shape shape = x.shape();
  shape.back() = outw;
  Tensor out = Tensor::zeros(shape, wants_grad({&x, &w, &bias}));
  Real* o = out.data().data();
  kernels::gemm(false, false, rows, as_int(outw), as_int(in), x.data().data(), w.data().data(), o, false);
  if (bias.defined()) {
    for (int r = 0; r < rows; ++r) kernels::add(o + static_cast<std::size_t>(r) * outw, bias.data().data(), o + static_cast<std::size_t>(r) * outw, outw);
  }
  if (out.requires_grad()) {
    TensorImpl *xi = x.impl(), *wi = w.impl(), *oi = out.impl();
    TensorImpl* bi = bias.defined() ? bias.impl() : nullptr;
    const int ni = as_int(in), no = as_int(outw);
    record("linear", {&x, &w, &bias}, out, [=] {
      const Real* dy = out_grad(oi);
      if (xi->requires_grad) kernels::gemm(false, true, rows, ni, no, dy, wi->data.data(), grad_ptr(xi), true);
      if (wi->requires_grad) kernels::gemm(true, false, ni, no, rows, xi->data.data(), dy, grad_ptr(wi), true);
      if (bi != nullptr && bi->requires_grad) {
        Real* db = grad_ptr(bi);
        for (int r = 0; r < rows; ++r) kernels::axpy(Real{1}, dy + static_cast<std::size_t>(r) * no, db, no);
      }
    });
  }
  return finish(out, "linear");
}

// --- elementwise ------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = Tensor::zeros(a.shape(), wants_grad({&a, &b}));
  kernels::add(a.data().data(), b.data().data(), out.data().data(), a.numel());
  if (out.requires_grad()) {
    TensorImpl *ai = a.impl(), *bi = b.impl(), *oi = out.impl();
    const std::size_t n = a.numel();
    record("add", {&a, &b}, out, [=] {
      if (ai->requires_grad) kernels::axpy(Real{1}, out_grad(oi), grad_ptr(ai), n);
      if (bi->requires_grad) kernels::axpy(Real{1}, out_grad(oi), grad_ptr(bi), n);
    });
  }
  return finish(out, "add");
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = Tensor::zeros(a.shape(), wants_grad({&a, &b}));
  for (Index i = 0; i < a.numel(); ++i) out.data()[i] = a.at(i) - b.at(i);
  if (out.requires_grad()) {
    TensorImpl *ai = a.impl(), *bi = b.impl(), *oi = out.impl();
    const std::size_t n = a.numel();
    record("sub", {&a, &b}, out, [=] {
      if (ai->requires_grad) kernels::axpy(Real{1}, out_grad(oi), grad_ptr(ai), n);
      if (bi->requires_grad) kernels::axpy(Real{-1}, out_grad(oi), grad_ptr(bi), n);
    });
  }
  return finish(out, "sub");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out = Tensor::zeros(a.shape(), wants_grad({&a, &b}));
  kernels::mul(a.data().data(), b.data().data(), out.data().data(), a.numel());
  if (out.requires_grad()) {
    TensorImpl *ai = a.impl(), *bi = b.impl(), *oi = out.impl();
    const std::size_t n = a.numel();
    record("mul", {&a, &b}, out, [=] {
      const Real* dy = out_grad(oi);
      if (ai->requires_grad) {
        Real* da = grad_ptr(ai);
        for (std::size_t i = 0; i < n; ++i) da[i] += dy[i] * bi->data[i];
      }
      if (bi->requires_grad) {
        Real* db = grad_ptr(bi);
        for (std::size_t i = 0; i < n; ++i) db[i] += dy[i] * ai->data[i];
      }
    });
  }
  return finish(out, "mul");
}

Tensor scale(const Tensor& x, Real factor) {
  Tensor out = x.clone(wants_grad({&x}));
  kernels::scale(factor, out.data().data(), out.numel());
  if (out.requires_grad()) {
    TensorImpl *xi = x.impl(), *oi = out.impl();
    const std::size_t n = x.numel();
    record("scale", {&x}, out, [=] { kernels::axpy(factor, out_grad(oi), grad_ptr(xi), n); });
  }
  return finish(out, "scale");
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  const Index n = x.dim(-1);
  if (bias.numel() != n) {
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " does not match " + shape_str(x.shape()));
  }
  Tensor out = x.clone(wants_grad({&x, &bias}));
  const Index rows = rows_of(x);
  for (Index r = 0; r < rows; ++r) kernels::axpy(Real{1}, bias.data().data(), out.data().data() + r * n, n);
  if (out.requires_grad()) {
    TensorImpl *xi = x.impl(), *bi = bias.impl(), *oi = out.impl();
    record("add_bias", {&x, &bias}, out, [=] {
      const Real* dy = out_grad(oi);
      if (xi->requires_grad) kernels::axpy(Real{1}, dy, grad_ptr(xi), rows * n);
      if (bi->requires_grad) {
        Real* db = grad_ptr(bi);
        for (Index r = 0; r < rows; ++r) kernels::axpy(Real{1}, dy + r * n, db, n);
      }
    });
  }
  return finish(out, "add_bias");
}

namespace {

// Shared scaffolding for unary elementwise ops: `f` maps x to y, `df` maps
// (x, y) to dy/dx.
template <class F, class DF>
Tensor unary(const Tensor& x, const char* name, F f, DF df) {
  Tensor out = Tensor::zeros(x.shape(), wants_grad({&x}));
  auto xs = x.data();
  auto ys = out.data();
  for (std::size_t i = 0; i < xs.size(); ++i) ys[i] = f(xs[i]);
  if (out.requires_grad()) {
    TensorImpl *xi = x.impl(), *oi = out.impl();
    record(name, {&x}, out, [=] {
      const Real* dy = out_grad(oi);
      Real* dx = grad_ptr(xi);
      for (std::size_t i = 0; i < xi->data.size(); ++i) dx[i] += dy[i] * df(xi->data[i], oi->data[i]);
    });
  }
  return finish(out, name);
}

}  // namespace

Tensor gelu(const Tensor& x) {
  return unary(
      x, "gelu", [](Real v) { return static_cast<Real>(v * normal_cdf(v)); },
      [](Real v, Real) {
        const double pdf = std::exp(-0.5 * double(v) * v) / std::sqrt(2.0 * std::numbers::pi);
        return static_cast<Real>(normal_cdf(v) + v * pdf);
      });
}

Tensor tanh(const Tensor& x) {
  return unary(
      x, "tanh", [](Real v) { return std::tanh(v); }, [](Real, Real y) { return Real{1} - y * y; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, "sigmoid",
      [](Real v) {
        if (v >= 0) return Real{1} / (Real{1} + std::exp(-v));
        const Real e = std::exp(v);
        return e / (Real{1} + e);
      },
      [](Real, Real y) { return y * (Real{1} - y); });
}

Tensor leaky_relu(const Tensor& x, Real slope) {
  return unary(
      x, "leaky_relu", [slope](Real v) { return v > 0 ? v : slope * v; },
      [slope](Real v, Real) { return v > 0 ? Real{1} : slope; });
}

Tensor softmax(const Tensor& x) {
  const Index n = x.dim(-1);
  const Index rows = rows_of(x);
  Tensor out = Tensor::zeros(x.shape(), wants_grad({&x}));
  for (Index r = 0; r < rows; ++r) {
    const Real* xr = x.data().data() + r * n;
    Real* yr = out.data().data() + r * n;
    const Real mx = *std::max_element(xr, xr + n);
    Real total{0};
    for (Index j = 0; j < n; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      total += yr[j];
    }
    const Real inv = Real{1} / total;
    for (Index j = 0; j < n; ++j) yr[j] *= inv;
  }
  if (out.requires_grad()) {
    TensorImpl *xi = x.impl(), *oi = out.impl();
    record("softmax", {&x}, out, [=] {
      const Real* dy = out_grad(oi);
      Real* dx = grad_ptr(xi);
      for (Index r = 0; r < rows; ++r) {
        const Real* yr = oi->data.data() + r * n;
        const Real* dyr = dy + r * n;
        const Real inner = kernels::dot(dyr, yr, n);
        for (Index j = 0; j < n; ++j) dx[r * n + j] += yr[j] * (dyr[j] - inner);
      }
    });
  }
  return finish(out, "softmax");
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, Real eps) {
  const Index d = x.dim(-1);
  if (gain.numel() != d || bias.numel() != d) {
    throw DimensionError("layer_norm: gain/bias " + shape_str(gain.shape()) + "/" + shape_str(bias.shape()) +
                         " do not match " + shape_str(x.shape()));
  }
  const Index rows = rows_of(x);
  Tensor out = Tensor::zeros(x.shape(), wants_grad({&x, &gain, &bias}));
  // Normalised values and inverse std are kept for the backward rule.
  auto xhat = std::make_shared<std::vector<Real>>(static_cast<std::size_t>(x.numel()));
  auto inv_std = std::make_shared<std::vector<Real>>(static_cast<std::size_t>(rows));
  const Real* g = gain.data().data();
  const Real* b = bias.data().data();
  for (Index r = 0; r < rows; ++r) {
    const Real* xr = x.data().data() + r * d;
    double mu = 0.0;
    for (Index j = 0; j < d; ++j) mu += xr[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (Index j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = static_cast<Real>(inv);
    Real* yr = out.data().data() + r * d;
    for (Index j = 0; j < d; ++j) {
      const Real h = static_cast<Real>((xr[j] - mu) * inv);
      (*xhat)[r * d + j] = h;
      yr[j] = g[j] * h + b[j];
    }
  }
  if (out.requires_grad()) {
    TensorImpl *xi = x.impl(), *gi = gain.impl(), *bi = bias.impl(), *oi = out.impl();
    record("layer_norm", {&x, &gain, &bias}, out, [=] {
      const Real* dy = out_grad(oi);
      std::vector<Real> dxhat(static_cast<std::size_t>(d));
      for (Index r = 0; r < rows; ++r) {
        const Real* dyr = dy + r * d;
        const Real* hr = xhat->data() + r * d;
        if (gi->requires_grad) {
          Real* dg = grad_ptr(gi);
          for (Index j = 0; j < d; ++j) dg[j] += dyr[j] * hr[j];
        }
        if (bi->requires_grad) kernels::axpy(Real{1}, dyr, grad_ptr(bi), d);
        if (xi->requires_grad) {
          double s1 = 0.0, s2 = 0.0;
          for (Index j = 0; j < d; ++j) {
            dxhat[j] = dyr[j] * gi->data[j];
            s1 += dxhat[j];
            s2 += dxhat[j] * hr[j];
          }
          const double scale_r = (*inv_std)[r] / static_cast<double>(d);
          Real* dx = grad_ptr(xi) + r * d;
          for (Index j = 0; j < d; ++j) {
            dx[j] += static_cast<Real>(scale_r * (static_cast<double>(d) * dxhat[j] - s1 - hr[j] * s2));
          }
        }
      }
    });
  }
  return finish(out, "layer_norm");
}

Tensor dropout(const Tensor& x, Real p, Rng& rng, bool training) {
  if (!(p >= 0) || p >= 1) throw ParameterError("dropout probability must be in [0, 1), got " + std::to_string(p));
  if (!training || p == 0) return x;
  const Real keep_scale = Real{1} / (Real{1} - p);
  auto mask = std::make_shared<std::vector<Real>>(static_cast<std::size_t>(x.numel()));
  for (Real& m : *mask) m = rng.uniform() >= p ? keep_scale : Real{0};
  Tensor out = Tensor::zeros(x.shape(), wants_grad({&x}));
  kernels::mul(x.data().data(), mask->data(), out.data().data(), x.numel());
  if (out.requires_grad()) {
    TensorImpl *xi = x.impl(), *oi = out.impl();
    record("dropout", {&x}, out, [=] {
      const Real* dy = out_grad(oi);
      Real* dx = grad_ptr(xi);
      for (std::size_t i = 0; i < mask->size(); ++i) dx[i] += dy[i] * (*mask)[i];
    });
  }
  return finish(out, "dropout");
}

// --- shape ------------------------------------------------------------------

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  Tensor out = Tensor::from(std::move(shape), std::vector<Real>(x.data().begin(), x.data().end()), wants_grad({&x}));
  if (out.requires_grad()) {
    TensorImpl *xi = x.impl(), *oi = out.impl();
    record("reshape", {&x}, out, [=] { kernels::axpy(Real{1}, out_grad(oi), grad_ptr(xi), xi->data.size()); });
  }
  return out;
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const Index rows = parts[0].dim(0);
  Index width = 0;
  bool rg = false;
  for (const Tensor& p : parts) {
    require_rank(p, 2, "concat_cols");
    if (p.dim(0) != rows) throw DimensionError("concat_cols: row mismatch at " + shape_str(p.shape()));
    width += p.dim(1);
    rg = rg || wants_grad({&p});
  }
  Tensor out = Tensor::zeros({rows, width}, rg);
  Index off = 0;
  for (const Tensor& p : parts) {
    const Index w = p.dim(1);
    for (Index r = 0; r < rows; ++r) std::copy_n(p.data().data() + r * w, w, out.data().data() + r * width + off);
    off += w;
  }
  if (rg) {
    std::vector<ImplPtr> ins;
    for (const Tensor& p : parts) ins.push_back(p.shared());
    TensorImpl* oi = out.impl();
    std::vector<TensorImpl*> raw;
    for (const auto& p : ins) raw.push_back(p.get());
    current_tape().record("concat_cols", ins, out.shared(), [=] {
      const Real* dy = out_grad(oi);
      Index o = 0;
      for (TensorImpl* pi : raw) {
        const Index w = pi->shape[1];
        if (pi->requires_grad) {
          Real* dp = grad_ptr(pi);
          for (Index r = 0; r < rows; ++r) kernels::axpy(Real{1}, dy + r * width + o, dp + r * w, w);
        }
        o += w;
      }
    });
  }
  return out;
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const Index width = parts[0].dim(1);
  Index rows = 0;
  bool rg = false;
  for (const Tensor& p : parts) {
    require_rank(p, 2, "concat_rows");
    if (p.dim(1) != width) throw DimensionError("concat_rows: width mismatch at " + shape_str(p.shape()));
    rows += p.dim(0);
    rg = rg || wants_grad({&p});
  }
  std::vector<Real> values;
  values.reserve(static_cast<std::size_t>(rows * width));
  for (const Tensor& p : parts) values.insert(values.end(), p.data().begin(), p.data().end());
  Tensor out = Tensor::from({rows, width}, std::move(values), rg);
  if (rg) {
    std::vector<ImplPtr> ins;
    std::vector<TensorImpl*> raw;
    for (const Tensor& p : parts) {
      ins.push_back(p.shared());
      raw.push_back(p.impl());
    }
    TensorImpl* oi = out.impl();
    current_tape().record("concat_rows", ins, out.shared(), [=] {
      const Real* dy = out_grad(oi);
      std::size_t o = 0;
      for (TensorImpl* pi : raw) {
        if (pi->requires_grad) kernels::axpy(Real{1}, dy + o, grad_ptr(pi), pi->data.size());
        o += pi->data.size();
      }
    });
  }
  return out;
}

Tensor slice_cols(const Tensor& x, Index start, Index width) {
  require_rank(x, 2, "slice_cols");
  if (start < 0 || width <= 0 || start + width > x.dim(1)) {
    throw DimensionError("slice_cols: [" + std::to_string(start) + ", +" + std::to_string(width) + ") out of " +
                         shape_str(x.shape()));
  }
  const Index rows = x.dim(0), cols = x.dim(1);
  Tensor out = Tensor::zeros({rows, width}, wants_grad({&x}));
  for (Index r = 0; r < rows; ++r) std::copy_n(x.data().data() + r * cols + start, width, out.data().data() + r * width);
  if (out.requires_grad()) {
    TensorImpl *xi = x.impl(), *oi = out.impl();
    record("slice_cols", {&x}, out, [=] {
      const Real* dy = out_grad(oi);
      Real* dx = grad_ptr(xi);
      for (Index r = 0; r < rows; ++r) kernels::axpy(Real{1}, dy + r * width, dx + r * cols + start, width);
    });
  }
  return out;
}

Tensor slice_rows(const Tensor& x, Index start, Index count) {
  require_rank(x, 2, "slice_rows");
  if (start < 0 || count <= 0 || start + count > x.dim(0)) {
    throw DimensionError("slice_rows: [" + std::to_string(start) + ", +" + std::to_string(count) + ") out of " +
                         shape_str(x.shape()));
  }
  const Index cols = x.dim(1);
  std::vector<Real> values(x.data().begin() + start * cols, x.data().begin() + (start + count) * cols);
  Tensor out = Tensor::from({count, cols}, std::move(values), wants_grad({&x}));
  if (out.requires_grad()) {
    TensorImpl *xi = x.impl(), *oi = out.impl();
    record("slice_rows", {&x}, out,
           [=] { kernels::axpy(Real{1}, out_grad(oi), grad_ptr(xi) + start * cols, count * cols); });
  }
  return out;
}

namespace {

// Copies between [batch*len x heads*dk] and [batch*heads x len x dk]. With
// `accumulate` the destination is added to rather than overwritten.
void permute_heads(const Real* src, Real* dst, Index batch, Index len, Index heads, Index dk, bool to_heads,
                   bool accumulate) {
  const Index d = heads * dk;
  for (Index b = 0; b < batch; ++b) {
    for (Index l = 0; l < len; ++l) {
      for (Index h = 0; h < heads; ++h) {
        const Real* flat = nullptr;
        Real* flat_out = nullptr;
        const Index flat_off = (b * len + l) * d + h * dk;
        const Index head_off = ((b * heads + h) * len + l) * dk;
        if (to_heads) {
          flat = src + flat_off;
          flat_out = dst + head_off;
        } else {
          flat = src + head_off;
          flat_out = dst + flat_off;
        }
        if (accumulate) {
          kernels::axpy(Real{1}, flat, flat_out, dk);
        } else {
          std::copy_n(flat, dk, flat_out);
        }
      }
    }
  }
}

}  // namespace

Tensor split_heads(const Tensor& x, Index batch, Index len, Index heads) {
  require_rank(x, 2, "split_heads");
  const Index d = x.dim(1);
  if (x.dim(0) != batch * len || d % heads != 0) {
    throw DimensionError("split_heads: " + shape_str(x.shape()) + " is not [" + std::to_string(batch) + "*" +
                         std::to_string(len) + " x heads*dk] with heads=" + std::to_string(heads));
  }
  const Index dk = d / heads;
  Tensor out = Tensor::zeros({batch * heads, len, dk}, wants_grad({&x}));
  permute_heads(x.data().data(), out.data().data(), batch, len, heads, dk, true, false);
  if (out.requires_grad()) {
    TensorImpl *xi = x.impl(), *oi = out.impl();
    record("split_heads", {&x}, out,
           [=] { permute_heads(out_grad(oi), grad_ptr(xi), batch, len, heads, dk, false, true); });
  }
  return out;
}

Tensor merge_heads(const Tensor& x, Index batch, Index len, Index heads) {
  require_rank(x, 3, "merge_heads");
  if (x.dim(0) != batch * heads || x.dim(1) != len) {
    throw DimensionError("merge_heads: unexpected shape " + shape_str(x.shape()));
  }
  const Index dk = x.dim(2);
  Tensor out = Tensor::zeros({batch * len, heads * dk}, wants_grad({&x}));
  permute_heads(x.data().data(), out.data().data(), batch, len, heads, dk, false, false);
  if (out.requires_grad()) {
    TensorImpl *xi = x.impl(), *oi = out.impl();
    record("merge_heads", {&x}, out,
           [=] { permute_heads(out_grad(oi), grad_ptr(xi), batch, len, heads, dk, true, true); });
  }
  return out;
}

// --- lookup -----------------------------------------------------------------

namespace {

Tensor gather_impl(const Tensor& table, std::span<const std::int32_t> ids, bool allow_missing, const char* name) {
  require_rank(table, 2, name);
  const Index rows = table.dim(0), d = table.dim(1);
  if (ids.empty()) throw DimensionError(std::string(name) + ": empty index list");
  for (std::int32_t id : ids) {
    if ((id < 0 && !(allow_missing && id == -1)) || id >= rows) {
      throw ContractError(std::string(name) + ": index " + std::to_string(id) + " outside table of " +
                          std::to_string(rows) + " rows");
    }
  }
  const Index n = static_cast<Index>(ids.size());
  Tensor out = Tensor::zeros({n, d}, wants_grad({&table}));
  for (Index i = 0; i < n; ++i) {
    if (ids[i] >= 0) std::copy_n(table.data().data() + ids[i] * d, d, out.data().data() + i * d);
  }
  if (out.requires_grad()) {
    auto idx = std::make_shared<std::vector<std::int32_t>>(ids.begin(), ids.end());
    TensorImpl *ti = table.impl(), *oi = out.impl();
    record(name, {&table}, out, [=] {
      const Real* dy = out_grad(oi);
      Real* dt = grad_ptr(ti);
      for (Index i = 0; i < n; ++i) {
        if ((*idx)[i] >= 0) kernels::axpy(Real{1}, dy + i * d, dt + (*idx)[i] * d, d);
      }
    });
  }
  return out;
}

}  // namespace

Tensor embedding(const Tensor& table, std::span<const std::int32_t> ids) {
  return gather_impl(table, ids, false, "embedding");
}

Tensor gather_rows(const Tensor& x, std::span<const std::int32_t> idx) { return gather_impl(x, idx, true, "gather_rows"); }

Tensor index_select(const Tensor& x, std::span<const std::int32_t> idx) {
  const Index n = x.numel();
  if (x.rank() > 2 || (x.rank() == 2 && x.dim(1) != 1)) {
    throw DimensionError("index_select: expected [n] or [n x 1], got " + shape_str(x.shape()));
  }
  for (std::int32_t i : idx) {
    if (i < 0 || i >= n) throw ContractError("index_select: index " + std::to_string(i) + " out of range");
  }
  const Index e = static_cast<Index>(idx.size());
  Tensor out = Tensor::zeros({e}, wants_grad({&x}));
  for (Index i = 0; i < e; ++i) out.data()[i] = x.at(idx[i]);
  if (out.requires_grad()) {
    auto ids = std::make_shared<std::vector<std::int32_t>>(idx.begin(), idx.end());
    TensorImpl *xi = x.impl(), *oi = out.impl();
    record("index_select", {&x}, out, [=] {
      const Real* dy = out_grad(oi);
      Real* dx = grad_ptr(xi);
      for (Index i = 0; i < e; ++i) dx[(*ids)[i]] += dy[i];
    });
  }
  return out;
}

// --- attention helpers ------------------------------------------------------

Tensor add_mask(const Tensor& scores, std::span<const Real> mask, Index heads) {
  require_rank(scores, 3, "add_mask");
  const Index g = scores.dim(0), lq = scores.dim(1), lk = scores.dim(2);
  const Index per = lq * lk;
  if (g % heads != 0 || static_cast<Index>(mask.size()) != (g / heads) * per) {
    throw DimensionError("add_mask: mask of " + std::to_string(mask.size()) + " values does not fit scores " +
                         shape_str(scores.shape()));
  }
  Tensor out = scores.clone(wants_grad({&scores}));
  for (Index i = 0; i < g; ++i) {
    kernels::add(out.data().data() + i * per, mask.data() + (i / heads) * per, out.data().data() + i * per, per);
  }
  if (out.requires_grad()) {
    TensorImpl *si = scores.impl(), *oi = out.impl();
    record("add_mask", {&scores}, out, [=] { kernels::axpy(Real{1}, out_grad(oi), grad_ptr(si), si->data.size()); });
  }
  return out;
}

Tensor segment_softmax(const Tensor& scores, std::span<const Index> offsets) {
  const Index e = scores.numel();
  if (offsets.empty() || offsets.front() != 0 || offsets.back() != e) {
    throw DimensionError("segment_softmax: offsets do not cover " + std::to_string(e) + " scores");
  }
  auto offs = std::make_shared<std::vector<Index>>(offsets.begin(), offsets.end());
  Tensor out = Tensor::zeros({e}, wants_grad({&scores}));
  const Real* x = scores.data().data();
  Real* y = out.data().data();
  for (std::size_t t = 0; t + 1 < offs->size(); ++t) {
    const Index lo = (*offs)[t], hi = (*offs)[t + 1];
    if (hi <= lo) continue;
    const Real mx = *std::max_element(x + lo, x + hi);
    Real total{0};
    for (Index i = lo; i < hi; ++i) {
      y[i] = std::exp(x[i] - mx);
      total += y[i];
    }
    for (Index i = lo; i < hi; ++i) y[i] /= total;
  }
  if (out.requires_grad()) {
    TensorImpl *si = scores.impl(), *oi = out.impl();
    record("segment_softmax", {&scores}, out, [=] {
      const Real* dy = out_grad(oi);
      const Real* yv = oi->data.data();
      Real* dx = grad_ptr(si);
      for (std::size_t t = 0; t + 1 < offs->size(); ++t) {
        const Index lo = (*offs)[t], hi = (*offs)[t + 1];
        Real inner{0};
        for (Index i = lo; i < hi; ++i) inner += dy[i] * yv[i];
        for (Index i = lo; i < hi; ++i) dx[i] += yv[i] * (dy[i] - inner);
      }
    });
  }
  return finish(out, "segment_softmax");
}

Tensor neighbor_aggregate(const Tensor& src, std::span<const std::int32_t> neighbors, const Tensor& weights,
                          std::span<const Index> offsets) {
  require_rank(src, 2, "neighbor_aggregate");
  const Index s = src.dim(0), w = src.dim(1);
  const Index e = static_cast<Index>(neighbors.size());
  if (weights.numel() != e || offsets.empty() || offsets.front() != 0 || offsets.back() != e) {
    throw DimensionError("neighbor_aggregate: weights/offsets do not match " + std::to_string(e) + " neighbors");
  }
  for (std::int32_t j : neighbors) {
    if (j < 0 || j >= s) throw ContractError("neighbor_aggregate: neighbor " + std::to_string(j) + " out of range");
  }
  const Index targets = static_cast<Index>(offsets.size()) - 1;
  auto nbr = std::make_shared<std::vector<std::int32_t>>(neighbors.begin(), neighbors.end());
  auto offs = std::make_shared<std::vector<Index>>(offsets.begin(), offsets.end());
  Tensor out = Tensor::zeros({targets, w}, wants_grad({&src, &weights}));
  for (Index t = 0; t < targets; ++t) {
    Real* o = out.data().data() + t * w;
    for (Index i = (*offs)[t]; i < (*offs)[t + 1]; ++i) {
      kernels::axpy(weights.at(i), src.data().data() + (*nbr)[i] * w, o, w);
    }
  }
  if (out.requires_grad()) {
    TensorImpl *si = src.impl(), *wi = weights.impl(), *oi = out.impl();
    record("neighbor_aggregate", {&src, &weights}, out, [=] {
      const Real* dy = out_grad(oi);
      for (Index t = 0; t < targets; ++t) {
        const Real* dyt = dy + t * w;
        for (Index i = (*offs)[t]; i < (*offs)[t + 1]; ++i) {
          const Index j = (*nbr)[i];
          if (si->requires_grad) kernels::axpy(wi->data[i], dyt, grad_ptr(si) + j * w, w);
          if (wi->requires_grad) grad_ptr(wi)[i] += kernels::dot(dyt, si->data.data() + j * w, w);
        }
      }
    });
  }
  return finish(out, "neighbor_aggregate");
}

// --- reductions -------------------------------------------------------------

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (Real v : x.data()) total += v;
  Tensor out = Tensor::scalar(static_cast<Real>(total), wants_grad({&x}));
  if (out.requires_grad()) {
    TensorImpl *xi = x.impl(), *oi = out.impl();
    record("sum", {&x}, out, [=] {
      const Real g = oi->grad[0];
      Real* dx = grad_ptr(xi);
      for (std::size_t i = 0; i < xi->data.size(); ++i) dx[i] += g;
    });
  }
  return out;
}

Tensor mean(const Tensor& x) { return scale(sum(x), Real{1} / static_cast<Real>(x.numel())); }

Tensor mean_rows(const Tensor& x) {
  require_rank(x, 2, "mean_rows");
  const Index n = x.dim(0), w = x.dim(1);
  Tensor out = Tensor::zeros({w}, wants_grad({&x}));
  const Real inv = Real{1} / static_cast<Real>(n);
  for (Index r = 0; r < n; ++r) kernels::axpy(inv, x.data().data() + r * w, out.data().data(), w);
  if (out.requires_grad()) {
    TensorImpl *xi = x.impl(), *oi = out.impl();
    record("mean_rows", {&x}, out, [=] {
      Real* dx = grad_ptr(xi);
      for (Index r = 0; r < n; ++r) kernels::axpy(inv, out_grad(oi), dx + r * w, w);
    });
  }
  return out;
}

Tensor stack(std::span<const Tensor> scalars) {
  if (scalars.empty()) throw DimensionError("stack: no inputs");
  bool rg = false;
  std::vector<Real> values;
  for (const Tensor& s : scalars) {
    values.push_back(s.item());
    rg = rg || wants_grad({&s});
  }
  Tensor out = Tensor::from({static_cast<Index>(scalars.size())}, std::move(values), rg);
  if (rg) {
    std::vector<ImplPtr> ins;
    std::vector<TensorImpl*> raw;
    for (const Tensor& s : scalars) {
      ins.push_back(s.shared());
      raw.push_back(s.impl());
    }
    TensorImpl* oi = out.impl();
    current_tape().record("stack", ins, out.shared(), [=] {
      for (std::size_t i = 0; i < raw.size(); ++i) {
        if (raw[i]->requires_grad) grad_ptr(raw[i])[0] += oi->grad[i];
      }
    });
  }
  return out;
}

Tensor weighted_sum(std::span<const Tensor> xs, const Tensor& weights) {
  if (xs.empty() || weights.numel() != static_cast<Index>(xs.size())) {
    throw DimensionError("weighted_sum: need one weight per input");
  }
  bool rg = wants_grad({&weights});
  for (const Tensor& x : xs) {
    require_same_shape(xs[0], x, "weighted_sum");
    rg = rg || wants_grad({&x});
  }
  Tensor out = Tensor::zeros(xs[0].shape(), rg);
  const std::size_t n = static_cast<std::size_t>(xs[0].numel());
  for (std::size_t p = 0; p < xs.size(); ++p) {
    kernels::axpy(weights.at(static_cast<Index>(p)), xs[p].data().data(), out.data().data(), n);
  }
  if (rg) {
    std::vector<ImplPtr> ins{weights.shared()};
    std::vector<TensorImpl*> raw;
    for (const Tensor& x : xs) {
      ins.push_back(x.shared());
      raw.push_back(x.impl());
    }
    TensorImpl *wi = weights.impl(), *oi = out.impl();
    current_tape().record("weighted_sum", ins, out.shared(), [=] {
      const Real* dy = out_grad(oi);
      for (std::size_t p = 0; p < raw.size(); ++p) {
        if (raw[p]->requires_grad) kernels::axpy(wi->data[p], dy, grad_ptr(raw[p]), n);
        if (wi->requires_grad) grad_ptr(wi)[p] += kernels::dot(dy, raw[p]->data.data(), n);
      }
    });
  }
  return finish(out, "weighted_sum");
}

BceResult bce_loss(const Tensor& probs, std::span<const Real> labels, std::span<const std::uint8_t> mask) {
  const Index n = probs.numel();
  if (static_cast<Index>(labels.size()) != n || static_cast<Index>(mask.size()) != n) {
    throw DimensionError("bce_loss: " + std::to_string(n) + " probabilities vs " + std::to_string(labels.size()) +
                         " labels and " + std::to_string(mask.size()) + " mask entries");
  }
  Index valid = 0;
  for (std::uint8_t m : mask) valid += m != 0 ? 1 : 0;
  if (valid == 0) return {Tensor::scalar(Real{0}), 0};
  const Real lo = kProbClamp, hi = Real{1} - kProbClamp;
  double total = 0.0;
  for (Index i = 0; i < n; ++i) {
    if (mask[i] == 0) continue;
    const double p = std::clamp(probs.at(i), lo, hi);
    total += labels[i] * std::log(p) + (1.0 - labels[i]) * std::log(1.0 - p);
  }
  const double inv_t = 1.0 / static_cast<double>(valid);
  Tensor out = Tensor::scalar(static_cast<Real>(-total * inv_t), wants_grad({&probs}));
  if (out.requires_grad()) {
    auto y = std::make_shared<std::vector<Real>>(labels.begin(), labels.end());
    auto m = std::make_shared<std::vector<std::uint8_t>>(mask.begin(), mask.end());
    TensorImpl *pi = probs.impl(), *oi = out.impl();
    record("bce_loss", {&probs}, out, [=] {
      const double g = oi->grad[0];
      Real* dp = grad_ptr(pi);
      for (Index i = 0; i < n; ++i) {
        if ((*m)[i] == 0) continue;
        const Real p = pi->data[i];
        if (p < lo || p > hi) continue;  // clamped: flat
        const double yi = (*y)[i];
        dp[i] += static_cast<Real>(-g * inv_t * (yi / p - (1.0 - yi) / (1.0 - p)));
      }
    });
  }
  return {out, valid};
}

}  // namespace pickt
