#include "pickt/core/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>

#include "pickt/core/error.hpp"

namespace pickt {

namespace {

std::atomic<std::size_t> g_live_bytes{0};
std::atomic<std::size_t> g_peak_bytes{0};

void track_alloc(std::size_t bytes) {
  const std::size_t live = g_live_bytes.fetch_add(bytes) + bytes;
  std::size_t peak = g_peak_bytes.load();
  while (live > peak && !g_peak_bytes.compare_exchange_weak(peak, live)) {
  }
}

}  // namespace

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i != 0) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Index shape_numel(const Shape& shape) {
  Index n = 1;
  for (Index d : shape) n *= d;
  return n;
}

TensorImpl::TensorImpl(Shape s, std::vector<Real> d, bool rg)
    : shape(std::move(s)), data(std::move(d)), requires_grad(rg) {
  for (Index dim : shape) {
    if (dim <= 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
  }
  if (shape_numel(shape) != static_cast<Index>(data.size())) {
    throw DimensionError("shape " + shape_str(shape) + " does not match " + std::to_string(data.size()) +
                         " values");
  }
  track_alloc(data.size() * sizeof(Real));
}

TensorImpl::~TensorImpl() { g_live_bytes.fetch_sub((data.size() + grad.size()) * sizeof(Real)); }

std::vector<Real>& TensorImpl::ensure_grad() {
  if (grad.empty()) {
    grad.assign(data.size(), Real{0});
    track_alloc(grad.size() * sizeof(Real));
  }
  return grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), Real{0}, requires_grad); }

Tensor Tensor::full(Shape shape, Real value, bool requires_grad) {
  const Index n = shape_numel(shape);
  if (n <= 0) throw DimensionError("tensor dimensions must be positive, got " + shape_str(shape));
  return Tensor(std::make_shared<TensorImpl>(std::move(shape), std::vector<Real>(static_cast<std::size_t>(n), value),
                                             requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<Real> values, bool requires_grad) {
  return Tensor(std::make_shared<TensorImpl>(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::scalar(Real value, bool requires_grad) { return from({1}, {value}, requires_grad); }

Index Tensor::dim(Index axis) const {
  const Index r = rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw DimensionError("axis out of range for shape " + shape_str(shape()));
  return impl_->shape[static_cast<std::size_t>(axis)];
}

Real Tensor::item() const {
  if (numel() != 1) throw ContractError("item() on non-scalar tensor " + shape_str(shape()));
  return impl_->data[0];
}

std::span<const Real> Tensor::grad() const { return impl_->ensure_grad(); }

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), Real{0});
}

Tensor Tensor::clone(bool requires_grad) const { return from(shape(), impl_->data, requires_grad); }

MemoryStats memory_stats() { return {g_live_bytes.load(), g_peak_bytes.load()}; }

void reset_peak_memory() { g_peak_bytes.store(g_live_bytes.load()); }

}  // namespace pickt
