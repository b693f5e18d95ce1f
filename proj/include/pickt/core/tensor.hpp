#pragma once

#include <cstddef>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "pickt/core/real.hpp"

namespace pickt {

using Shape = std::vector<Index>;

std::string shape_str(const Shape& shape);
Index shape_numel(const Shape& shape);

struct TensorImpl {
  Shape shape;
  std::vector<Real> data;
  std::vector<Real> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::uint64_t version = 0;  // bumped by in-place parameter updates

  TensorImpl(Shape s, std::vector<Real> d, bool rg);
  ~TensorImpl();
  TensorImpl(const TensorImpl&) = delete;
  TensorImpl& operator=(const TensorImpl&) = delete;

  Index numel() const { return static_cast<Index>(data.size()); }
  std::vector<Real>& ensure_grad();
};

/// Shared handle to a dense, contiguous, row-major tensor.
///
/// Copies of a Tensor alias the same storage. Values are treated as immutable
/// once an op has consumed them; the only sanctioned in-place writer is the
/// optimiser, which bumps `version` so stale tape entries can be detected.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, Real value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<Real> values, bool requires_grad = false);
  static Tensor scalar(Real value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  Index rank() const { return static_cast<Index>(impl_->shape.size()); }
  Index dim(Index axis) const;
  Index numel() const { return impl_->numel(); }

  std::span<Real> data() { return impl_->data; }
  std::span<const Real> data() const { return impl_->data; }
  Real item() const;
  Real at(Index flat) const { return impl_->data[static_cast<std::size_t>(flat)]; }

  bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool value) { impl_->requires_grad = value; }

  /// Accumulated gradient; all zeros when nothing reached this tensor.
  std::span<const Real> grad() const;
  std::span<Real> mutable_grad() { return impl_->ensure_grad(); }
  void zero_grad();

  /// Marks an in-place mutation of the values.
  void bump_version() { ++impl_->version; }
  std::uint64_t version() const { return impl_->version; }

  TensorImpl* impl() const { return impl_.get(); }
  const std::shared_ptr<TensorImpl>& shared() const { return impl_; }

  /// Deep copy without autograd history.
  Tensor clone(bool requires_grad = false) const;

 private:
  std::shared_ptr<TensorImpl> impl_;
};

/// Bytes held by live tensor storage in this process, and the high-water mark.
struct MemoryStats {
  std::size_t live_bytes = 0;
  std::size_t peak_bytes = 0;
};
MemoryStats memory_stats();
void reset_peak_memory();

}  // namespace pickt
