#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "pickt/core/rng.hpp"
#include "pickt/core/tensor.hpp"

namespace pickt {

inline constexpr double kInitStd = 0.02;

/// i.i.d. N(0, stddev^2) entries.
Tensor init_normal(const Shape& shape, Rng& rng, double stddev = kInitStd, bool requires_grad = true);

/// Learnable tensors addressed by hierarchical dotted names
/// ("decoder.layer0.cross.wq"), kept in registration order.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor tensor);
  Tensor& normal(const std::string& name, const Shape& shape, Rng& rng, double stddev = kInitStd);
  Tensor& zeros(const std::string& name, const Shape& shape);
  Tensor& ones(const std::string& name, const Shape& shape);

  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);

  const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
  std::vector<std::pair<std::string, Tensor>>& items() { return items_; }
  std::size_t size() const { return items_.size(); }
  /// Total number of scalar parameters.
  Index count() const;
  void zero_grad();
  /// Deep copy of every tensor (copies of a ParamStore otherwise alias).
  ParamStore clone() const;

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct AdamConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-12;
};

/// First/second moments per parameter plus the shared step counter.
class AdamState {
 public:
  explicit AdamState(AdamConfig config = {}) : config_(config) {}

  const AdamConfig& config() const { return config_; }
  std::uint64_t step() const { return step_; }

  struct Moments {
    Shape shape;
    std::vector<Real> first;
    std::vector<Real> second;
  };
  const Moments* moments(const std::string& name) const;

 private:
  friend void adam_step(ParamStore& params, AdamState& state);
  AdamConfig config_;
  std::uint64_t step_ = 0;
  std::unordered_map<std::string, Moments> moments_;
};

/// One bias-corrected Adam update of every parameter from its accumulated
/// gradient. Bumps each parameter's version. Throws DimensionError naming the
/// parameter when stored moments do not match its shape.
void adam_step(ParamStore& params, AdamState& state);

}  // namespace pickt
