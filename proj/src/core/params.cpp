#include "pickt/core/params.hpp"

#include <cmath>

#include "pickt/core/error.hpp"

namespace pickt {

Tensor init_normal(const Shape& shape, Rng& rng, double stddev, bool requires_grad) {
  std::vector<Real> values(static_cast<std::size_t>(shape_numel(shape)));
  for (Real& v : values) v = static_cast<Real>(rng.normal(0.0, stddev));
  return Tensor::from(shape, std::move(values), requires_grad);
}

Tensor& ParamStore::add(const std::string& name, Tensor tensor) {
  if (contains(name)) throw ContractError("duplicate parameter '" + name + "'");
  tensor.set_requires_grad(true);
  index_.emplace(name, items_.size());
  items_.emplace_back(name, std::move(tensor));
  return items_.back().second;
}

Tensor& ParamStore::normal(const std::string& name, const Shape& shape, Rng& rng, double stddev) {
  return add(name, init_normal(shape, rng, stddev));
}

Tensor& ParamStore::zeros(const std::string& name, const Shape& shape) { return add(name, Tensor::zeros(shape)); }

Tensor& ParamStore::ones(const std::string& name, const Shape& shape) { return add(name, Tensor::full(shape, Real{1})); }

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter '" + name + "'");
  return items_[it->second].second;
}

Tensor& ParamStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter '" + name + "'");
  return items_[it->second].second;
}

Index ParamStore::count() const {
  Index n = 0;
  for (const auto& [name, t] : items_) n += t.numel();
  return n;
}

ParamStore ParamStore::clone() const {
  ParamStore out;
  for (const auto& [name, t] : items_) out.add(name, t.clone(t.requires_grad()));
  return out;
}

void ParamStore::zero_grad() {
  for (auto& [name, t] : items_) t.zero_grad();
}

const AdamState::Moments* AdamState::moments(const std::string& name) const {
  auto it = moments_.find(name);
  return it == moments_.end() ? nullptr : &it->second;
}

void adam_step(ParamStore& params, AdamState& state) {
  const AdamConfig& c = state.config_;
  const std::uint64_t t = state.step_ + 1;
  const double correct1 = 1.0 - std::pow(c.beta1, static_cast<double>(t));
  const double correct2 = 1.0 - std::pow(c.beta2, static_cast<double>(t));
  for (auto& [name, param] : params.items()) {
    auto [it, inserted] = state.moments_.try_emplace(name);
    AdamState::Moments& mo = it->second;
    if (inserted) {
      mo.shape = param.shape();
      mo.first.assign(static_cast<std::size_t>(param.numel()), Real{0});
      mo.second.assign(static_cast<std::size_t>(param.numel()), Real{0});
    } else if (mo.shape != param.shape()) {
      throw DimensionError("adam_step: parameter '" + name + "' has shape " + shape_str(param.shape()) +
                           " but optimiser state has " + shape_str(mo.shape));
    }
    std::span<const Real> g = param.grad();
    std::span<Real> p = param.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i];
      const double m = c.beta1 * mo.first[i] + (1.0 - c.beta1) * gi;
      const double v = c.beta2 * mo.second[i] + (1.0 - c.beta2) * gi * gi;
      mo.first[i] = static_cast<Real>(m);
      mo.second[i] = static_cast<Real>(v);
      const double mhat = m / correct1;
      const double vhat = v / correct2;
      p[i] = static_cast<Real>(p[i] - c.learning_rate * mhat / (std::sqrt(vhat) + c.epsilon));
    }
    param.bump_version();
  }
  state.step_ = t;
}

}  // namespace pickt
