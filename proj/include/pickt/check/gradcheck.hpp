#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pickt/core/tensor.hpp"

namespace pickt::check {

struct GradCheckOptions {
  double step = kDoublePrecision ? 1e-5 : 1e-3;
  double tolerance = kDoublePrecision ? 1e-5 : 1e-3;
  /// Denominator floor of the relative error.
  double floor = 1e-3;
  std::uint64_t seed = 7;
};

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;  // perturbed scalars
  bool passed = false;
};

using TensorFn = std::function<Tensor(const std::vector<Tensor>&)>;

/// Central differences against reverse mode for every element of every input
/// that requires grad. Non-scalar outputs are reduced as sum(y * R) with a
/// fixed random R. Error per element: |a - n| / max(|a|, |n|, floor).
GradCheckResult gradcheck(const std::string& name, const TensorFn& fn, std::vector<Tensor> inputs,
                          const GradCheckOptions& options = {});

/// One check per differentiable op.
std::vector<GradCheckResult> op_suite(const GradCheckOptions& options = {});

/// The tiny end-to-end model (max length 4, d 8, one layer, one head, HAN on)
/// on a two-student synthetic batch; BCE loss against every parameter, evaluated at
/// parameters jittered away from the small initialisation.
GradCheckResult model_check(const GradCheckOptions& options = {});

}  // namespace pickt::check
