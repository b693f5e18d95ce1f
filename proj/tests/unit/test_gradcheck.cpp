#include "doctest.h"
#include "pickt/check/gradcheck.hpp"
#include "pickt/core/ops.hpp"

using namespace pickt;

TEST_CASE("every differentiable op passes the finite-difference check") {
  for (const auto& r : check::op_suite()) {
    INFO(r.name << " max relative error " << r.max_rel_error);
    CHECK(r.checked > 0);
    CHECK(r.passed);
  }
}

TEST_CASE("the tiny end-to-end model passes the finite-difference check") {
  const auto r = check::model_check();
  INFO("max relative error " << r.max_rel_error);
  CHECK(r.checked > 10000);
  CHECK(r.passed);
}

TEST_CASE("a wrong backward rule is caught") {
  // A function whose reverse mode ignores one input: |a - n| = |n|.
  const check::TensorFn fn = [](const std::vector<Tensor>& x) {
    Tensor frozen = x[1].clone();
    return sum(mul(x[0], frozen));
  };
  const auto r = check::gradcheck("broken", fn, {Tensor::from({2}, {1, 2}, true), Tensor::from({2}, {3, 4}, true)});
  CHECK_FALSE(r.passed);
  CHECK(r.max_rel_error == doctest::Approx(1.0));
}
