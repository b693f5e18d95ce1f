#include "pickt/data/split.hpp"

#include <algorithm>
#include <cmath>

#include "pickt/core/error.hpp"
#include "pickt/core/rng.hpp"

namespace pickt::data {

SplitPlan SplitPlan::parse(const std::string& text, std::uint64_t seed) {
  SplitPlan p;
  p.seed = seed;
  if (text == "holdout-8-1-1") {
    p.mode = SplitMode::Holdout811;
  } else if (text == "holdout-8-2") {
    p.mode = SplitMode::Holdout82;
  } else if (text.rfind("kfold-", 0) == 0) {
    p.mode = SplitMode::KFold;
    try {
      std::size_t used = 0;
      p.folds = std::stoi(text.substr(6), &used);
      if (used != text.size() - 6) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ParameterError("bad split mode '" + text + "'");
    }
    if (p.folds < 1) throw ParameterError("kfold needs at least one fold: '" + text + "'");
  } else {
    throw ParameterError("unknown split mode '" + text + "' (holdout-8-1-1, holdout-8-2, kfold-K)");
  }
  return p;
}

std::string SplitPlan::name() const {
  switch (mode) {
    case SplitMode::Holdout811:
      return "holdout-8-1-1";
    case SplitMode::Holdout82:
      return "holdout-8-2";
    case SplitMode::KFold:
      return "kfold-" + std::to_string(folds);
  }
  return "?";
}

namespace {

std::size_t tenth(std::size_t n, double parts) {
  return std::max<std::size_t>(1, std::size_t(std::llround(double(n) * parts / 10.0)));
}

}  // namespace

std::vector<Fold> split_students(std::vector<std::string> students, const SplitPlan& plan) {
  std::sort(students.begin(), students.end());
  students.erase(std::unique(students.begin(), students.end()), students.end());
  const std::size_t n = students.size();
  Rng rng = Rng(plan.seed).split("split");
  shuffle(students.begin(), students.end(), rng);

  auto slice = [&](std::size_t a, std::size_t b) {
    return std::vector<std::string>(students.begin() + std::ptrdiff_t(a), students.begin() + std::ptrdiff_t(b));
  };

  const bool eight_two = plan.mode == SplitMode::Holdout82 || (plan.mode == SplitMode::KFold && plan.folds == 1);
  if (plan.mode == SplitMode::Holdout811) {
    if (n < 3) throw DataError("holdout-8-1-1 needs at least 3 students, got " + std::to_string(n));
    const std::size_t nv = tenth(n, 1), nt = tenth(n, 1);
    if (nv + nt >= n) throw DataError("too few students for holdout-8-1-1: " + std::to_string(n));
    return {Fold{slice(nv + nt, n), slice(0, nv), slice(nv, nv + nt)}};
  }
  if (eight_two) {
    if (n < 2) throw DataError("holdout-8-2 needs at least 2 students, got " + std::to_string(n));
    const std::size_t nv = std::min(n - 1, tenth(n, 2));
    return {Fold{slice(nv, n), slice(0, nv), {}}};
  }

  const std::size_t k = std::size_t(plan.folds);
  if (n < k) {
    throw DataError("kfold-" + std::to_string(k) + " needs at least " + std::to_string(k) + " students, got " +
                    std::to_string(n));
  }
  std::vector<Fold> folds(k);
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t a = f * n / k, b = (f + 1) * n / k;
    folds[f].val = slice(a, b);
    folds[f].train = slice(0, a);
    auto tail = slice(b, n);
    folds[f].train.insert(folds[f].train.end(), tail.begin(), tail.end());
  }
  return folds;
}

}  // namespace pickt::data
