#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pickt::data {

enum class SplitMode { Holdout811, Holdout82, KFold };

struct SplitPlan {
  SplitMode mode = SplitMode::Holdout811;
  int folds = 5;  // KFold only
  std::uint64_t seed = 0;

  /// "holdout-8-1-1", "holdout-8-2" or "kfold-K".
  static SplitPlan parse(const std::string& text, std::uint64_t seed = 0);
  std::string name() const;
};

/// Student ids per role. `test` is empty outside the 8:1:1 mode.
struct Fold {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
};

/// Partitions students after a seeded shuffle. Holdout modes return one fold;
/// kfold-K returns K folds whose `val` sets partition the students. kfold-1 is
/// the 8:2 holdout. Throws DataError when there are too few students.
std::vector<Fold> split_students(std::vector<std::string> students, const SplitPlan& plan);

}  // namespace pickt::data
