#pragma once

#include <cstdint>
#include <filesystem>

#include "pickt/data/dataset.hpp"

namespace pickt::data {

struct SynthOptions {
  std::size_t students = 200;
  std::size_t questions = 150;
  std::size_t concepts = 30;
  std::uint64_t seed = 1;
  std::size_t min_interactions = 20;  // per student
  std::size_t max_interactions = 60;
  /// Multiplies every item discrimination; 0 makes each response a fair coin.
  double discrimination_scale = 1.0;
  /// Added to ability minus difficulty before the logistic.
  double offset = 1.35;
  /// Mastery gained per attempt on a linked concept (decays with repetition).
  double learning_rate = 0.08;
};

/// Random concept DAG, question-concept links, evolving per-concept mastery and
/// two-parameter logistic responses. Question difficulty appears as a coarse
/// noisy category in the metadata and as a finer level word in the text.
Dataset synth_generate(const SynthOptions& options);

/// synth_generate followed by write_dataset.
Dataset synth_write(const SynthOptions& options, const std::filesystem::path& dir);

}  // namespace pickt::data
