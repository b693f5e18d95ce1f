#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pickt/data/synth.hpp"
#include "pickt/model/config.hpp"
#include "pickt/train/experiment.hpp"

namespace pickt::cli {

/// Everything a subcommand reads. Defaults: the selected architecture with the
/// Adam defaults, hash-fallback text features and an 8:1:1 student holdout.
struct RunConfig {
  std::filesystem::path dataset_dir;
  std::filesystem::path output_dir = "runs";
  model::ModelConfig model = model::ModelConfig::selected({});
  train::TrainConfig train;
  std::string split_mode = "holdout-8-1-1";
  train::GraphOptions graph;

  std::string coldstart_scenario = "new-student";  // or "new-question"
  std::size_t diagnostic_count = 10;
  double question_fraction = 0.2;
  double student_fraction = 0.2;
  std::filesystem::path diagnostic_dir;
  std::filesystem::path followup_dir;
  bool coldstart_ablation = false;  // new-question: also train HAN off + zeroed text

  data::SynthOptions synth;

  /// Sets one key. ParameterError on an unknown key or unparsable value.
  void set(const std::string& key, const std::string& value);
  /// Keys in canonical order.
  static const std::vector<std::string>& keys();
  std::string get(const std::string& key) const;

  /// key = value lines for every key; parsing it back gives an identical config.
  std::string to_text() const;
  /// HAN widths follow the model width and the graph feature width.
  void finalize();
};

/// One "key = value" per line, '#' starts a comment. Errors name file:line.
void apply_config_text(RunConfig& config, const std::string& text, const std::string& origin = "<config>");
void apply_config_file(RunConfig& config, const std::filesystem::path& path);
/// "key=value" override.
void apply_override(RunConfig& config, const std::string& assignment);

/// `root`/`command`-YYYYmmdd-HHMMSS-seed<seed>, with a numeric suffix when
/// taken. The directory is created.
std::filesystem::path make_run_dir(const std::filesystem::path& root, const std::string& command, std::uint64_t seed);

/// PICKT_THREADS, at least 1; 1 when unset or invalid.
std::size_t thread_limit();

}  // namespace pickt::cli
