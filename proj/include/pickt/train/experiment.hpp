#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pickt/data/dataset.hpp"
#include "pickt/data/split.hpp"
#include "pickt/embed/pca.hpp"
#include "pickt/han/graph.hpp"
#include "pickt/model/config.hpp"
#include "pickt/train/trainer.hpp"

namespace pickt::train {

inline constexpr const char* kQuestionEmbeddingFile = "q_text.emb";
inline constexpr const char* kConceptEmbeddingFile = "c_text.emb";

/// How node features are produced: raw text tables from `embeddings`
/// (q_text.emb, c_text.emb) or the hash fallback, then a shared PCA to in_dim.
struct GraphOptions {
  std::size_t in_dim = 64;
  std::size_t hash_dim = 256;
  std::optional<std::filesystem::path> embeddings;
  bool zero_text = false;  // ablation: every node feature is 0
};

struct GraphBuild {
  std::shared_ptr<const han::HeteroGraph> graph;
  embed::PcaModel pca;  // components may be fewer than in_dim (zero-padded)
  std::string feature_source;
};

/// Raw text table of every question (empty text for missing) and concept.
std::pair<embed::EmbeddingTable, embed::EmbeddingTable> raw_text_tables(const data::Dataset& dataset,
                                                                        const GraphOptions& options);
/// Builds the graph over the dataset's tables. PCA is fit on the union of the
/// question and concept rows unless `fitted` is given, which is then reused.
GraphBuild build_graph(const data::Dataset& dataset, const GraphOptions& options,
                       const embed::PcaModel* fitted = nullptr);

nlohmann::json pca_to_json(const embed::PcaModel& pca);
embed::PcaModel pca_from_json(const nlohmann::json& j);

struct ExperimentConfig {
  model::ModelConfig model;  // vocab sizes are replaced by the data's
  TrainConfig train;
  GraphOptions graph;
};

/// Seed of fold `fold` derived from the run seed.
std::uint64_t fold_seed(std::uint64_t seed, std::size_t fold);

struct FoldResult {
  std::size_t fold = 0;
  std::uint64_t seed = 0;
  data::Vocabularies vocab;
  model::ModelConfig config;
  TrainResult train;
  ParamStore params;  // best-validation parameters
  EvalReport val;
  std::optional<EvalReport> test;
  StratifiedReport val_strata;
  std::size_t train_windows = 0;
  std::size_t val_windows = 0;
};

using EpochCallback = std::function<void(std::size_t fold, const EpochRecord&)>;

/// Trains on fold.train students and evaluates the best-validation parameters
/// on fold.val (and fold.test when non-empty).
FoldResult run_fold(const data::Dataset& dataset, const data::Fold& fold, const ExperimentConfig& config,
                    const GraphBuild& graph, std::size_t fold_index, const EpochCallback& on_epoch = {});

struct KFoldResult {
  std::vector<FoldResult> folds;
  FoldSummary val_summary;
  std::optional<FoldSummary> test_summary;
};

/// One model per fold of `plan`; folds run on up to `threads` workers.
KFoldResult kfold_evaluate(const data::Dataset& dataset, const data::SplitPlan& plan, const ExperimentConfig& config,
                           std::size_t threads = 1, const EpochCallback& on_epoch = {});

nlohmann::json fold_to_json(const FoldResult& fold);

struct InferenceStats {
  std::size_t windows = 0;
  std::size_t predictions = 0;
  double seconds = 0.0;
  std::size_t peak_bytes = 0;  // peak live tensor storage during the run
  Index parameters = 0;
};

/// Timed inference over all windows at a fixed batch size of 64.
InferenceStats measure_inference(const model::PicktModel& model, const std::vector<data::SequenceWindow>& windows,
                                 std::size_t batch_size = 64);

}  // namespace pickt::train
