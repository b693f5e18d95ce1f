#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace pickt::data {

struct InteractionRecord {
  std::string student_id;
  std::string question_id;
  std::int64_t timestamp_ms = 0;
  int response = 0;  // 1 correct, 0 incorrect
  std::optional<std::int64_t> elapsed_ms;
  std::optional<std::int64_t> lag_ms;
};

struct QuestionMeta {
  std::string id;
  std::optional<std::string> type;
  std::optional<std::string> difficulty;
  std::optional<std::string> discrimination;
  std::optional<std::string> activity;
  std::optional<std::string> text;
  std::vector<std::string> linked_concepts;  // in edges_cq.csv order
};

struct ConceptMeta {
  std::string id;
  std::optional<std::string> area;
  std::optional<std::string> content_type;
  std::optional<std::string> text;
};

struct ConceptEdge {
  std::string src;
  std::string dst;
  std::string relation;
};

struct ConceptQuestionLink {
  std::string concept_id;
  std::string question_id;
};

struct DatasetStats {
  std::size_t questions = 0;
  std::size_t concepts = 0;
  std::size_t students = 0;
  std::size_t interactions = 0;
  std::size_t correct = 0;
  double correct_rate() const { return interactions == 0 ? 0.0 : double(correct) / double(interactions); }
};

/// Interactions plus the knowledge map, as loaded from a dataset directory.
struct Dataset {
  std::vector<InteractionRecord> records;
  std::vector<QuestionMeta> questions;
  std::vector<ConceptMeta> concepts;
  std::vector<ConceptEdge> cc_edges;
  std::vector<ConceptQuestionLink> cq_links;

  /// Rebuilds id -> position lookups and the questions' linked_concepts lists.
  void reindex();
  std::optional<std::size_t> question_index(const std::string& id) const;
  std::optional<std::size_t> concept_index(const std::string& id) const;

  DatasetStats stats() const;
  /// Sorted unique student ids.
  std::vector<std::string> student_ids() const;

  /// Record indices per student, ordered by timestamp with file order as
  /// tie-break. Students iterate in sorted id order.
  std::map<std::string, std::vector<std::size_t>> sequences() const;

 private:
  std::unordered_map<std::string, std::size_t> question_pos_;
  std::unordered_map<std::string, std::size_t> concept_pos_;
};

inline constexpr const char* kInteractionsFile = "interactions.csv";
inline constexpr const char* kQuestionsFile = "questions.csv";
inline constexpr const char* kConceptsFile = "concepts.csv";
inline constexpr const char* kEdgesCcFile = "edges_cc.csv";
inline constexpr const char* kEdgesCqFile = "edges_cq.csv";

/// Loads and validates the five CSV files. Throws DataError("file:line: cause")
/// on a missing file, unparsable row, non-binary response or dangling reference.
Dataset load_dataset(const std::filesystem::path& dir);

/// Writes the five CSV files (creating `dir`). Output is byte-deterministic.
void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);

/// Copy restricted to the given record indices (knowledge map unchanged).
Dataset subset_records(const Dataset& dataset, const std::vector<std::size_t>& record_indices);

}  // namespace pickt::data
