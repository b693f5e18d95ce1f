#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "pickt/core/real.hpp"
#include "pickt/data/dataset.hpp"

namespace pickt::data {

/// Dense ids for one categorical column: 0 = UNK, 1 = start/special, real
/// values from 2 in sorted order.
class Vocabulary {
 public:
  static constexpr Index kUnk = 0;
  static constexpr Index kSpecial = 1;
  static constexpr Index kFirst = 2;

  Vocabulary() = default;
  Vocabulary(std::vector<std::string> values, const std::set<std::string>& exclude = {});

  Index id(const std::string& value) const;
  Index id(const std::optional<std::string>& value) const { return value ? id(*value) : kUnk; }
  Index id(const char* value) const { return id(std::string(value)); }
  bool contains(const std::string& value) const { return index_.count(value) != 0; }
  /// Number of embedding rows (values + the two reserved ids).
  Index size() const { return kFirst + Index(values_.size()); }
  const std::vector<std::string>& values() const { return values_; }

 private:
  std::vector<std::string> values_;
  std::unordered_map<std::string, Index> index_;
};

struct Vocabularies {
  Vocabulary question;
  Vocabulary question_type;
  Vocabulary difficulty;
  Vocabulary discrimination;
  Vocabulary activity;
  Vocabulary concept_id;
  Vocabulary area;
  Vocabulary content_type;

  /// Vocabularies over the question and concept tables. Question ids in
  /// `excluded_questions` are left out so they encode as UNK.
  static Vocabularies build(const Dataset& dataset, const std::set<std::string>& excluded_questions = {});
};

inline constexpr Index kElapsedMax = 300;  // seconds
inline constexpr Index kElapsedUnk = kElapsedMax + 1;
inline constexpr Index kElapsedStart = kElapsedMax + 2;
inline constexpr Index kElapsedRows = kElapsedMax + 3;
inline constexpr Index kLagMax = 1440;  // minutes
inline constexpr Index kLagUnk = kLagMax + 1;
inline constexpr Index kLagStart = kLagMax + 2;
inline constexpr Index kLagRows = kLagMax + 3;
inline constexpr Index kResponseStart = 2;
inline constexpr Index kResponseRows = 3;

struct TimeBuckets {
  Index elapsed = kElapsedUnk;
  Index lag = kLagUnk;
};

/// Elapsed: whole seconds clamped to [0,300]; lag: whole minutes clamped to
/// [0,1440]. Missing values map to the UNK bucket.
TimeBuckets bucketize_times(std::optional<std::int64_t> elapsed_ms, std::optional<std::int64_t> lag_ms);

/// One student's contiguous run of interactions with the decoder shift applied.
struct SequenceWindow {
  std::string student_id;
  std::vector<std::size_t> records;  // indices into Dataset::records

  // encoder, question stream
  std::vector<Index> question;
  std::vector<Index> question_type;
  std::vector<Index> difficulty;
  std::vector<Index> discrimination;
  std::vector<Index> activity;
  std::vector<Index> question_node;  // graph node, -1 when unknown
  // encoder, concept stream (first-listed concept)
  std::vector<Index> concept_id;
  std::vector<Index> area;
  std::vector<Index> content_type;
  std::vector<Index> concept_node;
  // decoder: action of the previous position, start token at 0
  std::vector<Index> prev_response;
  std::vector<Index> prev_elapsed;
  std::vector<Index> prev_lag;

  std::vector<int> labels;
  std::vector<std::uint8_t> scored;  // positions contributing to loss/metrics

  std::size_t length() const { return labels.size(); }
};

/// Which part of an interaction record was read while encoding.
enum class RecordField : std::uint8_t {
  Question = 1,       // question id and metadata, encoder input
  ResponseInput = 2,  // response as the next position's decoder input
  TimeInput = 4,      // elapsed/lag as the next position's decoder input
  Label = 8,          // response as a training or evaluation target
};

/// Record-level read log filled by FeatureEncoder.
class AccessLog {
 public:
  void note(std::size_t record, RecordField field) { reads_[record] |= std::uint8_t(field); }
  bool touched(std::size_t record) const { return reads_.count(record) != 0; }
  bool touched(std::size_t record, RecordField field) const {
    auto it = reads_.find(record);
    return it != reads_.end() && (it->second & std::uint8_t(field)) != 0;
  }
  std::size_t records() const { return reads_.size(); }
  /// Touched record indices, ascending.
  std::vector<std::size_t> touched_records() const;
  void clear() { reads_.clear(); }

 private:
  std::unordered_map<std::size_t, std::uint8_t> reads_;
};

/// Encodes record index lists into windows using fixed vocabularies.
class FeatureEncoder {
 public:
  FeatureEncoder(const Dataset& dataset, const Vocabularies& vocab) : dataset_(&dataset), vocab_(&vocab) {}

  /// Every subsequent encode() notes its reads in `log` (null to stop).
  void set_access_log(AccessLog* log) { log_ = log; }

  /// `records` are in sequence order; all positions scored unless `scored` given.
  SequenceWindow encode(const std::string& student, const std::vector<std::size_t>& records,
                        const std::vector<std::uint8_t>* scored = nullptr) const;

  const Dataset& dataset() const { return *dataset_; }
  const Vocabularies& vocab() const { return *vocab_; }

 private:
  const Dataset* dataset_;
  const Vocabularies* vocab_;
  AccessLog* log_ = nullptr;
};

/// Contiguous non-overlapping windows of at most `max_seq_len` per student,
/// final partial window kept. Restricted to `students` when non-null.
std::vector<SequenceWindow> window_sequences(const FeatureEncoder& encoder, std::size_t max_seq_len,
                                             const std::set<std::string>* students = nullptr);

/// Windows padded to the longest member, stored row-major [B x L].
struct Batch {
  Index batch = 0;
  Index len = 0;
  std::vector<Index> lengths;

  std::vector<Index> question, question_type, difficulty, discrimination, activity, question_node;
  std::vector<Index> concept_id, area, content_type, concept_node;
  std::vector<Index> prev_response, prev_elapsed, prev_lag;
  std::vector<Real> labels;
  std::vector<Real> loss_mask;  // 1 at scored, unpadded positions

  bool valid(Index b, Index t) const { return t < lengths[b]; }
  std::size_t scored_count() const;
};

Batch make_batch(const std::vector<SequenceWindow>& windows, const std::vector<std::size_t>& members);
Batch make_batch(const std::vector<SequenceWindow>& windows);

}  // namespace pickt::data
