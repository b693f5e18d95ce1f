#include "pickt/data/features.hpp"

#include <algorithm>
#include <numeric>

#include "pickt/core/error.hpp"

namespace pickt::data {

Vocabulary::Vocabulary(std::vector<std::string> values, const std::set<std::string>& exclude) {
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  for (auto& v : values) {
    if (exclude.count(v)) continue;
    index_.emplace(v, kFirst + Index(values_.size()));
    values_.push_back(std::move(v));
  }
}

Index Vocabulary::id(const std::string& value) const {
  auto it = index_.find(value);
  return it == index_.end() ? kUnk : it->second;
}

namespace {

template <class Rows, class Get>
Vocabulary collect(const Rows& rows, Get get, const std::set<std::string>& exclude = {}) {
  std::vector<std::string> values;
  for (const auto& r : rows) {
    const std::optional<std::string> v = get(r);
    if (v) values.push_back(*v);
  }
  return Vocabulary(std::move(values), exclude);
}

}  // namespace

Vocabularies Vocabularies::build(const Dataset& ds, const std::set<std::string>& excluded_questions) {
  Vocabularies v;
  v.question = collect(ds.questions, [](const QuestionMeta& q) { return std::optional(q.id); }, excluded_questions);
  v.question_type = collect(ds.questions, [](const QuestionMeta& q) { return q.type; });
  v.difficulty = collect(ds.questions, [](const QuestionMeta& q) { return q.difficulty; });
  v.discrimination = collect(ds.questions, [](const QuestionMeta& q) { return q.discrimination; });
  v.activity = collect(ds.questions, [](const QuestionMeta& q) { return q.activity; });
  v.concept_id = collect(ds.concepts, [](const ConceptMeta& c) { return std::optional(c.id); });
  v.area = collect(ds.concepts, [](const ConceptMeta& c) { return c.area; });
  v.content_type = collect(ds.concepts, [](const ConceptMeta& c) { return c.content_type; });
  return v;
}

TimeBuckets bucketize_times(std::optional<std::int64_t> elapsed_ms, std::optional<std::int64_t> lag_ms) {
  TimeBuckets b;
  if (elapsed_ms) b.elapsed = std::clamp<std::int64_t>(*elapsed_ms / 1000, 0, kElapsedMax);
  if (lag_ms) b.lag = std::clamp<std::int64_t>(*lag_ms / 60000, 0, kLagMax);
  return b;
}

SequenceWindow FeatureEncoder::encode(const std::string& student, const std::vector<std::size_t>& records,
                                      const std::vector<std::uint8_t>* scored) const {
  const Dataset& ds = *dataset_;
  const Vocabularies& vc = *vocab_;
  const std::size_t n = records.size();
  if (scored && scored->size() != n) throw DimensionError("scored mask length does not match window length");
  SequenceWindow w;
  w.student_id = student;
  w.records = records;
  for (auto* v : {&w.question, &w.question_type, &w.difficulty, &w.discrimination, &w.activity, &w.question_node,
                  &w.concept_id, &w.area, &w.content_type, &w.concept_node, &w.prev_response, &w.prev_elapsed,
                  &w.prev_lag}) {
    v->reserve(n);
  }
  w.labels.reserve(n);
  for (std::size_t t = 0; t < n; ++t) {
    const InteractionRecord& r = ds.records.at(records[t]);
    if (log_) {
      log_->note(records[t], RecordField::Question);
      log_->note(records[t], RecordField::Label);
      if (t > 0) {
        log_->note(records[t - 1], RecordField::ResponseInput);
        log_->note(records[t - 1], RecordField::TimeInput);
      }
    }
    const auto qi = ds.question_index(r.question_id);
    if (!qi) throw DataError("interaction references unknown question '" + r.question_id + "'");
    const QuestionMeta& q = ds.questions[*qi];
    w.question.push_back(vc.question.id(q.id));
    w.question_type.push_back(vc.question_type.id(q.type));
    w.difficulty.push_back(vc.difficulty.id(q.difficulty));
    w.discrimination.push_back(vc.discrimination.id(q.discrimination));
    w.activity.push_back(vc.activity.id(q.activity));
    w.question_node.push_back(Index(*qi));

    const auto ci = q.linked_concepts.empty() ? std::nullopt : ds.concept_index(q.linked_concepts.front());
    if (ci) {
      const ConceptMeta& c = ds.concepts[*ci];
      w.concept_id.push_back(vc.concept_id.id(c.id));
      w.area.push_back(vc.area.id(c.area));
      w.content_type.push_back(vc.content_type.id(c.content_type));
      w.concept_node.push_back(Index(*ci));
    } else {
      w.concept_id.push_back(Vocabulary::kUnk);
      w.area.push_back(Vocabulary::kUnk);
      w.content_type.push_back(Vocabulary::kUnk);
      w.concept_node.push_back(-1);
    }

    if (t == 0) {
      w.prev_response.push_back(kResponseStart);
      w.prev_elapsed.push_back(kElapsedStart);
      w.prev_lag.push_back(kLagStart);
    } else {
      const InteractionRecord& p = ds.records[records[t - 1]];
      const TimeBuckets b = bucketize_times(p.elapsed_ms, p.lag_ms);
      w.prev_response.push_back(p.response);
      w.prev_elapsed.push_back(b.elapsed);
      w.prev_lag.push_back(b.lag);
    }
    w.labels.push_back(r.response);
  }
  w.scored = scored ? *scored : std::vector<std::uint8_t>(n, 1);
  return w;
}

std::vector<std::size_t> AccessLog::touched_records() const {
  std::vector<std::size_t> out;
  out.reserve(reads_.size());
  for (const auto& [rec, fields] : reads_) out.push_back(rec);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<SequenceWindow> window_sequences(const FeatureEncoder& encoder, std::size_t max_seq_len,
                                             const std::set<std::string>* students) {
  if (max_seq_len == 0) throw ParameterError("max_seq_len must be positive");
  std::vector<SequenceWindow> out;
  for (const auto& [student, idx] : encoder.dataset().sequences()) {
    if (students && !students->count(student)) continue;
    for (std::size_t start = 0; start < idx.size(); start += max_seq_len) {
      const std::size_t end = std::min(idx.size(), start + max_seq_len);
      out.push_back(encoder.encode(student, {idx.begin() + start, idx.begin() + end}));
    }
  }
  return out;
}

std::size_t Batch::scored_count() const {
  std::size_t n = 0;
  for (Real m : loss_mask) n += m != 0 ? 1 : 0;
  return n;
}

Batch make_batch(const std::vector<SequenceWindow>& windows, const std::vector<std::size_t>& members) {
  Batch b;
  b.batch = Index(members.size());
  for (std::size_t m : members) b.len = std::max<Index>(b.len, Index(windows.at(m).length()));
  const std::size_t cells = std::size_t(b.batch * b.len);
  auto fill = [&](std::vector<Index>& dst, Index pad, auto field) {
    dst.assign(cells, pad);
    for (std::size_t i = 0; i < members.size(); ++i) {
      const auto& src = windows[members[i]].*field;
      std::copy(src.begin(), src.end(), dst.begin() + std::ptrdiff_t(i * std::size_t(b.len)));
    }
  };
  fill(b.question, Vocabulary::kUnk, &SequenceWindow::question);
  fill(b.question_type, Vocabulary::kUnk, &SequenceWindow::question_type);
  fill(b.difficulty, Vocabulary::kUnk, &SequenceWindow::difficulty);
  fill(b.discrimination, Vocabulary::kUnk, &SequenceWindow::discrimination);
  fill(b.activity, Vocabulary::kUnk, &SequenceWindow::activity);
  fill(b.question_node, -1, &SequenceWindow::question_node);
  fill(b.concept_id, Vocabulary::kUnk, &SequenceWindow::concept_id);
  fill(b.area, Vocabulary::kUnk, &SequenceWindow::area);
  fill(b.content_type, Vocabulary::kUnk, &SequenceWindow::content_type);
  fill(b.concept_node, -1, &SequenceWindow::concept_node);
  fill(b.prev_response, kResponseStart, &SequenceWindow::prev_response);
  fill(b.prev_elapsed, kElapsedUnk, &SequenceWindow::prev_elapsed);
  fill(b.prev_lag, kLagUnk, &SequenceWindow::prev_lag);
  b.labels.assign(cells, 0);
  b.loss_mask.assign(cells, 0);
  b.lengths.reserve(members.size());
  for (std::size_t i = 0; i < members.size(); ++i) {
    const SequenceWindow& w = windows[members[i]];
    b.lengths.push_back(Index(w.length()));
    for (std::size_t t = 0; t < w.length(); ++t) {
      b.labels[i * std::size_t(b.len) + t] = Real(w.labels[t]);
      b.loss_mask[i * std::size_t(b.len) + t] = w.scored[t] ? Real(1) : Real(0);
    }
  }
  return b;
}

Batch make_batch(const std::vector<SequenceWindow>& windows) {
  std::vector<std::size_t> all(windows.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return make_batch(windows, all);
}

}  // namespace pickt::data
