#include "pickt/train/coldstart.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <tuple>

#include "pickt/core/error.hpp"
#include "pickt/core/rng.hpp"

namespace pickt::train {

data::SequenceWindow append_one(const data::FeatureEncoder& encoder, const std::string& student,
                                const std::vector<std::size_t>& context, std::size_t target, std::size_t max_seq_len) {
  if (max_seq_len == 0) throw ParameterError("max_seq_len must be positive");
  const std::size_t keep = std::min(context.size(), max_seq_len - 1);
  std::vector<std::size_t> records(context.end() - std::ptrdiff_t(keep), context.end());
  records.push_back(target);
  std::vector<std::uint8_t> scored(keep, 0);
  scored.push_back(1);
  return encoder.encode(student, records, &scored);
}

namespace {

std::size_t fraction_of(std::size_t n, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw ParameterError("cold-start fractions must lie in (0, 1)");
  if (n < 2) throw DataError("cold-start split needs at least 2 items, got " + std::to_string(n));
  const auto k = std::size_t(std::llround(fraction * double(n)));
  return std::clamp<std::size_t>(k, 1, n - 1);
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / double(v.size() - 1));
}

}  // namespace

NewQuestionSplit split_new_question(const data::Dataset& ds, const NewQuestionOptions& o, std::uint64_t seed) {
  const Rng root(seed);
  NewQuestionSplit s;
  std::vector<std::string> qids;
  for (const auto& q : ds.questions) qids.push_back(q.id);
  std::sort(qids.begin(), qids.end());
  Rng qrng = root.split("coldstart.questions");
  shuffle(qids.begin(), qids.end(), qrng);
  const std::size_t nq = fraction_of(qids.size(), o.question_fraction);
  s.heldout_questions.insert(qids.begin(), qids.begin() + std::ptrdiff_t(nq));

  std::vector<std::string> students = ds.student_ids();
  Rng srng = root.split("coldstart.students");
  shuffle(students.begin(), students.end(), srng);
  const std::size_t ns = fraction_of(students.size(), o.student_fraction);
  s.eval_students.assign(students.begin(), students.begin() + std::ptrdiff_t(ns));
  s.train_students.assign(students.begin() + std::ptrdiff_t(ns), students.end());
  std::sort(s.eval_students.begin(), s.eval_students.end());
  std::sort(s.train_students.begin(), s.train_students.end());
  return s;
}

void check_no_leakage(const data::Vocabularies& vocab, const std::set<std::string>& heldout) {
  for (const auto& id : heldout) {
    if (vocab.question.contains(id)) throw DataError("leakage: held-out question '" + id + "' is in the training vocabulary");
  }
}

NewQuestionResult run_new_question(const data::Dataset& ds, const ExperimentConfig& cfg, const NewQuestionOptions& o,
                                   const EpochCallback& on_epoch) {
  NewQuestionResult r;
  r.split = split_new_question(ds, o, cfg.train.seed);
  const auto& held = r.split.heldout_questions;
  r.vocab = data::Vocabularies::build(ds, held);
  check_no_leakage(r.vocab, held);
  r.config = cfg.model;
  r.config.vocab = model::VocabSizes::from(r.vocab);
  r.config.validate();

  auto is_held = [&](std::size_t rec) { return held.count(ds.records[rec].question_id) != 0; };
  const auto sequences = ds.sequences();
  const std::set<std::string> train_set(r.split.train_students.begin(), r.split.train_students.end());

  data::FeatureEncoder encoder(ds, r.vocab);
  data::AccessLog log;
  encoder.set_access_log(&log);
  std::vector<data::SequenceWindow> train_w;
  for (const auto& student : r.split.train_students) {
    std::vector<std::size_t> kept;
    for (std::size_t rec : sequences.at(student)) {
      if (!is_held(rec)) kept.push_back(rec);
    }
    r.training_records += kept.size();
    for (std::size_t start = 0; start < kept.size(); start += r.config.max_seq_len) {
      const std::size_t end = std::min(kept.size(), start + r.config.max_seq_len);
      train_w.push_back(encoder.encode(student, {kept.begin() + std::ptrdiff_t(start), kept.begin() + std::ptrdiff_t(end)}));
    }
  }
  encoder.set_access_log(nullptr);
  for (std::size_t rec : log.touched_records()) {
    if (is_held(rec)) throw ContractError("training read held-out interaction row " + std::to_string(rec));
    if (!train_set.count(ds.records[rec].student_id)) {
      throw ContractError("training read evaluation-student row " + std::to_string(rec));
    }
  }
  r.records_read = log.records();

  std::vector<data::SequenceWindow> eval_w;
  for (const auto& student : r.split.eval_students) {
    std::vector<std::size_t> history;
    for (std::size_t rec : sequences.at(student)) {
      if (is_held(rec)) {
        eval_w.push_back(append_one(encoder, student, history, rec, r.config.max_seq_len));
      } else {
        history.push_back(rec);
      }
    }
  }

  const GraphBuild graph = build_graph(ds, cfg.graph);
  model::PicktModel m(r.config, fold_seed(cfg.train.seed, 0));
  m.attach_graph(graph.graph);
  TrainConfig tc = cfg.train;
  tc.seed = fold_seed(cfg.train.seed, 0);
  r.train = train(m, train_w, {}, tc, [&](const EpochRecord& e) {
    if (on_epoch) on_epoch(0, e);
  });

  r.predictions = predict(m, eval_w, tc.eval_batch_size);
  r.heldout = compute_metrics(r.predictions.probs, r.predictions.labels);
  std::map<std::string, std::pair<double, std::size_t>> per_question;
  for (std::size_t i = 0; i < r.predictions.size(); ++i) {
    const std::string& q = ds.records[r.predictions.record[i]].question_id;
    r.predicted_question.push_back(q);
    auto& [sum, n] = per_question[q];
    sum += r.predictions.probs[i];
    ++n;
  }
  std::vector<double> means;
  for (const auto& [q, sn] : per_question) means.push_back(sn.first / double(sn.second));
  r.questions_evaluated = means.size();
  r.question_mean_std = sample_std(means);
  return r;
}

namespace {

void merge_tables(data::Dataset& into, const data::Dataset& from) {
  std::set<std::string> qs, cs;
  for (const auto& q : into.questions) qs.insert(q.id);
  for (const auto& c : into.concepts) cs.insert(c.id);
  for (const auto& c : from.concepts) {
    if (cs.insert(c.id).second) into.concepts.push_back(c);
  }
  for (const auto& q : from.questions) {
    if (qs.insert(q.id).second) into.questions.push_back(q);
  }
  std::set<std::tuple<std::string, std::string, std::string>> cc;
  for (const auto& e : into.cc_edges) cc.emplace(e.src, e.dst, e.relation);
  for (const auto& e : from.cc_edges) {
    if (cc.emplace(e.src, e.dst, e.relation).second) into.cc_edges.push_back(e);
  }
  std::set<std::pair<std::string, std::string>> cq;
  for (const auto& l : into.cq_links) cq.emplace(l.concept_id, l.question_id);
  for (const auto& l : from.cq_links) {
    if (cq.emplace(l.concept_id, l.question_id).second) into.cq_links.push_back(l);
  }
}

}  // namespace

NewStudentData merge_new_student(const data::Dataset& diagnostic, const data::Dataset& followup) {
  NewStudentData out;
  out.dataset = followup;
  merge_tables(out.dataset, diagnostic);
  out.dataset.records = diagnostic.records;
  out.dataset.records.insert(out.dataset.records.end(), followup.records.begin(), followup.records.end());
  out.followup.assign(diagnostic.records.size(), 0);
  out.followup.resize(out.dataset.records.size(), 1);
  out.dataset.reindex();
  return out;
}

NewStudentData prefix_new_student(const data::Dataset& ds, std::size_t diagnostic_count,
                                  const std::set<std::string>* students) {
  std::vector<std::size_t> keep;
  std::vector<std::uint8_t> flags;
  for (const auto& [student, idx] : ds.sequences()) {
    if (students && !students->count(student)) continue;
    if (idx.size() <= diagnostic_count) continue;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      keep.push_back(idx[i]);
      flags.push_back(i < diagnostic_count ? 0 : 1);
    }
  }
  NewStudentData out;
  out.dataset = data::subset_records(ds, keep);
  out.followup = std::move(flags);
  return out;
}

bool question_included(const data::Dataset& ds, const std::string& question_id, const std::set<std::string>& diag) {
  const auto qi = ds.question_index(question_id);
  if (!qi) throw DataError("unknown question '" + question_id + "'");
  const auto& linked = ds.questions[*qi].linked_concepts;
  return std::all_of(linked.begin(), linked.end(), [&](const std::string& c) { return diag.count(c) != 0; });
}

NewStudentResult run_new_student(const model::PicktModel& model, const data::Vocabularies& vocab,
                                 const NewStudentData& nd, std::size_t batch_size) {
  const data::Dataset& ds = nd.dataset;
  if (nd.followup.size() != ds.records.size()) throw DimensionError("follow-up flags do not match the records");
  NewStudentResult r;
  for (std::size_t rec = 0; rec < ds.records.size(); ++rec) {
    if (nd.followup[rec]) continue;
    const auto qi = ds.question_index(ds.records[rec].question_id);
    if (!qi) throw DataError("unknown question '" + ds.records[rec].question_id + "'");
    for (const auto& c : ds.questions[*qi].linked_concepts) r.diagnostic_concepts.insert(c);
  }

  const std::size_t max_len = model.config().max_seq_len;
  data::FeatureEncoder encoder(ds, vocab);
  data::AccessLog log;
  encoder.set_access_log(&log);
  std::vector<data::SequenceWindow> windows;
  for (const auto& [student, idx] : ds.sequences()) {
    std::vector<std::size_t> diag, follow;
    for (std::size_t rec : idx) (nd.followup[rec] ? follow : diag).push_back(rec);
    if (follow.empty()) continue;
    ++r.students;
    const std::set<std::size_t> allowed(diag.begin(), diag.end());
    for (std::size_t target : follow) {
      log.clear();
      windows.push_back(append_one(encoder, student, diag, target, max_len));
      if (log.touched(target, data::RecordField::ResponseInput) || log.touched(target, data::RecordField::TimeInput)) {
        throw ContractError("follow-up row " + std::to_string(target) + " leaked its response or time input");
      }
      for (std::size_t rec : log.touched_records()) {
        if (rec != target && !allowed.count(rec)) {
          throw ContractError("window for row " + std::to_string(target) + " read non-diagnostic row " +
                              std::to_string(rec));
        }
      }
      ++r.checked_windows;
    }
  }
  encoder.set_access_log(nullptr);
  r.windows = windows.size();

  r.predictions = predict(model, windows, batch_size);
  std::vector<double> p_in, p_out;
  std::vector<int> y_in, y_out;
  for (std::size_t i = 0; i < r.predictions.size(); ++i) {
    const bool inc = question_included(ds, ds.records[r.predictions.record[i]].question_id, r.diagnostic_concepts);
    r.included.push_back(inc ? 1 : 0);
    (inc ? p_in : p_out).push_back(r.predictions.probs[i]);
    (inc ? y_in : y_out).push_back(r.predictions.labels[i]);
  }
  r.reports.included = compute_metrics(p_in, y_in);
  r.reports.not_included = compute_metrics(p_out, y_out);
  r.reports.overall = compute_metrics(r.predictions.probs, r.predictions.labels);
  return r;
}

NewStudentExperiment run_new_student_experiment(const data::Dataset& ds, const ExperimentConfig& cfg,
                                                std::size_t diagnostic_count, const EpochCallback& on_epoch) {
  NewStudentExperiment out;
  const auto folds = data::split_students(ds.student_ids(), data::SplitPlan{data::SplitMode::Holdout82, 5, cfg.train.seed});
  out.train_students = folds.at(0).train;
  out.eval_students = folds.at(0).val;

  const data::Vocabularies vocab = data::Vocabularies::build(ds);
  model::ModelConfig mc = cfg.model;
  mc.vocab = model::VocabSizes::from(vocab);
  mc.validate();
  const data::FeatureEncoder encoder(ds, vocab);
  const std::set<std::string> tr(out.train_students.begin(), out.train_students.end());
  const auto train_w = data::window_sequences(encoder, mc.max_seq_len, &tr);

  const GraphBuild graph = build_graph(ds, cfg.graph);
  model::PicktModel m(mc, fold_seed(cfg.train.seed, 0));
  m.attach_graph(graph.graph);
  TrainConfig tc = cfg.train;
  tc.seed = fold_seed(cfg.train.seed, 0);
  out.train = train(m, train_w, {}, tc, [&](const EpochRecord& e) {
    if (on_epoch) on_epoch(0, e);
  });

  const std::set<std::string> ev(out.eval_students.begin(), out.eval_students.end());
  const NewStudentData nd = prefix_new_student(ds, diagnostic_count, &ev);
  // subset_records keeps the tables, so the training graph's node order still holds.
  out.result = run_new_student(m, vocab, nd, tc.eval_batch_size);
  return out;
}

nlohmann::json inclusion_to_json(const InclusionReports& r) {
  return {{"not_included", report_to_json(r.not_included)},
          {"included", report_to_json(r.included)},
          {"overall", report_to_json(r.overall)}};
}

}  // namespace pickt::train
