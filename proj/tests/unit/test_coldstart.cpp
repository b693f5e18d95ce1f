#include <algorithm>

#include "doctest.h"
#include "fixtures.hpp"
#include "pickt/core/error.hpp"
#include "pickt/data/synth.hpp"
#include "pickt/train/coldstart.hpp"

using namespace pickt;
using namespace pickt::train;

namespace {

data::Dataset synth(std::size_t students, std::uint64_t seed = 4) {
  data::SynthOptions so;
  so.students = students;
  so.questions = 20;
  so.concepts = 5;
  so.min_interactions = 6;
  so.max_interactions = 16;
  so.seed = seed;
  return data::synth_generate(so);
}

ExperimentConfig small_config(const data::Dataset& ds) {
  ExperimentConfig ec;
  ec.model = model::ModelConfig::tiny(model::VocabSizes::from(data::Vocabularies::build(ds)));
  ec.model.max_seq_len = 8;
  ec.train.epochs = 2;
  ec.train.batch_size = 8;
  ec.train.seed = 3;
  ec.graph.in_dim = 4;
  ec.graph.hash_dim = 16;
  return ec;
}

}  // namespace

TEST_CASE("new-question split partitions questions and students") {
  const data::Dataset ds = synth(10);
  const NewQuestionSplit s = split_new_question(ds, {}, 7);
  CHECK(s.heldout_questions.size() == 4);
  CHECK(s.eval_students.size() == 2);
  CHECK(s.train_students.size() == 8);
  std::vector<std::string> all = s.train_students;
  all.insert(all.end(), s.eval_students.begin(), s.eval_students.end());
  std::sort(all.begin(), all.end());
  CHECK(all == ds.student_ids());
  const NewQuestionSplit again = split_new_question(ds, {}, 7);
  CHECK(again.heldout_questions == s.heldout_questions);
  CHECK(again.eval_students == s.eval_students);
  CHECK_THROWS_AS(split_new_question(ds, {0.0, 0.2}, 7), ParameterError);
}

TEST_CASE("held-out questions must not reach the vocabulary") {
  const data::Dataset ds = fixtures::tiny_dataset();
  const std::set<std::string> held{"q2"};
  CHECK_NOTHROW(check_no_leakage(data::Vocabularies::build(ds, held), held));
  try {
    check_no_leakage(data::Vocabularies::build(ds), held);
    FAIL("leak not detected");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("q2") != std::string::npos);
  }
  CHECK(data::Vocabularies::build(ds, held).question.id("q2") == data::Vocabulary::kUnk);
}

TEST_CASE("append-one windows read the target only as question and label") {
  const data::Dataset ds = fixtures::tiny_dataset();
  const auto vocab = data::Vocabularies::build(ds);
  data::FeatureEncoder enc(ds, vocab);
  data::AccessLog log;
  enc.set_access_log(&log);
  const data::SequenceWindow w = append_one(enc, "s1", {0, 1}, 3, 2);
  CHECK(w.records == std::vector<std::size_t>{1, 3});
  CHECK(w.scored == std::vector<std::uint8_t>{0, 1});
  CHECK(w.labels[1] == 1);
  CHECK_FALSE(log.touched(0));
  CHECK(log.touched(3, data::RecordField::Question));
  CHECK(log.touched(3, data::RecordField::Label));
  CHECK_FALSE(log.touched(3, data::RecordField::ResponseInput));
  CHECK_FALSE(log.touched(3, data::RecordField::TimeInput));
  CHECK(log.touched(1, data::RecordField::ResponseInput));
  const data::SequenceWindow alone = append_one(enc, "s1", {}, 3, 4);
  CHECK(alone.length() == 1);
  CHECK(alone.prev_response[0] == data::kResponseStart);
}

TEST_CASE("a question is included only when all its concepts were diagnosed") {
  const data::Dataset ds = fixtures::tiny_dataset();
  CHECK(question_included(ds, "q1", {"c1"}));
  CHECK_FALSE(question_included(ds, "q2", {"c1"}));
  CHECK(question_included(ds, "q2", {"c1", "c2"}));
  CHECK_FALSE(question_included(ds, "q3", {"c1", "c2"}));
  CHECK_THROWS_AS(question_included(ds, "q9", {}), DataError);
}

TEST_CASE("diagnostic and follow-up inputs merge with flags") {
  const data::Dataset ds = fixtures::tiny_dataset();
  data::Dataset diag = ds, follow = ds;
  diag.records = {ds.records[0], ds.records[4]};
  follow.records = {ds.records[1], ds.records[3], ds.records[2]};
  const NewStudentData m = merge_new_student(diag, follow);
  CHECK(m.dataset.records.size() == 5);
  CHECK(m.followup == std::vector<std::uint8_t>{0, 0, 1, 1, 1});
  CHECK(m.dataset.records[0].question_id == "q1");
  CHECK(m.dataset.questions.size() == ds.questions.size());

  const NewStudentData p = prefix_new_student(ds, 1);
  CHECK(p.dataset.records.size() == 6);
  CHECK(std::count(p.followup.begin(), p.followup.end(), 0) == 2);
  CHECK(prefix_new_student(ds, 3).dataset.records.empty());
  const std::set<std::string> only{"s2"};
  CHECK(prefix_new_student(ds, 2, &only).dataset.records.size() == 3);
}

TEST_CASE("new-student evaluation partitions follow-ups by inclusion") {
  const data::Dataset ds = synth(12);
  const NewStudentData nd = prefix_new_student(ds, 3);
  const ExperimentConfig ec = small_config(ds);
  const auto vocab = data::Vocabularies::build(nd.dataset);
  model::ModelConfig cfg = ec.model;
  cfg.vocab = model::VocabSizes::from(vocab);
  model::PicktModel m(cfg, 1);
  m.attach_graph(build_graph(nd.dataset, ec.graph).graph);
  const NewStudentResult r = run_new_student(m, vocab, nd, 16);
  const auto followups = std::size_t(std::count(nd.followup.begin(), nd.followup.end(), 1));
  CHECK(r.reports.overall.count == followups);
  CHECK(r.reports.included.count + r.reports.not_included.count == followups);
  CHECK(r.checked_windows == r.windows);
  CHECK(r.windows == followups);
  CHECK(r.students == 12);
  for (std::size_t i = 0; i < r.predictions.size(); ++i) {
    const std::size_t rec = r.predictions.record[i];
    CHECK(nd.followup[rec] == 1);
    CHECK(bool(r.included[i]) ==
          question_included(nd.dataset, nd.dataset.records[rec].question_id, r.diagnostic_concepts));
  }
  NewStudentData bad = nd;
  bad.followup.pop_back();
  CHECK_THROWS_AS(run_new_student(m, vocab, bad), DimensionError);
}

TEST_CASE("new-question training never reads held-out or evaluation rows") {
  const data::Dataset ds = synth(10, 6);
  const NewQuestionResult r = run_new_question(ds, small_config(ds));
  std::size_t expected = 0, train_rows = 0;
  const std::set<std::string> eval(r.split.eval_students.begin(), r.split.eval_students.end());
  for (const auto& rec : ds.records) {
    const bool held = r.split.heldout_questions.count(rec.question_id) != 0;
    if (eval.count(rec.student_id) && held) ++expected;
    if (!eval.count(rec.student_id) && !held) ++train_rows;
  }
  CHECK(r.heldout.count == expected);
  CHECK(r.training_records == train_rows);
  CHECK(r.records_read == train_rows);
  for (const auto& q : r.predicted_question) CHECK(r.split.heldout_questions.count(q) == 1);
  CHECK(r.questions_evaluated <= r.split.heldout_questions.size());
}
