#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "pickt/data/dataset.hpp"
#include "pickt/data/features.hpp"
#include "pickt/model/pickt.hpp"
#include "pickt/train/experiment.hpp"

namespace pickt::train {

/// `context` (last max_len - 1 records kept) followed by `target`, scored only
/// at the target.
data::SequenceWindow append_one(const data::FeatureEncoder& encoder, const std::string& student,
                                const std::vector<std::size_t>& context, std::size_t target, std::size_t max_seq_len);

// ---- new question -------------------------------------------------------

struct NewQuestionOptions {
  double question_fraction = 0.2;  // held-out questions
  double student_fraction = 0.2;   // evaluation students
};

struct NewQuestionSplit {
  std::set<std::string> heldout_questions;
  std::vector<std::string> train_students;
  std::vector<std::string> eval_students;
};

NewQuestionSplit split_new_question(const data::Dataset& dataset, const NewQuestionOptions& options,
                                    std::uint64_t seed);

/// Throws DataError naming the id when a held-out question has a vocabulary entry.
void check_no_leakage(const data::Vocabularies& vocab, const std::set<std::string>& heldout_questions);

struct NewQuestionResult {
  NewQuestionSplit split;
  data::Vocabularies vocab;
  model::ModelConfig config;
  TrainResult train;
  EvalReport heldout;
  Predictions predictions;
  std::vector<std::string> predicted_question;  // question id per prediction
  std::size_t questions_evaluated = 0;
  double question_mean_std = 0.0;  // sample std of per-question mean predictions
  std::size_t training_records = 0;
  std::size_t records_read = 0;  // distinct records the training encoder read
};

/// Trains on train students without any held-out question interaction (their
/// ids are excluded from the vocabulary) and evaluates every held-out
/// interaction of the evaluation students appended one at a time to their
/// non-held-out history. The training encoder runs over the full dataset
/// through an access log; reading a held-out or evaluation-student row is a
/// ContractError. The final-epoch parameters are evaluated.
NewQuestionResult run_new_question(const data::Dataset& dataset, const ExperimentConfig& config,
                                   const NewQuestionOptions& options = {}, const EpochCallback& on_epoch = {});

// ---- new student --------------------------------------------------------

/// Merged records with a per-record follow-up flag.
struct NewStudentData {
  data::Dataset dataset;
  std::vector<std::uint8_t> followup;
};

/// Tables are the union of both inputs; diagnostic records come first.
NewStudentData merge_new_student(const data::Dataset& diagnostic, const data::Dataset& followup);
/// First `diagnostic_count` interactions of every student with more than that
/// many are diagnostic, the rest follow-up. Other students are dropped.
NewStudentData prefix_new_student(const data::Dataset& dataset, std::size_t diagnostic_count,
                                  const std::set<std::string>* students = nullptr);

struct InclusionReports {
  EvalReport not_included;
  EvalReport included;
  EvalReport overall;
};

struct NewStudentResult {
  InclusionReports reports;
  std::set<std::string> diagnostic_concepts;
  std::size_t students = 0;
  std::size_t windows = 0;
  std::size_t checked_windows = 0;  // windows that passed the access assertion
  Predictions predictions;
  std::vector<std::uint8_t> included;  // per prediction
};

/// A follow-up question is Included iff every concept it links to is linked
/// by some diagnostic question.
bool question_included(const data::Dataset& dataset, const std::string& question_id,
                       const std::set<std::string>& diagnostic_concepts);

/// Each follow-up interaction is appended alone to its student's diagnostic
/// interactions and predicted at that one position. Every window is encoded
/// through an access log: touching a follow-up row other than the target, or
/// the target's response/time inputs, is a ContractError. The model's graph
/// must have been built over `data.dataset`.
NewStudentResult run_new_student(const model::PicktModel& model, const data::Vocabularies& vocab,
                                 const NewStudentData& data, std::size_t batch_size = 64);

struct NewStudentExperiment {
  std::vector<std::string> train_students;
  std::vector<std::string> eval_students;
  TrainResult train;
  NewStudentResult result;
};

/// Trains on 80% of students and runs the prefix protocol on the rest.
NewStudentExperiment run_new_student_experiment(const data::Dataset& dataset, const ExperimentConfig& config,
                                                std::size_t diagnostic_count, const EpochCallback& on_epoch = {});

nlohmann::json inclusion_to_json(const InclusionReports& r);

}  // namespace pickt::train
