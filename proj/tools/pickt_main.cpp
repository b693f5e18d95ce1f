#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "pickt/check/gradcheck.hpp"
#include "pickt/cli/config.hpp"
#include "pickt/core/error.hpp"
#include "pickt/data/dataset.hpp"
#include "pickt/data/split.hpp"
#include "pickt/data/synth.hpp"
#include "pickt/embed/pca.hpp"
#include "pickt/model/checkpoint.hpp"
#include "pickt/train/coldstart.hpp"
#include "pickt/train/experiment.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace pickt;

namespace {

struct Invocation {
  std::string command;
  std::string config_path;
  std::vector<std::string> overrides;
  std::string seed;
  std::string run_dir;
  std::string checkpoint;
  std::string out;
  bool reference = false;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path.string() + ": cannot write");
  out << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

data::Dataset load(const cli::RunConfig& c) {
  if (c.dataset_dir.empty()) throw ParameterError("dataset.dir is not set");
  if (!fs::is_directory(c.dataset_dir)) throw DataError(c.dataset_dir.string() + ": no such dataset directory");
  return data::load_dataset(c.dataset_dir);
}

json graph_json(const train::GraphOptions& g, const train::GraphBuild& b) {
  return {{"in_dim", g.in_dim},
          {"hash_dim", g.hash_dim},
          {"embeddings", g.embeddings ? g.embeddings->string() : ""},
          {"zero_text", g.zero_text},
          {"feature_source", b.feature_source},
          {"pca", train::pca_to_json(b.pca)}};
}

train::GraphOptions graph_options_from(const json& g) {
  train::GraphOptions o;
  o.in_dim = g.at("in_dim").get<std::size_t>();
  o.hash_dim = g.at("hash_dim").get<std::size_t>();
  if (const auto p = g.at("embeddings").get<std::string>(); !p.empty()) o.embeddings = p;
  o.zero_text = g.at("zero_text").get<bool>();
  return o;
}

json stats_json(const data::Dataset& ds) {
  const auto s = ds.stats();
  return {{"students", s.students},
          {"questions", s.questions},
          {"concepts", s.concepts},
          {"interactions", s.interactions},
          {"correct_rate", s.correct_rate()}};
}

json strata_json(const train::StratifiedReport& r) {
  json out = json::object();
  for (const auto& [band, report] : r.bands) {
    out[train::band_name(band)] = train::report_to_json(report);
    out[train::band_name(band)]["students"] = r.students.at(band);
  }
  return out;
}

void print_report(const std::string& label, const train::EvalReport& r) {
  std::printf("%-14s n=%-7zu acc_wrong=%s acc_correct=%s acc_macro=%s acc_micro=%s auc=%s\n", label.c_str(), r.count,
              train::format_metric(r.acc_wrong).c_str(), train::format_metric(r.acc_correct).c_str(),
              train::format_metric(r.acc_macro).c_str(), train::format_metric(r.acc_micro).c_str(),
              train::format_metric(r.auc).c_str());
}

train::ExperimentConfig experiment(const cli::RunConfig& c) { return {c.model, c.train, c.graph}; }

model::Checkpoint make_checkpoint(const model::ModelConfig& config, const data::Vocabularies& vocab,
                                  const ParamStore& params, std::uint64_t seed, std::uint64_t step,
                                  const train::GraphOptions& g, const train::GraphBuild& b) {
  model::Checkpoint ck;
  ck.config = config;
  ck.vocab = vocab;
  ck.params = params;
  ck.seed = seed;
  ck.step = step;
  ck.extra["graph"] = graph_json(g, b);
  return ck;
}

struct Loaded {
  model::Checkpoint ck;
  train::GraphOptions graph;
  embed::PcaModel pca;
};

Loaded load_model(const std::string& path) {
  if (path.empty()) throw ParameterError("--checkpoint is required");
  Loaded l{model::load_checkpoint(path), {}, {}};
  try {
    const json& g = l.ck.extra.at("graph");
    l.graph = graph_options_from(g);
    l.pca = train::pca_from_json(g.at("pca"));
  } catch (const json::exception& e) {
    throw DataError(path + ": checkpoint lacks graph metadata (" + e.what() + ")");
  }
  return l;
}

// Model with its graph rebuilt over `ds` using the stored PCA projection.
std::unique_ptr<model::PicktModel> restore(const Loaded& l, const data::Dataset& ds) {
  auto m = std::make_unique<model::PicktModel>(l.ck.config, l.ck.params);
  if (l.ck.config.han) m->attach_graph(train::build_graph(ds, l.graph, &l.pca).graph);
  return m;
}

int cmd_train(const cli::RunConfig& c, const fs::path& dir) {
  const data::Dataset ds = load(c);
  const data::SplitPlan plan = data::SplitPlan::parse(c.split_mode, c.train.seed);
  const auto folds = data::split_students(ds.student_ids(), plan);
  const train::GraphBuild graph = train::build_graph(ds, c.graph);
  const auto r = train::run_fold(ds, folds.front(), experiment(c), graph, 0, [](std::size_t, const train::EpochRecord& e) {
    if (e.split == "val") std::printf("epoch %zu val loss %.4f auc %s\n", e.epoch, e.loss, train::format_metric(e.report.auc).c_str());
    std::fflush(stdout);
  });
  r.train.log.write_csv(dir / "epochs.csv");
  model::save_checkpoint(dir / "model.ckpt",
                         make_checkpoint(r.config, r.vocab, r.params, r.seed, r.train.steps, c.graph, graph));
  json j = train::fold_to_json(r);
  j["split"] = plan.name();
  j["dataset"] = stats_json(ds);
  j["feature_source"] = graph.feature_source;
  j["parameters"] = r.params.count();
  write_json(dir / "report.json", j);
  print_report("val", r.val);
  if (r.test) print_report("test", *r.test);
  return 0;
}

int cmd_eval(const cli::RunConfig& c, const Invocation& inv, const fs::path& dir) {
  const Loaded l = load_model(inv.checkpoint);
  const data::Dataset ds = load(c);
  const auto m = restore(l, ds);
  const data::FeatureEncoder encoder(ds, l.ck.vocab);
  const auto windows = data::window_sequences(encoder, std::size_t(l.ck.config.max_seq_len));
  const train::Predictions p = train::predict(*m, windows, c.train.eval_batch_size);
  const train::EvalReport report = train::compute_metrics(p.probs, p.labels);
  json j{{"checkpoint", inv.checkpoint},
         {"dataset", stats_json(ds)},
         {"loss", p.loss},
         {"metrics", train::report_to_json(report)},
         {"strata", strata_json(train::stratify_by_achievement(train::by_student(p, windows)))}};
  write_json(dir / "report.json", j);
  print_report("eval", report);
  return 0;
}

int cmd_kfold(const cli::RunConfig& c, const fs::path& dir) {
  const data::Dataset ds = load(c);
  const data::SplitPlan plan = data::SplitPlan::parse(c.split_mode, c.train.seed);
  const std::size_t threads = cli::thread_limit();
  const auto r = train::kfold_evaluate(ds, plan, experiment(c), threads, [](std::size_t f, const train::EpochRecord& e) {
    if (e.split == "val") std::printf("fold %zu epoch %zu val auc %s\n", f, e.epoch, train::format_metric(e.report.auc).c_str());
    std::fflush(stdout);
  });
  const train::GraphBuild graph = train::build_graph(ds, c.graph);
  json folds = json::array();
  for (const auto& f : r.folds) {
    f.train.log.write_csv(dir / ("epochs_fold" + std::to_string(f.fold) + ".csv"));
    model::save_checkpoint(dir / ("fold" + std::to_string(f.fold) + ".ckpt"),
                           make_checkpoint(f.config, f.vocab, f.params, f.seed, f.train.steps, c.graph, graph));
    folds.push_back(train::fold_to_json(f));
    print_report("fold " + std::to_string(f.fold), f.val);
  }
  json j{{"split", plan.name()},
         {"threads", threads},
         {"dataset", stats_json(ds)},
         {"folds", folds},
         {"val_summary", train::summary_to_json(r.val_summary)}};
  if (r.test_summary) j["test_summary"] = train::summary_to_json(*r.test_summary);
  write_json(dir / "report.json", j);
  const auto& s = r.val_summary;
  std::printf("val acc_wrong %s acc_correct %s acc_macro %s acc_micro %s auc %s\n", s.acc_wrong.formatted().c_str(),
              s.acc_correct.formatted().c_str(), s.acc_macro.formatted().c_str(), s.acc_micro.formatted().c_str(),
              s.auc.formatted().c_str());
  return 0;
}

json new_question_json(const train::NewQuestionResult& r) {
  return {{"heldout_questions", r.split.heldout_questions.size()},
          {"train_students", r.split.train_students.size()},
          {"eval_students", r.split.eval_students.size()},
          {"training_records", r.training_records},
          {"records_read", r.records_read},
          {"questions_evaluated", r.questions_evaluated},
          {"question_mean_std", r.question_mean_std},
          {"heldout", train::report_to_json(r.heldout)}};
}

int cmd_coldstart(const cli::RunConfig& c, const Invocation& inv, const fs::path& dir) {
  json j{{"scenario", c.coldstart_scenario}};
  if (c.coldstart_scenario == "new-question") {
    const data::Dataset ds = load(c);
    const train::NewQuestionOptions o{c.question_fraction, c.student_fraction};
    const auto full = train::run_new_question(ds, experiment(c), o);
    full.train.log.write_csv(dir / "epochs.csv");
    j["model"] = new_question_json(full);
    print_report("held-out", full.heldout);
    std::printf("cross-question std %.4f over %zu questions\n", full.question_mean_std, full.questions_evaluated);
    if (c.coldstart_ablation) {
      train::ExperimentConfig a = experiment(c);
      a.model.han = false;
      a.graph.zero_text = true;
      const auto abl = train::run_new_question(ds, a, o);
      abl.train.log.write_csv(dir / "epochs_ablation.csv");
      j["ablation"] = new_question_json(abl);
      print_report("ablation", abl.heldout);
      if (full.heldout.auc && abl.heldout.auc) {
        j["auc_gap"] = *full.heldout.auc - *abl.heldout.auc;
        std::printf("auc gap %.4f\n", *full.heldout.auc - *abl.heldout.auc);
      }
    }
  } else {
    train::NewStudentResult result;
    if (!inv.checkpoint.empty()) {
      if (c.diagnostic_dir.empty() || c.followup_dir.empty()) {
        throw ParameterError("new-student with --checkpoint needs coldstart.diagnostic_dir and coldstart.followup_dir");
      }
      const Loaded l = load_model(inv.checkpoint);
      const auto merged = train::merge_new_student(data::load_dataset(c.diagnostic_dir), data::load_dataset(c.followup_dir));
      const auto m = restore(l, merged.dataset);
      result = train::run_new_student(*m, l.ck.vocab, merged, c.train.eval_batch_size);
    } else {
      const data::Dataset ds = load(c);
      auto e = train::run_new_student_experiment(ds, experiment(c), c.diagnostic_count);
      e.train.log.write_csv(dir / "epochs.csv");
      j["train_students"] = e.train_students.size();
      j["eval_students"] = e.eval_students.size();
      result = std::move(e.result);
    }
    j["students"] = result.students;
    j["windows"] = result.windows;
    j["checked_windows"] = result.checked_windows;
    j["diagnostic_concepts"] = result.diagnostic_concepts.size();
    j["reports"] = train::inclusion_to_json(result.reports);
    print_report("not-included", result.reports.not_included);
    print_report("included", result.reports.included);
    print_report("overall", result.reports.overall);
  }
  write_json(dir / "report.json", j);
  return 0;
}

int cmd_synth(const cli::RunConfig& c, const Invocation& inv, const fs::path& dir) {
  const fs::path out = inv.out.empty() ? dir / "data" : fs::path(inv.out);
  const data::Dataset ds = data::synth_write(c.synth, out);
  write_json(dir / "report.json", {{"out", out.string()}, {"dataset", stats_json(ds)}});
  const auto s = ds.stats();
  std::printf("wrote %s: %zu students, %zu questions, %zu concepts, %zu interactions, correct rate %.3f\n",
              out.string().c_str(), s.students, s.questions, s.concepts, s.interactions, s.correct_rate());
  return 0;
}

int cmd_embed_pca(const cli::RunConfig& c, const fs::path& dir) {
  const data::Dataset ds = load(c);
  const train::GraphBuild b = train::build_graph(ds, c.graph);
  const auto [q, cc] = train::raw_text_tables(ds, c.graph);
  if (b.pca.components > 0) {
    embed::write_embeddings(embed::pca_transform(b.pca, q), dir / "q_pca.emb");
    embed::write_embeddings(embed::pca_transform(b.pca, cc), dir / "c_pca.emb");
  }
  write_json(dir / "pca.json", train::pca_to_json(b.pca));
  double kept = 0;
  for (double r : b.pca.explained_ratio) kept += r;
  std::printf("%s: %zu x %zu -> %zu components, explained variance %.4f\n", b.feature_source.c_str(),
              q.rows() + cc.rows(), q.dim, b.pca.components, kept);
  return 0;
}

int cmd_gradcheck(const fs::path& dir) {
  auto results = check::op_suite();
  results.push_back(check::model_check());
  const check::GradCheckOptions o;
  json rows = json::array();
  bool ok = true;
  std::printf("%-20s %8s %12s  %s  (step %g, tolerance %g)\n", "check", "scalars", "max_rel_err", "status", o.step,
              o.tolerance);
  for (const auto& r : results) {
    std::printf("%-20s %8zu %12.3e  %s\n", r.name.c_str(), r.checked, r.max_rel_error, r.passed ? "ok" : "FAIL");
    rows.push_back({{"name", r.name}, {"checked", r.checked}, {"max_rel_error", r.max_rel_error}, {"passed", r.passed}});
    ok = ok && r.passed;
  }
  write_json(dir / "gradcheck.json",
             {{"double_precision", kDoublePrecision}, {"step", o.step}, {"tolerance", o.tolerance}, {"results", rows}});
  if (!ok) throw NumericalError("gradient check failed");
  return 0;
}

int cmd_bench(const cli::RunConfig& c, const Invocation& inv, const fs::path& dir) {
  json j;
  if (inv.reference) {
    model::ModelConfig cfg = c.model;
    cfg.vocab = model::VocabSizes::reference();
    cfg.validate();
    const model::PicktModel m(cfg, c.train.seed);
    j["reference_parameters"] = m.params().count();
    std::printf("parameters (reference vocabulary): %lld\n", static_cast<long long>(m.params().count()));
  }
  if (!inv.checkpoint.empty() || !c.dataset_dir.empty()) {
    const data::Dataset ds = load(c);
    std::unique_ptr<model::PicktModel> m;
    data::Vocabularies vocab;
    if (!inv.checkpoint.empty()) {
      const Loaded l = load_model(inv.checkpoint);
      vocab = l.ck.vocab;
      m = restore(l, ds);
    } else {
      vocab = data::Vocabularies::build(ds);
      model::ModelConfig cfg = c.model;
      cfg.vocab = model::VocabSizes::from(vocab);
      cfg.validate();
      m = std::make_unique<model::PicktModel>(cfg, c.train.seed);
      if (cfg.han) m->attach_graph(train::build_graph(ds, c.graph).graph);
    }
    const data::FeatureEncoder encoder(ds, vocab);
    const auto windows = data::window_sequences(encoder, std::size_t(m->config().max_seq_len));
    const train::InferenceStats s = train::measure_inference(*m, windows);
    j["inference"] = {{"windows", s.windows},
                      {"predictions", s.predictions},
                      {"seconds", s.seconds},
                      {"peak_bytes", s.peak_bytes},
                      {"parameters", s.parameters},
                      {"batch_size", 64}};
    std::printf("inference: %zu windows, %zu predictions, %.3f s, peak tensor memory %.1f MiB, %lld parameters\n",
                s.windows, s.predictions, s.seconds, double(s.peak_bytes) / (1024.0 * 1024.0),
                static_cast<long long>(s.parameters));
  }
  if (j.is_null()) throw ParameterError("bench needs --reference, --checkpoint or dataset.dir");
  write_json(dir / "bench.json", j);
  return 0;
}

int run(const Invocation& inv) {
  cli::RunConfig c;
  if (!inv.config_path.empty()) cli::apply_config_file(c, inv.config_path);
  if (!inv.seed.empty()) c.set("train.seed", inv.seed);
  for (const auto& o : inv.overrides) cli::apply_override(c, o);
  c.finalize();

  const fs::path dir = inv.run_dir.empty() ? cli::make_run_dir(c.output_dir, inv.command, c.train.seed) : fs::path(inv.run_dir);
  fs::create_directories(dir);
  write_text(dir / "config.txt", c.to_text());
  std::printf("run directory: %s\n", dir.string().c_str());
  std::fflush(stdout);

  if (inv.command == "train") return cmd_train(c, dir);
  if (inv.command == "eval") return cmd_eval(c, inv, dir);
  if (inv.command == "kfold") return cmd_kfold(c, dir);
  if (inv.command == "coldstart") return cmd_coldstart(c, inv, dir);
  if (inv.command == "synth") return cmd_synth(c, inv, dir);
  if (inv.command == "embed-pca") return cmd_embed_pca(c, dir);
  if (inv.command == "gradcheck") return cmd_gradcheck(dir);
  return cmd_bench(c, inv, dir);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{kDoublePrecision ? "PICKT knowledge tracing (64-bit build)" : "PICKT knowledge tracing"};
  app.require_subcommand(1);
  Invocation inv;

  auto add = [&](const std::string& name, const std::string& help) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("-c,--config", inv.config_path, "key = value config file")->check(CLI::ExistingFile);
    sub->add_option("-s,--set", inv.overrides, "key=value override (repeatable)");
    sub->add_option("--seed", inv.seed, "same as --set train.seed=N");
    sub->add_option("--run-dir", inv.run_dir, "exact output directory");
    sub->callback([&, name] { inv.command = name; });
    return sub;
  };
  add("train", "train on one split and save the best-validation checkpoint");
  add("eval", "evaluate a checkpoint on dataset.dir")->add_option("--checkpoint", inv.checkpoint)->required();
  add("kfold", "cross-validation (split.mode kfold-K)");
  add("coldstart", "new-student or new-question protocol")->add_option("--checkpoint", inv.checkpoint);
  add("synth", "write a synthetic dataset")->add_option("--out", inv.out, "dataset directory");
  add("embed-pca", "fit PCA over question and concept text features");
  add("gradcheck", "finite-difference gradient suite");
  CLI::App* bench = add("bench", "parameter count and timed inference");
  bench->add_option("--checkpoint", inv.checkpoint);
  bench->add_flag("--reference", inv.reference, "count parameters with the reference vocabulary sizes");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    return run(inv);
  } catch (const NumericalError& e) {
    std::fprintf(stderr, "numerical error: %s\n", e.what());
    return 3;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 2;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 2;
  } catch (const Error& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
