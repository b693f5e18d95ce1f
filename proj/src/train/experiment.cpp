#include "pickt/train/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <mutex>
#include <set>
#include <thread>

#include "pickt/core/error.hpp"
#include "pickt/core/rng.hpp"
#include "pickt/core/tape.hpp"
#include "pickt/model/checkpoint.hpp"

namespace pickt::train {

namespace {

embed::EmbeddingTable read_checked(const std::filesystem::path& path, const std::vector<std::string>& ids) {
  embed::EmbeddingTable t = embed::read_embeddings(path);
  std::set<std::string> have(t.ids.begin(), t.ids.end());
  for (const auto& id : ids) {
    if (!have.count(id)) throw DataError(path.string() + ": no embedding for id '" + id + "'");
  }
  return t;
}

// k-wide rows: the first `src.dim` columns of `src`, zeros after.
embed::EmbeddingTable pad_to(const embed::EmbeddingTable& src, std::size_t k) {
  embed::EmbeddingTable out;
  out.ids = src.ids;
  out.dim = k;
  out.source = src.source;
  out.model_tag = src.model_tag;
  out.values.assign(src.rows() * k, 0.0f);
  const std::size_t w = std::min(k, src.dim);
  for (std::size_t i = 0; i < src.rows(); ++i) std::copy_n(src.row(i), w, out.row(i));
  return out;
}

}  // namespace

std::pair<embed::EmbeddingTable, embed::EmbeddingTable> raw_text_tables(const data::Dataset& ds,
                                                                        const GraphOptions& o) {
  std::vector<std::string> qids, qtext, cids, ctext;
  for (const auto& q : ds.questions) {
    qids.push_back(q.id);
    qtext.push_back(q.text.value_or(""));
  }
  for (const auto& c : ds.concepts) {
    cids.push_back(c.id);
    ctext.push_back(c.text.value_or(""));
  }
  if (o.embeddings) {
    auto q = read_checked(*o.embeddings / kQuestionEmbeddingFile, qids);
    auto c = read_checked(*o.embeddings / kConceptEmbeddingFile, cids);
    if (q.dim != c.dim) {
      throw DataError("question and concept embeddings differ in width (" + std::to_string(q.dim) + " vs " +
                      std::to_string(c.dim) + ")");
    }
    return {std::move(q), std::move(c)};
  }
  if (o.hash_dim == 0) throw ParameterError("hash embedding width must be positive");
  return {embed::hash_embed(qtext, qids, o.hash_dim), embed::hash_embed(ctext, cids, o.hash_dim)};
}

GraphBuild build_graph(const data::Dataset& ds, const GraphOptions& o, const embed::PcaModel* fitted) {
  if (o.in_dim == 0) throw ParameterError("han.in_dim must be positive");
  auto [q, c] = raw_text_tables(ds, o);
  GraphBuild out;
  out.feature_source = o.zero_text ? std::string("zeroed")
                                   : (o.embeddings ? "external:" + q.model_tag : std::string("hash-fallback"));
  if (o.zero_text) {
    std::fill(q.values.begin(), q.values.end(), 0.0f);
    std::fill(c.values.begin(), c.values.end(), 0.0f);
    out.pca.dim = q.dim;
  } else if (fitted) {
    out.pca = *fitted;
  } else {
    const embed::EmbeddingTable all = embed::concat_tables(q, c);
    const std::size_t k = std::min({o.in_dim, all.rows(), all.dim});
    if (k > 0) out.pca = embed::pca_fit(all, k);
  }
  auto reduce = [&](const embed::EmbeddingTable& t) {
    if (o.zero_text || out.pca.components == 0) return pad_to(embed::EmbeddingTable{t.ids, 0, {}, t.source, t.model_tag}, o.in_dim);
    return pad_to(embed::pca_transform(out.pca, t), o.in_dim);
  };
  out.graph = std::make_shared<const han::HeteroGraph>(han::HeteroGraph::from_dataset(ds, reduce(q), reduce(c)));
  return out;
}

nlohmann::json pca_to_json(const embed::PcaModel& p) {
  return {{"dim", p.dim},
          {"components", p.components},
          {"mean", p.mean},
          {"basis", p.basis},
          {"eigenvalues", p.eigenvalues},
          {"explained_ratio", p.explained_ratio}};
}

embed::PcaModel pca_from_json(const nlohmann::json& j) {
  embed::PcaModel p;
  try {
    p.dim = j.at("dim").get<std::size_t>();
    p.components = j.at("components").get<std::size_t>();
    p.mean = j.at("mean").get<std::vector<double>>();
    p.basis = j.at("basis").get<std::vector<double>>();
    p.eigenvalues = j.at("eigenvalues").get<std::vector<double>>();
    p.explained_ratio = j.at("explained_ratio").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad PCA record: ") + e.what());
  }
  if (p.mean.size() != p.dim || p.basis.size() != p.dim * p.components) throw DataError("bad PCA record: sizes");
  return p;
}

std::uint64_t fold_seed(std::uint64_t seed, std::size_t fold) {
  return Rng(seed).split("fold").split(fold).next_u64();
}

FoldResult run_fold(const data::Dataset& ds, const data::Fold& fold, const ExperimentConfig& cfg,
                    const GraphBuild& graph, std::size_t fold_index, const EpochCallback& on_epoch) {
  FoldResult r;
  r.fold = fold_index;
  r.seed = fold_seed(cfg.train.seed, fold_index);
  r.vocab = data::Vocabularies::build(ds);
  r.config = cfg.model;
  r.config.vocab = model::VocabSizes::from(r.vocab);
  r.config.validate();

  const data::FeatureEncoder encoder(ds, r.vocab);
  const std::set<std::string> tr(fold.train.begin(), fold.train.end());
  const std::set<std::string> va(fold.val.begin(), fold.val.end());
  const std::set<std::string> te(fold.test.begin(), fold.test.end());
  const auto train_w = data::window_sequences(encoder, r.config.max_seq_len, &tr);
  const auto val_w = data::window_sequences(encoder, r.config.max_seq_len, &va);
  r.train_windows = train_w.size();
  r.val_windows = val_w.size();

  model::PicktModel m(r.config, r.seed);
  m.attach_graph(graph.graph);
  TrainConfig tc = cfg.train;
  tc.seed = r.seed;
  r.train = train(m, train_w, val_w, tc, [&](const EpochRecord& e) {
    if (on_epoch) on_epoch(fold_index, e);
  });
  m.params() = r.train.best_params.clone();
  r.params = r.train.best_params;

  const Predictions vp = predict(m, val_w, tc.eval_batch_size);
  r.val = compute_metrics(vp.probs, vp.labels);
  r.val_strata = stratify_by_achievement(by_student(vp, val_w));
  if (!te.empty()) {
    const auto test_w = data::window_sequences(encoder, r.config.max_seq_len, &te);
    r.test = evaluate(m, test_w, tc.eval_batch_size);
  }
  return r;
}

KFoldResult kfold_evaluate(const data::Dataset& ds, const data::SplitPlan& plan, const ExperimentConfig& cfg,
                           std::size_t threads, const EpochCallback& on_epoch) {
  const std::vector<data::Fold> folds = data::split_students(ds.student_ids(), plan);
  const GraphBuild graph = build_graph(ds, cfg.graph);
  KFoldResult out;
  out.folds.resize(folds.size());
  std::mutex log_mutex;
  const EpochCallback locked = [&](std::size_t f, const EpochRecord& e) {
    if (!on_epoch) return;
    std::lock_guard<std::mutex> lock(log_mutex);
    on_epoch(f, e);
  };

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t f; (f = next.fetch_add(1)) < folds.size();) {
      try {
        out.folds[f] = run_fold(ds, folds[f], cfg, graph, f, locked);
      } catch (...) {
        current_tape().clear();
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = folds.size();
      }
    }
  };
  const std::size_t n_workers = std::clamp<std::size_t>(threads, 1, folds.size());
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < n_workers; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<EvalReport> val, test;
  for (const auto& f : out.folds) {
    val.push_back(f.val);
    if (f.test) test.push_back(*f.test);
  }
  out.val_summary = summarize_folds(val);
  if (!test.empty()) out.test_summary = summarize_folds(test);
  return out;
}

nlohmann::json fold_to_json(const FoldResult& f) {
  nlohmann::json strata = nlohmann::json::object();
  for (const auto& [band, report] : f.val_strata.bands) {
    strata[band_name(band)] = report_to_json(report);
    strata[band_name(band)]["students"] = f.val_strata.students.at(band);
  }
  nlohmann::json j{{"fold", f.fold},
                   {"seed", f.seed},
                   {"best_epoch", f.train.best_epoch},
                   {"steps", f.train.steps},
                   {"train_windows", f.train_windows},
                   {"val_windows", f.val_windows},
                   {"val", report_to_json(f.val)},
                   {"val_strata", strata},
                   {"val_strata_notes", f.val_strata.notes}};
  if (f.test) j["test"] = report_to_json(*f.test);
  return j;
}

InferenceStats measure_inference(const model::PicktModel& model, const std::vector<data::SequenceWindow>& windows,
                                 std::size_t batch_size) {
  InferenceStats s;
  s.windows = windows.size();
  s.parameters = model.params().count();
  reset_peak_memory();
  const auto t0 = std::chrono::steady_clock::now();
  const Predictions p = predict(model, windows, batch_size);
  const auto t1 = std::chrono::steady_clock::now();
  s.predictions = p.size();
  s.seconds = std::chrono::duration<double>(t1 - t0).count();
  s.peak_bytes = memory_stats().peak_bytes;
  return s;
}

}  // namespace pickt::train
