#include <cmath>
#include <fstream>

#include "../acceptance/properties.hpp"
#include "doctest.h"
#include "fixtures.hpp"
#include "pickt/core/error.hpp"
#include "pickt/core/tape.hpp"
#include "pickt/data/synth.hpp"
#include "pickt/model/checkpoint.hpp"
#include "pickt/model/pickt.hpp"
#include "pickt/train/experiment.hpp"

using namespace pickt;
using namespace pickt::model;

TEST_CASE("selected configuration has about 31.6M parameters") {
  const ModelConfig c = ModelConfig::selected(VocabSizes::reference());
  const PicktModel m(c, 1);
  const double count = double(m.params().count());
  CHECK(std::abs(count - 31.6e6) / 31.6e6 <= 0.02);
}

TEST_CASE("initialisation follows the stated scheme") {
  data::SynthOptions so;
  so.students = 5;
  so.questions = 10;
  so.concepts = 3;
  const data::Dataset ds = data::synth_generate(so);
  ModelConfig c = ModelConfig::selected(VocabSizes::from(data::Vocabularies::build(ds)));
  c.d_hidden = c.d_intermediate = 32;
  c.heads = 4;
  c.encoder_layers = c.decoder_layers = 1;
  c.han_config = {16, 16, 2, 32};
  const ParamStore p = init_params(c, 3);
  std::size_t weights = 0;
  double sum = 0, sq = 0;
  for (const auto& [name, t] : p.items()) {
    const bool gain = name.size() > 5 && name.substr(name.size() - 5) == ".gain";
    const bool bias = (name.size() > 5 && name.substr(name.size() - 5) == ".bias") || name.back() == 'b';
    for (Real v : t.data()) {
      if (gain) {
        CHECK(v == Real(1));
      } else if (bias && name.find(".ln.") == std::string::npos && name.rfind(".b") == name.size() - 2) {
        CHECK(v == Real(0));
      } else if (!bias) {
        ++weights;
        sum += double(v);
        sq += double(v) * v;
      }
    }
  }
  const double mean = sum / double(weights);
  CHECK(std::abs(mean) < 0.001);
  CHECK(std::sqrt(sq / double(weights) - mean * mean) == doctest::Approx(0.02).epsilon(0.02));
  CHECK(init_params(c, 3).get("emb.question.id").at(5) == p.get("emb.question.id").at(5));
  CHECK(init_params(c, 4).get("emb.question.id").at(5) != p.get("emb.question.id").at(5));

  ModelConfig off = c;
  off.han = false;
  for (const auto& [name, t] : init_params(off, 3).items()) CHECK(name.rfind("han.", 0) != 0);
}

TEST_CASE("config validation rejects inconsistent sizes") {
  ModelConfig c = ModelConfig::tiny({});
  c.validate();
  c.heads = 3;
  CHECK_THROWS_AS(c.validate(), ParameterError);
  c = ModelConfig::tiny({});
  c.han_config.out_dim = 4;
  CHECK_THROWS_AS(c.validate(), ParameterError);
  c = ModelConfig::tiny({});
  c.dropout = 1;
  CHECK_THROWS_AS(c.validate(), ParameterError);
}

TEST_CASE("causal mask opens keys up to the query inside the window") {
  const auto m = causal_mask({3, 1}, 3);
  const std::vector<Real> first{0, kMaskValue, kMaskValue, 0, 0, kMaskValue, 0, 0, 0};
  CHECK(std::vector<Real>(m.begin(), m.begin() + 9) == first);
  for (int q = 0; q < 3; ++q) {
    CHECK(m[std::size_t(9 + q * 3)] == 0);
    CHECK(m[std::size_t(9 + q * 3 + 1)] == kMaskValue);
  }
}

TEST_CASE("future inputs never change earlier predictions") {
  const props::Outcome o = props::causality(20, 11);
  INFO(o.detail);
  CHECK(o.passed);
}

TEST_CASE("dropping concept scores leaves the question-stream softmax") {
  const props::Outcome o = props::fusion_identity(3, 5);
  INFO(o.detail);
  CHECK(o.passed);
}

namespace {

struct Small {
  data::Dataset ds;
  data::Vocabularies vocab;
  ModelConfig cfg;
  train::GraphBuild graph;
};

Small small_model() {
  Small s;
  data::SynthOptions so;
  so.students = 6;
  so.questions = 12;
  so.concepts = 4;
  so.max_interactions = 25;
  s.ds = data::synth_generate(so);
  s.vocab = data::Vocabularies::build(s.ds);
  s.cfg = ModelConfig::tiny(VocabSizes::from(s.vocab));
  s.cfg.max_seq_len = 8;
  train::GraphOptions go;
  go.in_dim = 4;
  go.hash_dim = 16;
  s.graph = train::build_graph(s.ds, go);
  return s;
}

}  // namespace

TEST_CASE("forward yields probabilities for every padded position") {
  const Small s = small_model();
  PicktModel m(s.cfg, 1);
  CHECK_THROWS_AS(m.forward(data::make_batch(data::window_sequences(data::FeatureEncoder(s.ds, s.vocab), 8)), {}),
                  ContractError);
  m.attach_graph(s.graph.graph);
  const data::FeatureEncoder enc(s.ds, s.vocab);
  const auto windows = data::window_sequences(enc, 8);
  const data::Batch b = data::make_batch(windows);
  NoGradGuard ng;
  const ForwardResult r = m.forward(b, {});
  CHECK(r.probs.shape() == Shape{b.batch * b.len, 1});
  for (Real p : r.probs.data()) {
    CHECK(p > 0);
    CHECK(p < 1);
  }
  CHECK(double(r.question_beta[0] + r.question_beta[1]) == doctest::Approx(1.0));
  model::ForwardOptions tr;
  tr.training = true;
  CHECK_NOTHROW(m.forward(b, tr));
  ModelConfig wet = s.cfg;
  wet.dropout = 0.1;
  PicktModel mw(wet, 1);
  mw.attach_graph(s.graph.graph);
  CHECK_THROWS_AS(mw.forward(b, tr), ContractError);
}

TEST_CASE("checkpoints round-trip byte for byte and validate lengths") {
  const Small s = small_model();
  Checkpoint ck{s.cfg, s.vocab, init_params(s.cfg, 9), 9, 123, {{"note", "x"}}};
  const auto dir = fixtures::fresh_dir("ckpt");
  save_checkpoint(dir / "a.ckpt", ck);
  const Checkpoint back = load_checkpoint(dir / "a.ckpt");
  CHECK(back.seed == 9);
  CHECK(back.step == 123);
  CHECK(back.extra["note"] == "x");
  CHECK(back.config.d_hidden == s.cfg.d_hidden);
  CHECK(back.config.vocab.question == s.cfg.vocab.question);
  CHECK(back.vocab.question.values() == s.vocab.question.values());
  REQUIRE(back.params.size() == ck.params.size());
  for (std::size_t i = 0; i < ck.params.size(); ++i) {
    CHECK(back.params.items()[i].first == ck.params.items()[i].first);
    CHECK(back.params.items()[i].second.shape() == ck.params.items()[i].second.shape());
    const std::span<const Real> a = ck.params.items()[i].second.data(), b = back.params.items()[i].second.data();
    CHECK(std::equal(a.begin(), a.end(), b.begin()));
  }
  save_checkpoint(dir / "b.ckpt", back);
  std::ifstream fa(dir / "a.ckpt", std::ios::binary), fb(dir / "b.ckpt", std::ios::binary);
  const std::string sa((std::istreambuf_iterator<char>(fa)), {}), sb((std::istreambuf_iterator<char>(fb)), {});
  CHECK(sa == sb);
  CHECK(sa.substr(0, 9) == "PICKTCKPT");
  CHECK(sa[9] == 1);

  fixtures::write_file(dir / "t.ckpt", sa.substr(0, sa.size() - 1));
  CHECK_THROWS_AS(load_checkpoint(dir / "t.ckpt"), DataError);
  std::string bad = sa;
  bad[9] = 2;
  fixtures::write_file(dir / "v.ckpt", bad);
  CHECK_THROWS_AS(load_checkpoint(dir / "v.ckpt"), DataError);
  fixtures::write_file(dir / "x.ckpt", sa + "junk");
  CHECK_THROWS_AS(load_checkpoint(dir / "x.ckpt"), DataError);
}
