#include <cstdlib>

#include "doctest.h"
#include "fixtures.hpp"
#include "pickt/cli/config.hpp"
#include "pickt/core/error.hpp"

using namespace pickt;
using namespace pickt::cli;

TEST_CASE("config text sets keys and skips comments") {
  RunConfig c;
  apply_config_text(c, "# header\nmodel.layers = 2  # both stacks\n\ntrain.lr=0.001\nsplit.mode = kfold-5\n"
                       "dataset.dir = data/dbe\nembeddings.zero_text = true\n");
  CHECK(c.model.encoder_layers == 2);
  CHECK(c.model.decoder_layers == 2);
  CHECK(c.train.learning_rate == 0.001);
  CHECK(c.split_mode == "kfold-5");
  CHECK(c.dataset_dir == "data/dbe");
  CHECK(c.graph.zero_text);
}

TEST_CASE("errors name the origin and line") {
  RunConfig c;
  try {
    apply_config_text(c, "train.epochs = 3\nmodel.colour = red\n", "a.cfg");
    FAIL("unknown key accepted");
  } catch (const ParameterError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("a.cfg:2") != std::string::npos);
    CHECK(msg.find("model.colour") != std::string::npos);
  }
  CHECK_THROWS_AS(apply_config_text(c, "train.epochs 3\n"), ParameterError);
  CHECK_THROWS_AS(c.set("train.epochs", "-1"), ParameterError);
  CHECK_THROWS_AS(c.set("train.lr", "fast"), ParameterError);
  CHECK_THROWS_AS(c.set("model.han", "maybe"), ParameterError);
  CHECK_THROWS_AS(apply_config_file(c, fixtures::fresh_dir("cfg") / "none.cfg"), DataError);
}

TEST_CASE("to_text round-trips every key") {
  RunConfig a;
  a.set("train.lr", "0.000123");
  a.set("model.dropout", "0.25");
  a.set("coldstart.scenario", "new-question");
  a.set("embeddings.path", "emb dir");
  a.set("synth.seed", "18446744073709551615");
  RunConfig b;
  apply_config_text(b, a.to_text());
  CHECK(b.to_text() == a.to_text());
  for (const auto& k : RunConfig::keys()) CHECK(a.get(k) == b.get(k));
  CHECK(b.train.learning_rate == 0.000123);
  CHECK(b.synth.seed == 18446744073709551615ull);
}

TEST_CASE("overrides apply after the file and seed is an alias") {
  const auto dir = fixtures::fresh_dir("cfg_over");
  fixtures::write_file(dir / "run.cfg", "train.epochs = 7\ntrain.seed = 1\n");
  RunConfig c;
  apply_config_file(c, dir / "run.cfg");
  apply_override(c, "train.epochs=9");
  apply_override(c, "seed=42");
  CHECK(c.train.epochs == 9);
  CHECK(c.train.seed == 42);
  CHECK_THROWS_AS(apply_override(c, "novalue"), ParameterError);
}

TEST_CASE("finalize ties the graph widths to the model") {
  RunConfig c;
  c.set("model.d_hidden", "64");
  c.set("model.heads", "2");
  c.set("han.in_dim", "999");
  c.set("embeddings.hash_dim", "128");
  c.graph.in_dim = 32;
  c.finalize();
  CHECK(c.model.han_config.in_dim == 32);
  CHECK(c.model.han_config.out_dim == 64);
}

TEST_CASE("run directories are unique and thread limits parse") {
  const auto root = fixtures::fresh_dir("runs");
  const auto a = make_run_dir(root, "train", 5);
  const auto b = make_run_dir(root, "train", 5);
  CHECK(a != b);
  CHECK(std::filesystem::is_directory(a));
  CHECK(a.filename().string().rfind("train-", 0) == 0);
  CHECK(a.filename().string().find("-seed5") != std::string::npos);

  ::setenv("PICKT_THREADS", "3", 1);
  CHECK(thread_limit() == 3);
  ::setenv("PICKT_THREADS", "zero", 1);
  CHECK(thread_limit() == 1);
  ::unsetenv("PICKT_THREADS");
  CHECK(thread_limit() == 1);
}
