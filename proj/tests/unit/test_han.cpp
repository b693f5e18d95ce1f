#include <cmath>

#include "doctest.h"
#include "fixtures.hpp"
#include "pickt/core/error.hpp"
#include "pickt/core/ops.hpp"
#include "pickt/core/rng.hpp"
#include "pickt/core/tape.hpp"
#include "pickt/embed/embedding.hpp"
#include "pickt/han/graph.hpp"
#include "pickt/han/han.hpp"

using namespace pickt;
using namespace pickt::han;

namespace {

HeteroGraph random_graph(std::size_t nc, std::size_t nq, std::uint64_t seed, Index in_dim = 3) {
  Rng rng(seed);
  HeteroGraph g;
  for (std::size_t i = 0; i < nc; ++i) g.concept_ids.push_back("c" + std::to_string(i));
  for (std::size_t i = 0; i < nq; ++i) g.question_ids.push_back("q" + std::to_string(i));
  for (std::size_t a = 0; a < nc; ++a)
    for (std::size_t b = 0; b < nc; ++b)
      if (a != b && rng.uniform() < 0.2) g.cc_edges.emplace_back(std::int32_t(a), std::int32_t(b));
  for (std::size_t q = 0; q < nq; ++q) {
    g.cq_edges.emplace_back(std::int32_t(rng.uniform_int(nc)), std::int32_t(q));
    if (rng.uniform() < 0.4) {
      const auto c = std::int32_t(rng.uniform_int(nc));
      if (c != g.cq_edges.back().first) g.cq_edges.emplace_back(c, std::int32_t(q));
    }
  }
  auto feats = [&](std::size_t n) {
    std::vector<Real> v(n * std::size_t(in_dim));
    for (auto& x : v) x = Real(rng.normal());
    return Tensor::from({Index(n), in_dim}, v);
  };
  g.concept_features = feats(nc);
  g.question_features = feats(nq);
  return g;
}

}  // namespace

TEST_CASE("meta-path neighbourhoods match dense boolean products") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const HeteroGraph g = random_graph(7, 11, seed);
    const std::size_t nc = 7, nq = 11;
    std::vector<std::vector<int>> cc(nc, std::vector<int>(nc, 0)), cq(nc, std::vector<int>(nq, 0));
    for (auto [a, b] : g.cc_edges) cc[std::size_t(a)][std::size_t(b)] = cc[std::size_t(b)][std::size_t(a)] = 1;
    for (auto [c, q] : g.cq_edges) cq[std::size_t(c)][std::size_t(q)] = 1;
    const auto mp = build_metapaths(g);
    REQUIRE(mp.size() == 4);
    CHECK(mp[0].kind == MetaPath::CC);
    CHECK(mp[3].kind == MetaPath::QCQ);

    for (std::size_t i = 0; i < nc; ++i) {
      std::vector<std::int32_t> want_cc, want_cqc;
      for (std::size_t j = 0; j < nc; ++j) {
        if (i == j || cc[i][j]) want_cc.push_back(std::int32_t(j));
        int shared = 0;
        for (std::size_t q = 0; q < nq; ++q) shared += cq[i][q] * cq[j][q];
        if (i == j || shared > 0) want_cqc.push_back(std::int32_t(j));
      }
      CHECK(mp[0].neighbors_of(Index(i)) == want_cc);
      CHECK(mp[1].neighbors_of(Index(i)) == want_cqc);
    }
    for (std::size_t q = 0; q < nq; ++q) {
      std::vector<std::int32_t> want_qc{std::int32_t(q)}, want_qcq;
      for (std::size_t c = 0; c < nc; ++c)
        if (cq[c][q]) want_qc.push_back(std::int32_t(nq + c));
      for (std::size_t r = 0; r < nq; ++r) {
        int shared = 0;
        for (std::size_t c = 0; c < nc; ++c) shared += cq[c][q] * cq[c][r];
        if (q == r || shared > 0) want_qcq.push_back(std::int32_t(r));
      }
      CHECK(mp[2].neighbors_of(Index(q)) == want_qc);
      CHECK(mp[3].neighbors_of(Index(q)) == want_qcq);
    }
    for (const auto& m : mp) {
      CHECK(m.edge_target.size() == m.neighbors.size());
      for (Index t = 0; t < m.targets(); ++t)
        for (Index e = m.offsets[std::size_t(t)]; e < m.offsets[std::size_t(t) + 1]; ++e)
          CHECK(m.edge_target[std::size_t(e)] == t);
    }
  }
}

TEST_CASE("node attention equals a dense masked attention oracle") {
  const HeteroGraph g = random_graph(6, 9, 4);
  const auto mp = build_metapaths(g);
  const MetaPathAdjacency& adj = mp[1];  // CQC
  Rng rng(2);
  auto vec = [&](Index n) {
    std::vector<Real> v(static_cast<std::size_t>(n));
    for (auto& x : v) x = Real(rng.normal());
    return Tensor::from({n, 1}, v);
  };
  const Tensor h = g.concept_features;
  const Tensor al = vec(3), ar = vec(3);
  NoGradGuard ng;
  const NodeAttention out = node_attention(h, h, adj, al, ar);

  for (Index i = 0; i < 6; ++i) {
    const auto nb = adj.neighbors_of(i);
    std::vector<double> e;
    double mx = -1e300;
    for (auto j : nb) {
      double s = 0;
      for (Index k = 0; k < 3; ++k) s += double(al.at(k)) * h.at(i * 3 + k) + double(ar.at(k)) * h.at(Index(j) * 3 + k);
      s = s > 0 ? s : 0.2 * s;
      e.push_back(s);
      mx = std::max(mx, s);
    }
    double z = 0;
    for (double& v : e) z += (v = std::exp(v - mx));
    for (Index k = 0; k < 3; ++k) {
      double agg = 0;
      for (std::size_t n = 0; n < nb.size(); ++n) agg += e[n] / z * h.at(Index(nb[n]) * 3 + k);
      const double want = agg * 0.5 * (1 + std::erf(agg / std::sqrt(2.0)));
      CHECK(double(out.output.at(i * 3 + k)) == doctest::Approx(want).epsilon(1e-12).scale(1.0));
    }
    for (std::size_t n = 0; n < nb.size(); ++n) {
      CHECK(double(out.alpha.at(adj.offsets[std::size_t(i)] + Index(n))) == doctest::Approx(e[n] / z).epsilon(1e-12));
    }
  }
}

TEST_CASE("semantic attention mixes meta-paths by softmaxed mean scores") {
  Rng rng(6);
  auto mat = [&](Index r, Index c) {
    std::vector<Real> v(std::size_t(r * c));
    for (auto& x : v) x = Real(rng.normal());
    return Tensor::from({r, c}, v);
  };
  const std::vector<Tensor> zs{mat(5, 4), mat(5, 4)};
  const Tensor w = mat(4, 3), b = Tensor::from({3}, {Real(0.1), Real(-0.2), Real(0.3)}), q = mat(3, 1);
  NoGradGuard ng;
  const SemanticAttention s = semantic_attention(zs, w, b, q);
  std::vector<double> score(2, 0.0);
  for (std::size_t p = 0; p < 2; ++p) {
    for (Index i = 0; i < 5; ++i)
      for (Index o = 0; o < 3; ++o) {
        double pre = double(b.at(o));
        for (Index k = 0; k < 4; ++k) pre += double(zs[p].at(i * 4 + k)) * w.at(k * 3 + o);
        score[p] += double(q.at(o)) * std::tanh(pre) / 5.0;
      }
  }
  const double b0 = 1 / (1 + std::exp(score[1] - score[0]));
  CHECK(double(s.beta.at(0)) == doctest::Approx(b0).epsilon(1e-12));
  for (Index i = 0; i < 20; ++i) {
    CHECK(double(s.output.at(i)) == doctest::Approx(b0 * zs[0].at(i) + (1 - b0) * zs[1].at(i)).epsilon(1e-12).scale(1.0));
  }
}

TEST_CASE("graphs build from datasets and reject missing features") {
  const data::Dataset ds = fixtures::tiny_dataset();
  const auto q = embed::hash_embed({"a", "b", "c", "d"}, {"q1", "q2", "q3", "q4"}, 4);
  const auto c = embed::hash_embed({"x", "y", "z"}, {"c1", "c2", "c3"}, 4);
  const HeteroGraph g = HeteroGraph::from_dataset(ds, q, c);
  CHECK(g.questions() == 4);
  CHECK(g.concepts() == 3);
  CHECK(g.cc_edges.size() == 1);
  CHECK(g.cq_edges.size() == 5);
  const auto missing = embed::hash_embed({"a"}, {"q1"}, 4);
  CHECK_THROWS_AS(HeteroGraph::from_dataset(ds, missing, c), DataError);
}

TEST_CASE("han forward produces out_dim rows and convex path weights") {
  const HeteroGraph g = random_graph(5, 8, 3, 6);
  const auto mp = build_metapaths(g);
  HanConfig cfg{6, 8, 2, 10};
  ParamStore ps;
  Rng rng(1);
  han_init(ps, cfg, rng);
  NoGradGuard ng;
  const HanOutput o = han_forward(g, mp, ps, cfg);
  CHECK(o.questions.shape() == Shape{8, 10});
  CHECK(o.concepts.shape() == Shape{5, 10});
  REQUIRE(o.question_beta.size() == 2);
  CHECK(double(o.question_beta[0] + o.question_beta[1]) == doctest::Approx(1.0));
  CHECK(double(o.concept_beta[0] + o.concept_beta[1]) == doctest::Approx(1.0));
  HanConfig wrong = cfg;
  wrong.in_dim = 5;
  CHECK_THROWS_AS(han_forward(g, mp, ps, wrong), DimensionError);
}
