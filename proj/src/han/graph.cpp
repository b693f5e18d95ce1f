#include "pickt/han/graph.hpp"

#include <algorithm>
#include <set>
#include <unordered_map>

#include "pickt/core/error.hpp"

namespace pickt::han {

namespace {

Tensor feature_matrix(const std::vector<std::string>& ids, const embed::EmbeddingTable& table, const char* what) {
  std::unordered_map<std::string, std::size_t> pos;
  for (std::size_t i = 0; i < table.ids.size(); ++i) pos.emplace(table.ids[i], i);
  const Index d = Index(table.dim);
  if (d == 0) throw DataError(std::string(what) + " features have zero width");
  // tensors need positive dims, so an empty node set keeps one zero row
  Tensor out = Tensor::zeros({std::max<Index>(Index(ids.size()), 1), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto it = pos.find(ids[i]);
    if (it == pos.end()) throw DataError(std::string("no ") + what + " embedding for id '" + ids[i] + "'");
    std::copy_n(table.row(it->second), table.dim, out.data().data() + Index(i) * d);
  }
  return out;
}

MetaPathAdjacency from_sets(MetaPath kind, const std::vector<std::set<std::int32_t>>& sets) {
  MetaPathAdjacency a;
  a.kind = kind;
  a.offsets.push_back(0);
  for (std::size_t t = 0; t < sets.size(); ++t) {
    for (std::int32_t j : sets[t]) {
      a.neighbors.push_back(j);
      a.edge_target.push_back(std::int32_t(t));
    }
    a.offsets.push_back(Index(a.neighbors.size()));
  }
  return a;
}

}  // namespace

HeteroGraph HeteroGraph::from_dataset(const data::Dataset& ds, const embed::EmbeddingTable& question_features,
                                      const embed::EmbeddingTable& concept_features) {
  if (question_features.dim != concept_features.dim) {
    throw DimensionError("question and concept features differ in width");
  }
  HeteroGraph g;
  for (const auto& c : ds.concepts) g.concept_ids.push_back(c.id);
  for (const auto& q : ds.questions) g.question_ids.push_back(q.id);
  for (const auto& e : ds.cc_edges) {
    g.cc_edges.emplace_back(std::int32_t(*ds.concept_index(e.src)), std::int32_t(*ds.concept_index(e.dst)));
  }
  for (const auto& l : ds.cq_links) {
    g.cq_edges.emplace_back(std::int32_t(*ds.concept_index(l.concept_id)), std::int32_t(*ds.question_index(l.question_id)));
  }
  g.concept_features = feature_matrix(g.concept_ids, concept_features, "concept");
  g.question_features = feature_matrix(g.question_ids, question_features, "question");
  g.validate();
  return g;
}

void HeteroGraph::validate() const {
  const Index nc = concepts(), nq = questions();
  for (const auto& [s, d] : cc_edges) {
    if (s < 0 || s >= nc || d < 0 || d >= nc) throw DataError("concept edge endpoint out of range");
  }
  for (const auto& [c, q] : cq_edges) {
    if (c < 0 || c >= nc || q < 0 || q >= nq) throw DataError("concept-question edge endpoint out of range");
  }
  if (!concept_features.defined() || !question_features.defined()) throw DataError("graph features missing");
  if (concept_features.dim(0) < nc || question_features.dim(0) < nq ||
      concept_features.dim(1) != question_features.dim(1)) {
    throw DataError("graph features " + shape_str(concept_features.shape()) + " / " +
                    shape_str(question_features.shape()) + " do not fit " + std::to_string(nc) + " concepts and " +
                    std::to_string(nq) + " questions");
  }
}

const char* metapath_name(MetaPath m) {
  switch (m) {
    case MetaPath::CC:
      return "CC";
    case MetaPath::CQC:
      return "CQC";
    case MetaPath::QC:
      return "QC";
    case MetaPath::QCQ:
      return "QCQ";
  }
  return "?";
}

std::vector<std::int32_t> MetaPathAdjacency::neighbors_of(Index target) const {
  return {neighbors.begin() + offsets.at(std::size_t(target)), neighbors.begin() + offsets.at(std::size_t(target) + 1)};
}

std::vector<MetaPathAdjacency> build_metapaths(const HeteroGraph& g) {
  const auto nc = std::size_t(g.concepts()), nq = std::size_t(g.questions());
  std::vector<std::set<std::int32_t>> cc(nc), cqc(nc), qc(nq), qcq(nq);
  std::vector<std::vector<std::int32_t>> by_question(nq), by_concept(nc);
  for (std::size_t c = 0; c < nc; ++c) {
    cc[c].insert(std::int32_t(c));
    cqc[c].insert(std::int32_t(c));
  }
  for (std::size_t q = 0; q < nq; ++q) {
    qc[q].insert(std::int32_t(q));
    qcq[q].insert(std::int32_t(q));
  }
  for (const auto& [s, d] : g.cc_edges) {
    cc[std::size_t(s)].insert(d);
    cc[std::size_t(d)].insert(s);
  }
  for (const auto& [c, q] : g.cq_edges) {
    by_question[std::size_t(q)].push_back(c);
    by_concept[std::size_t(c)].push_back(q);
    qc[std::size_t(q)].insert(std::int32_t(nq) + c);
  }
  for (const auto& concepts : by_question) {
    for (std::int32_t a : concepts) cqc[std::size_t(a)].insert(concepts.begin(), concepts.end());
  }
  for (const auto& questions : by_concept) {
    for (std::int32_t a : questions) qcq[std::size_t(a)].insert(questions.begin(), questions.end());
  }
  return {from_sets(MetaPath::CC, cc), from_sets(MetaPath::CQC, cqc), from_sets(MetaPath::QC, qc),
          from_sets(MetaPath::QCQ, qcq)};
}

}  // namespace pickt::han
