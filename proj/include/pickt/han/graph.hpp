#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pickt/core/tensor.hpp"
#include "pickt/data/dataset.hpp"
#include "pickt/embed/embedding.hpp"

namespace pickt::han {

/// Concept and question nodes with C-C and C-Q edges and per-node features.
/// Node i of each type is row i of the matching feature matrix.
struct HeteroGraph {
  std::vector<std::string> concept_ids;
  std::vector<std::string> question_ids;
  std::vector<std::pair<std::int32_t, std::int32_t>> cc_edges;  // (src, dst) concept indices
  std::vector<std::pair<std::int32_t, std::int32_t>> cq_edges;  // (concept, question)
  Tensor concept_features;   // [n_c x in_dim], constant
  Tensor question_features;  // [n_q x in_dim], constant

  Index concepts() const { return Index(concept_ids.size()); }
  Index questions() const { return Index(question_ids.size()); }

  /// Nodes in dataset table order. Features are looked up by id; a missing id
  /// is a DataError.
  static HeteroGraph from_dataset(const data::Dataset& dataset, const embed::EmbeddingTable& question_features,
                                  const embed::EmbeddingTable& concept_features);
  /// Throws DataError for out-of-range endpoints or mis-sized features.
  void validate() const;
};

enum class MetaPath { CC, CQC, QC, QCQ };
const char* metapath_name(MetaPath m);

/// CSR neighbour lists for one meta-path. Neighbour ids index the concept
/// table (CC, CQC), the question table (QCQ), or the pooled table
/// [questions; concepts] where concept j appears as questions + j (QC).
struct MetaPathAdjacency {
  MetaPath kind = MetaPath::CC;
  std::vector<Index> offsets;             // targets + 1
  std::vector<std::int32_t> neighbors;    // sorted per target, self included
  std::vector<std::int32_t> edge_target;  // target of each neighbour entry

  Index targets() const { return Index(offsets.size()) - 1; }
  std::vector<std::int32_t> neighbors_of(Index target) const;
};

/// CC: symmetrised concept edges. CQC: concepts sharing a question.
/// QC: a question and its linked concepts. QCQ: questions sharing a concept.
/// Every list holds its own node. Returned in the order CC, CQC, QC, QCQ.
std::vector<MetaPathAdjacency> build_metapaths(const HeteroGraph& graph);

}  // namespace pickt::han
