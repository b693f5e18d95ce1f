#include "pickt/han/han.hpp"

#include "pickt/core/error.hpp"
#include "pickt/core/ops.hpp"

namespace pickt::han {

namespace {

constexpr Real kLeakySlope = Real(0.2);

std::string att_name(const std::string& prefix, MetaPath m, Index head, const char* side) {
  return prefix + "att." + metapath_name(m) + ".head" + std::to_string(head) + "." + side;
}

const MetaPathAdjacency& find_path(const std::vector<MetaPathAdjacency>& paths, MetaPath kind) {
  for (const auto& p : paths) {
    if (p.kind == kind) return p;
  }
  throw ContractError(std::string("meta-path ") + metapath_name(kind) + " was not built");
}

}  // namespace

void HanConfig::validate() const {
  if (in_dim <= 0 || hidden_dim <= 0 || heads <= 0 || out_dim <= 0) throw ParameterError("HAN sizes must be positive");
  if (hidden_dim % heads != 0) {
    throw ParameterError("han.hidden_dim " + std::to_string(hidden_dim) + " is not divisible by han.heads " +
                         std::to_string(heads));
  }
}

void han_init(ParamStore& params, const HanConfig& c, Rng& rng, const std::string& prefix) {
  c.validate();
  for (const char* type : {"concept", "question"}) {
    params.normal(prefix + "proj." + type + ".w", {c.in_dim, c.hidden_dim}, rng);
    params.zeros(prefix + "proj." + type + ".b", {c.hidden_dim});
  }
  for (MetaPath m : {MetaPath::CC, MetaPath::CQC, MetaPath::QC, MetaPath::QCQ}) {
    for (Index h = 0; h < c.heads; ++h) {
      params.normal(att_name(prefix, m, h, "left"), {c.head_dim(), 1}, rng);
      params.normal(att_name(prefix, m, h, "right"), {c.head_dim(), 1}, rng);
    }
  }
  for (const char* type : {"concept", "question"}) {
    params.normal(prefix + "sem." + type + ".w", {c.hidden_dim, c.hidden_dim}, rng);
    params.zeros(prefix + "sem." + type + ".b", {c.hidden_dim});
    params.normal(prefix + "sem." + type + ".q", {c.hidden_dim, 1}, rng);
  }
  for (const char* type : {"concept", "question"}) {
    params.normal(prefix + "out." + type + ".w", {c.hidden_dim, c.out_dim}, rng);
    params.zeros(prefix + "out." + type + ".b", {c.out_dim});
  }
}

NodeAttention node_attention(const Tensor& target, const Tensor& source, const MetaPathAdjacency& adj,
                             const Tensor& a_left, const Tensor& a_right) {
  const Tensor s_left = matmul(target, a_left);
  const Tensor s_right = matmul(source, a_right);
  const Tensor e = leaky_relu(add(index_select(s_left, adj.edge_target), index_select(s_right, adj.neighbors)),
                              kLeakySlope);
  NodeAttention out;
  out.alpha = segment_softmax(e, adj.offsets);
  out.output = gelu(neighbor_aggregate(source, adj.neighbors, out.alpha, adj.offsets));
  return out;
}

SemanticAttention semantic_attention(std::span<const Tensor> per_path, const Tensor& w, const Tensor& b,
                                     const Tensor& q) {
  if (per_path.empty()) throw ContractError("semantic_attention needs at least one meta-path");
  std::vector<Tensor> scores;
  for (const Tensor& z : per_path) {
    const Tensor m = mean_rows(tanh(linear(z, w, b)));
    scores.push_back(matmul(reshape(m, {1, m.numel()}), q));
  }
  SemanticAttention out;
  out.beta = softmax(stack(scores));
  out.output = weighted_sum(per_path, out.beta);
  return out;
}

HanOutput han_forward(const HeteroGraph& graph, const std::vector<MetaPathAdjacency>& metapaths,
                      const ParamStore& params, const HanConfig& c, const std::string& prefix) {
  c.validate();
  if (graph.concepts() == 0 || graph.questions() == 0) throw DataError("HAN needs at least one concept and question");
  if (graph.concept_features.dim(1) != c.in_dim) {
    throw DimensionError("graph features are " + std::to_string(graph.concept_features.dim(1)) +
                         " wide, han.in_dim is " + std::to_string(c.in_dim));
  }
  auto P = [&](const std::string& name) -> const Tensor& { return params.get(prefix + name); };
  const Tensor xc = slice_rows(graph.concept_features, 0, graph.concepts());
  const Tensor xq = slice_rows(graph.question_features, 0, graph.questions());
  const Tensor hc = linear(xc, P("proj.concept.w"), P("proj.concept.b"));
  const Tensor hq = linear(xq, P("proj.question.w"), P("proj.question.b"));

  const auto& cc = find_path(metapaths, MetaPath::CC);
  const auto& cqc = find_path(metapaths, MetaPath::CQC);
  const auto& qc = find_path(metapaths, MetaPath::QC);
  const auto& qcq = find_path(metapaths, MetaPath::QCQ);

  std::vector<Tensor> z_cc, z_cqc, z_qc, z_qcq;
  const Index hd = c.head_dim();
  for (Index h = 0; h < c.heads; ++h) {
    const Tensor hc_h = slice_cols(hc, h * hd, hd);
    const Tensor hq_h = slice_cols(hq, h * hd, hd);
    const Tensor pool[] = {hq_h, hc_h};
    const Tensor pooled = concat_rows(pool);
    auto run = [&](const Tensor& tgt, const Tensor& src, const MetaPathAdjacency& adj) {
      return node_attention(tgt, src, adj, P(att_name("", adj.kind, h, "left")),
                            P(att_name("", adj.kind, h, "right")))
          .output;
    };
    z_cc.push_back(run(hc_h, hc_h, cc));
    z_cqc.push_back(run(hc_h, hc_h, cqc));
    z_qc.push_back(run(hq_h, pooled, qc));
    z_qcq.push_back(run(hq_h, hq_h, qcq));
  }
  const Tensor concept_paths[] = {concat_cols(z_cc), concat_cols(z_cqc)};
  const Tensor question_paths[] = {concat_cols(z_qc), concat_cols(z_qcq)};
  const SemanticAttention sc = semantic_attention(concept_paths, P("sem.concept.w"), P("sem.concept.b"),
                                                  P("sem.concept.q"));
  const SemanticAttention sq = semantic_attention(question_paths, P("sem.question.w"), P("sem.question.b"),
                                                  P("sem.question.q"));
  HanOutput out;
  out.concepts = linear(sc.output, P("out.concept.w"), P("out.concept.b"));
  out.questions = linear(sq.output, P("out.question.w"), P("out.question.b"));
  out.concept_beta.assign(sc.beta.data().begin(), sc.beta.data().end());
  out.question_beta.assign(sq.beta.data().begin(), sq.beta.data().end());
  return out;
}

}  // namespace pickt::han
