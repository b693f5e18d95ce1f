#include "pickt/data/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>

#include "pickt/core/error.hpp"
#include "pickt/data/csv.hpp"

namespace pickt::data {

namespace {

std::string where(const CsvTable& t, const CsvRow& row) { return t.path.string() + ":" + std::to_string(row.line); }

std::optional<std::string> opt_field(const CsvRow& row, std::size_t col) {
  if (col >= row.fields.size() || row.fields[col].empty()) return std::nullopt;
  return row.fields[col];
}

const std::string& req_field(const CsvTable& t, const CsvRow& row, std::size_t col, const char* name) {
  if (col >= row.fields.size() || row.fields[col].empty()) {
    throw DataError(where(t, row) + ": missing value for '" + name + "'");
  }
  return row.fields[col];
}

std::int64_t parse_int(const CsvTable& t, const CsvRow& row, const std::string& s, const char* name) {
  std::int64_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw DataError(where(t, row) + ": cannot parse '" + s + "' as integer " + name);
  }
  return v;
}

std::optional<std::int64_t> opt_nonneg(const CsvTable& t, const CsvRow& row, std::size_t col, const char* name) {
  auto s = opt_field(row, col);
  if (!s) return std::nullopt;
  const std::int64_t v = parse_int(t, row, *s, name);
  if (v < 0) throw DataError(where(t, row) + ": " + name + " must be non-negative, got " + *s);
  return v;
}

void check_width(const CsvTable& t, const CsvRow& row) {
  if (row.fields.size() != t.header.size()) {
    throw DataError(where(t, row) + ": expected " + std::to_string(t.header.size()) + " fields, got " +
                    std::to_string(row.fields.size()));
  }
}

// A zero-byte interactions file is accepted as an empty table.
bool is_blank(const CsvTable& t) { return t.header.empty(); }

}  // namespace

void Dataset::reindex() {
  question_pos_.clear();
  concept_pos_.clear();
  for (std::size_t i = 0; i < questions.size(); ++i) {
    questions[i].linked_concepts.clear();
    question_pos_.emplace(questions[i].id, i);
  }
  for (std::size_t i = 0; i < concepts.size(); ++i) concept_pos_.emplace(concepts[i].id, i);
  for (const auto& link : cq_links) {
    auto it = question_pos_.find(link.question_id);
    if (it == question_pos_.end()) continue;
    auto& lc = questions[it->second].linked_concepts;
    if (std::find(lc.begin(), lc.end(), link.concept_id) == lc.end()) lc.push_back(link.concept_id);
  }
}

std::optional<std::size_t> Dataset::question_index(const std::string& id) const {
  auto it = question_pos_.find(id);
  if (it == question_pos_.end()) return std::nullopt;
  return it->second;
}

std::optional<std::size_t> Dataset::concept_index(const std::string& id) const {
  auto it = concept_pos_.find(id);
  if (it == concept_pos_.end()) return std::nullopt;
  return it->second;
}

DatasetStats Dataset::stats() const {
  DatasetStats s;
  s.questions = questions.size();
  s.concepts = concepts.size();
  s.students = student_ids().size();
  s.interactions = records.size();
  for (const auto& r : records) s.correct += r.response == 1 ? 1 : 0;
  return s;
}

std::vector<std::string> Dataset::student_ids() const {
  std::set<std::string> ids;
  for (const auto& r : records) ids.insert(r.student_id);
  return {ids.begin(), ids.end()};
}

std::map<std::string, std::vector<std::size_t>> Dataset::sequences() const {
  std::map<std::string, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < records.size(); ++i) out[records[i].student_id].push_back(i);
  for (auto& [student, idx] : out) {
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return records[a].timestamp_ms < records[b].timestamp_ms; });
  }
  return out;
}

Dataset load_dataset(const std::filesystem::path& dir) {
  Dataset ds;
  for (const char* f : {kInteractionsFile, kQuestionsFile, kConceptsFile, kEdgesCcFile, kEdgesCqFile}) {
    if (!std::filesystem::exists(dir / f)) throw DataError("missing file: " + (dir / f).string());
  }

  const CsvTable concepts = read_csv(dir / kConceptsFile);
  {
    const auto c_id = concepts.column("concept_id"), c_area = concepts.column("area"),
               c_type = concepts.column("content_type"), c_text = concepts.column("text");
    std::set<std::string> seen;
    for (const auto& row : concepts.rows) {
      check_width(concepts, row);
      ConceptMeta c;
      c.id = req_field(concepts, row, c_id, "concept_id");
      if (!seen.insert(c.id).second) throw DataError(where(concepts, row) + ": duplicate concept_id '" + c.id + "'");
      c.area = opt_field(row, c_area);
      c.content_type = opt_field(row, c_type);
      c.text = opt_field(row, c_text);
      ds.concepts.push_back(std::move(c));
    }
  }

  const CsvTable questions = read_csv(dir / kQuestionsFile);
  {
    const auto q_id = questions.column("question_id"), q_type = questions.column("type"),
               q_diff = questions.column("difficulty"), q_disc = questions.column("discrimination"),
               q_act = questions.column("activity"), q_text = questions.column("text");
    std::set<std::string> seen;
    for (const auto& row : questions.rows) {
      check_width(questions, row);
      QuestionMeta q;
      q.id = req_field(questions, row, q_id, "question_id");
      if (!seen.insert(q.id).second) throw DataError(where(questions, row) + ": duplicate question_id '" + q.id + "'");
      q.type = opt_field(row, q_type);
      q.difficulty = opt_field(row, q_diff);
      q.discrimination = opt_field(row, q_disc);
      q.activity = opt_field(row, q_act);
      q.text = opt_field(row, q_text);
      ds.questions.push_back(std::move(q));
    }
  }
  ds.reindex();

  const CsvTable cc = read_csv(dir / kEdgesCcFile);
  {
    const auto e_src = cc.column("src_concept_id"), e_dst = cc.column("dst_concept_id"), e_rel = cc.column("relation");
    for (const auto& row : cc.rows) {
      check_width(cc, row);
      ConceptEdge e{req_field(cc, row, e_src, "src_concept_id"), req_field(cc, row, e_dst, "dst_concept_id"),
                    opt_field(row, e_rel).value_or("")};
      for (const auto* id : {&e.src, &e.dst}) {
        if (!ds.concept_index(*id)) throw DataError(where(cc, row) + ": unknown concept '" + *id + "'");
      }
      ds.cc_edges.push_back(std::move(e));
    }
  }

  const CsvTable cq = read_csv(dir / kEdgesCqFile);
  {
    const auto l_c = cq.column("concept_id"), l_q = cq.column("question_id");
    for (const auto& row : cq.rows) {
      check_width(cq, row);
      ConceptQuestionLink l{req_field(cq, row, l_c, "concept_id"), req_field(cq, row, l_q, "question_id")};
      if (!ds.concept_index(l.concept_id)) {
        throw DataError(where(cq, row) + ": dangling concept reference '" + l.concept_id + "'");
      }
      if (!ds.question_index(l.question_id)) {
        throw DataError(where(cq, row) + ": unknown question '" + l.question_id + "'");
      }
      ds.cq_links.push_back(std::move(l));
    }
  }
  ds.reindex();
  for (std::size_t i = 0; i < ds.questions.size(); ++i) {
    if (ds.questions[i].linked_concepts.empty()) {
      throw DataError(questions.path.string() + ":" + std::to_string(questions.rows[i].line) + ": question '" +
                      ds.questions[i].id + "' has no linked concept in " + kEdgesCqFile);
    }
  }

  const CsvTable inter = read_csv(dir / kInteractionsFile);
  if (!is_blank(inter)) {
    const auto i_s = inter.column("student_id"), i_q = inter.column("question_id"), i_t = inter.column("timestamp_ms"),
               i_r = inter.column("response"), i_e = inter.column("elapsed_ms"), i_l = inter.column("lag_ms");
    ds.records.reserve(inter.rows.size());
    for (const auto& row : inter.rows) {
      check_width(inter, row);
      InteractionRecord r;
      r.student_id = req_field(inter, row, i_s, "student_id");
      r.question_id = req_field(inter, row, i_q, "question_id");
      if (!ds.question_index(r.question_id)) {
        throw DataError(where(inter, row) + ": unknown question '" + r.question_id + "'");
      }
      r.timestamp_ms = parse_int(inter, row, req_field(inter, row, i_t, "timestamp_ms"), "timestamp_ms");
      const std::string& resp = req_field(inter, row, i_r, "response");
      if (resp != "0" && resp != "1") {
        throw DataError(where(inter, row) + ": response must be 0 or 1, got '" + resp + "'");
      }
      r.response = resp == "1" ? 1 : 0;
      r.elapsed_ms = opt_nonneg(inter, row, i_e, "elapsed_ms");
      r.lag_ms = opt_nonneg(inter, row, i_l, "lag_ms");
      ds.records.push_back(std::move(r));
    }
  }
  return ds;
}

void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto open = [&](const char* name) {
    std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + (dir / name).string());
    return out;
  };
  auto opt = [](const std::optional<std::string>& s) { return s.value_or(""); };
  auto opt_int = [](const std::optional<std::int64_t>& v) { return v ? std::to_string(*v) : std::string(); };
  {
    auto out = open(kInteractionsFile);
    out << "student_id,question_id,timestamp_ms,response,elapsed_ms,lag_ms\n";
    for (const auto& r : ds.records) {
      out << csv_join({r.student_id, r.question_id, std::to_string(r.timestamp_ms), std::to_string(r.response),
                       opt_int(r.elapsed_ms), opt_int(r.lag_ms)})
          << '\n';
    }
  }
  {
    auto out = open(kQuestionsFile);
    out << "question_id,type,difficulty,discrimination,activity,text\n";
    for (const auto& q : ds.questions) {
      out << csv_join({q.id, opt(q.type), opt(q.difficulty), opt(q.discrimination), opt(q.activity), opt(q.text)})
          << '\n';
    }
  }
  {
    auto out = open(kConceptsFile);
    out << "concept_id,area,content_type,text\n";
    for (const auto& c : ds.concepts) out << csv_join({c.id, opt(c.area), opt(c.content_type), opt(c.text)}) << '\n';
  }
  {
    auto out = open(kEdgesCcFile);
    out << "src_concept_id,dst_concept_id,relation\n";
    for (const auto& e : ds.cc_edges) out << csv_join({e.src, e.dst, e.relation}) << '\n';
  }
  {
    auto out = open(kEdgesCqFile);
    out << "concept_id,question_id\n";
    for (const auto& l : ds.cq_links) out << csv_join({l.concept_id, l.question_id}) << '\n';
  }
}

Dataset subset_records(const Dataset& dataset, const std::vector<std::size_t>& record_indices) {
  Dataset out = dataset;
  out.records.clear();
  out.records.reserve(record_indices.size());
  for (std::size_t i : record_indices) out.records.push_back(dataset.records.at(i));
  out.reindex();
  return out;
}

}  // namespace pickt::data
