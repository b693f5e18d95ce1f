#include "pickt/embed/embedding.hpp"

#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <unordered_set>

#include "pickt/core/error.hpp"
#include "pickt/core/rng.hpp"

namespace pickt::embed {

namespace {

constexpr char kMagic[8] = {'P', 'I', 'C', 'K', 'T', 'E', 'M', 'B'};
constexpr std::uint8_t kVersion = 1;

void put_le(std::string& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(char((v >> (8 * i)) & 0xFF));
}

struct Reader {
  const std::string& buf;
  std::size_t pos = 0;
  std::string path;

  void need(std::size_t n) const {
    if (buf.size() - pos < n) throw DataError(path + ": truncated embedding file at byte " + std::to_string(pos));
  }
  std::uint64_t le(int bytes) {
    need(std::size_t(bytes));
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= std::uint64_t(std::uint8_t(buf[pos + std::size_t(i)])) << (8 * i);
    pos += std::size_t(bytes);
    return v;
  }
};

}  // namespace

void EmbeddingTable::validate() const {
  if (values.size() != ids.size() * dim) {
    throw DimensionError("embedding table holds " + std::to_string(values.size()) + " values for " +
                         std::to_string(ids.size()) + " x " + std::to_string(dim));
  }
  std::unordered_set<std::string> seen;
  for (const auto& id : ids) {
    if (!seen.insert(id).second) throw DataError("duplicate embedding id '" + id + "'");
  }
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) throw NumericalError("non-finite embedding value in row of '" + ids[i / dim] + "'");
  }
}

void write_embeddings(const EmbeddingTable& table, const std::filesystem::path& path) {
  table.validate();
  if (table.model_tag.size() > 0xFFFF) throw ParameterError("model tag longer than 65535 bytes");
  std::string out(kMagic, sizeof kMagic);
  out.push_back(char(kVersion));
  put_le(out, table.rows(), 4);
  put_le(out, table.dim, 4);
  out.push_back(char(table.source));
  put_le(out, table.model_tag.size(), 2);
  out += table.model_tag;
  for (float f : table.values) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_le(out, bits, 4);
  }
  std::ofstream bin(path, std::ios::binary | std::ios::trunc);
  if (!bin) throw DataError("cannot write " + path.string());
  bin.write(out.data(), std::streamsize(out.size()));
  std::ofstream ids(path.string() + ".ids", std::ios::binary | std::ios::trunc);
  if (!ids) throw DataError("cannot write " + path.string() + ".ids");
  for (const auto& id : table.ids) {
    if (id.find('\n') != std::string::npos) throw DataError("embedding id contains a newline: '" + id + "'");
    ids << id << '\n';
  }
}

EmbeddingTable read_embeddings(const std::filesystem::path& path) {
  std::ifstream bin(path, std::ios::binary);
  if (!bin) throw DataError("missing file: " + path.string());
  const std::string buf((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());
  Reader r{buf, 0, path.string()};
  r.need(sizeof kMagic + 1);
  if (std::memcmp(buf.data(), kMagic, sizeof kMagic) != 0) throw DataError(r.path + ": bad magic, not a PICKTEMB file");
  r.pos = sizeof kMagic;
  const auto version = std::uint8_t(r.le(1));
  if (version != kVersion) throw DataError(r.path + ": unsupported version " + std::to_string(version));
  EmbeddingTable t;
  const std::size_t n = r.le(4);
  t.dim = r.le(4);
  const auto source = std::uint8_t(r.le(1));
  if (source > 1) throw DataError(r.path + ": unknown source flag " + std::to_string(source));
  t.source = EmbeddingSource(source);
  const std::size_t tag_len = r.le(2);
  r.need(tag_len);
  t.model_tag = buf.substr(r.pos, tag_len);
  r.pos += tag_len;
  const std::size_t payload = n * t.dim * 4;
  if (buf.size() - r.pos != payload) {
    throw DataError(r.path + ": payload is " + std::to_string(buf.size() - r.pos) + " bytes, header implies " +
                    std::to_string(payload));
  }
  t.values.resize(n * t.dim);
  for (auto& f : t.values) {
    const auto bits = std::uint32_t(r.le(4));
    std::memcpy(&f, &bits, 4);
  }

  const std::string ids_path = path.string() + ".ids";
  std::ifstream ids(ids_path, std::ios::binary);
  if (!ids) throw DataError("missing file: " + ids_path);
  std::string line;
  while (std::getline(ids, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    t.ids.push_back(line);
  }
  if (t.ids.size() != n) {
    throw DataError(ids_path + ": " + std::to_string(t.ids.size()) + " ids for " + std::to_string(n) + " rows");
  }
  t.validate();
  return t;
}

EmbeddingTable hash_embed(const std::vector<std::string>& texts, const std::vector<std::string>& ids, std::size_t dim) {
  if (dim == 0) throw ParameterError("hash_embed dimension must be positive");
  if (texts.size() != ids.size()) throw DimensionError("hash_embed needs one id per text");
  EmbeddingTable t;
  t.ids = ids;
  t.dim = dim;
  t.source = EmbeddingSource::HashFallback;
  t.model_tag = "hash-trigram-fnv1a";
  t.values.assign(ids.size() * dim, 0.0f);
  for (std::size_t i = 0; i < texts.size(); ++i) {
    if (texts[i].empty()) continue;
    std::string s = "^";
    for (unsigned char c : texts[i]) s.push_back(char(std::tolower(c)));
    s.push_back('$');
    std::vector<double> acc(dim, 0.0);
    for (std::size_t j = 0; j + 3 <= s.size(); ++j) {
      const std::uint64_t h = fnv1a64(std::string_view(s).substr(j, 3));
      acc[(h >> 1) % dim] += (h & 1) ? 1.0 : -1.0;
    }
    double norm = 0.0;
    for (double v : acc) norm += v * v;
    norm = std::sqrt(norm);
    if (norm == 0.0) continue;
    float* row = t.row(i);
    for (std::size_t k = 0; k < dim; ++k) row[k] = float(acc[k] / norm);
  }
  return t;
}

EmbeddingTable concat_tables(const EmbeddingTable& a, const EmbeddingTable& b) {
  if (a.dim != b.dim) {
    throw DimensionError("cannot stack embeddings of width " + std::to_string(a.dim) + " and " + std::to_string(b.dim));
  }
  EmbeddingTable t = a;
  t.ids.insert(t.ids.end(), b.ids.begin(), b.ids.end());
  t.values.insert(t.values.end(), b.values.begin(), b.values.end());
  return t;
}

}  // namespace pickt::embed
