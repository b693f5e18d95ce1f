#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace pickt::embed {

enum class EmbeddingSource : std::uint8_t { ExternalModel = 0, HashFallback = 1 };

/// Row-major n x d float table keyed by ids.
struct EmbeddingTable {
  std::vector<std::string> ids;
  std::size_t dim = 0;
  std::vector<float> values;
  EmbeddingSource source = EmbeddingSource::HashFallback;
  std::string model_tag;

  std::size_t rows() const { return ids.size(); }
  const float* row(std::size_t i) const { return values.data() + i * dim; }
  float* row(std::size_t i) { return values.data() + i * dim; }
  /// Throws when ids repeat, a value is non-finite or sizes disagree.
  void validate() const;
};

/// Binary layout: "PICKTEMB", version byte 1, u32 n, u32 d, u8 source,
/// u16 tag length, tag bytes, n*d float32 little-endian. Ids go one per line to
/// `path` + ".ids".
void write_embeddings(const EmbeddingTable& table, const std::filesystem::path& path);
EmbeddingTable read_embeddings(const std::filesystem::path& path);

/// Character-trigram feature hashing into `dim` signed buckets, rows scaled to
/// unit L2 norm. Empty text gives a zero row.
EmbeddingTable hash_embed(const std::vector<std::string>& texts, const std::vector<std::string>& ids, std::size_t dim);

/// Rows of `a` followed by rows of `b` (dims must match).
EmbeddingTable concat_tables(const EmbeddingTable& a, const EmbeddingTable& b);

}  // namespace pickt::embed
