#include "pickt/model/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <iterator>

#include "pickt/core/error.hpp"

namespace pickt::model {

namespace {

constexpr char kMagic[9] = {'P', 'I', 'C', 'K', 'T', 'C', 'K', 'P', 'T'};
constexpr std::uint8_t kVersion = 1;

void put_le(std::string& out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out.push_back(char((v >> (8 * i)) & 0xFF));
}

struct Reader {
  const std::string& buf;
  std::string path;
  std::size_t pos = 0;

  void need(std::size_t n) const {
    if (buf.size() - pos < n) throw DataError(path + ": truncated checkpoint at byte " + std::to_string(pos));
  }
  std::uint64_t le(int bytes) {
    need(std::size_t(bytes));
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v |= std::uint64_t(std::uint8_t(buf[pos + std::size_t(i)])) << (8 * i);
    pos += std::size_t(bytes);
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf.substr(pos, n);
    pos += n;
    return s;
  }
};

const char* kVocabNames[] = {"question", "question_type", "difficulty", "discrimination",
                             "activity", "concept",       "area",       "content_type"};

std::array<data::Vocabulary*, 8> vocab_fields(data::Vocabularies& v) {
  return {&v.question, &v.question_type, &v.difficulty, &v.discrimination,
          &v.activity, &v.concept_id,    &v.area,       &v.content_type};
}

}  // namespace

nlohmann::json config_to_json(const ModelConfig& c) {
  nlohmann::json j;
  j["encoder_layers"] = c.encoder_layers;
  j["decoder_layers"] = c.decoder_layers;
  j["heads"] = c.heads;
  j["d_hidden"] = c.d_hidden;
  j["d_intermediate"] = c.d_intermediate;
  j["dropout"] = double(c.dropout);
  j["max_seq_len"] = c.max_seq_len;
  j["han"] = c.han;
  j["han_in_dim"] = c.han_config.in_dim;
  j["han_hidden_dim"] = c.han_config.hidden_dim;
  j["han_heads"] = c.han_config.heads;
  j["han_out_dim"] = c.han_config.out_dim;
  j["vocab_sizes"] = {{"question", c.vocab.question},       {"question_type", c.vocab.question_type},
                      {"difficulty", c.vocab.difficulty},   {"discrimination", c.vocab.discrimination},
                      {"activity", c.vocab.activity},       {"concept", c.vocab.concept_id},
                      {"area", c.vocab.area},               {"content_type", c.vocab.content_type}};
  return j;
}

ModelConfig config_from_json(const nlohmann::json& j) {
  try {
    ModelConfig c;
    c.encoder_layers = j.at("encoder_layers").get<Index>();
    c.decoder_layers = j.at("decoder_layers").get<Index>();
    c.heads = j.at("heads").get<Index>();
    c.d_hidden = j.at("d_hidden").get<Index>();
    c.d_intermediate = j.at("d_intermediate").get<Index>();
    c.dropout = Real(j.at("dropout").get<double>());
    c.max_seq_len = j.at("max_seq_len").get<Index>();
    c.han = j.at("han").get<bool>();
    c.han_config.in_dim = j.at("han_in_dim").get<Index>();
    c.han_config.hidden_dim = j.at("han_hidden_dim").get<Index>();
    c.han_config.heads = j.at("han_heads").get<Index>();
    c.han_config.out_dim = j.at("han_out_dim").get<Index>();
    const auto& v = j.at("vocab_sizes");
    c.vocab.question = v.at("question").get<Index>();
    c.vocab.question_type = v.at("question_type").get<Index>();
    c.vocab.difficulty = v.at("difficulty").get<Index>();
    c.vocab.discrimination = v.at("discrimination").get<Index>();
    c.vocab.activity = v.at("activity").get<Index>();
    c.vocab.concept_id = v.at("concept").get<Index>();
    c.vocab.area = v.at("area").get<Index>();
    c.vocab.content_type = v.at("content_type").get<Index>();
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed model config: ") + e.what());
  }
}

nlohmann::json vocab_to_json(const data::Vocabularies& vocab) {
  data::Vocabularies copy = vocab;
  nlohmann::json j = nlohmann::json::object();
  const auto fields = vocab_fields(copy);
  for (std::size_t i = 0; i < fields.size(); ++i) j[kVocabNames[i]] = fields[i]->values();
  return j;
}

data::Vocabularies vocab_from_json(const nlohmann::json& j) {
  data::Vocabularies v;
  const auto fields = vocab_fields(v);
  try {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      *fields[i] = data::Vocabulary(j.at(kVocabNames[i]).get<std::vector<std::string>>());
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed vocabulary: ") + e.what());
  }
  return v;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  nlohmann::json meta;
  meta["config"] = config_to_json(ck.config);
  meta["vocab"] = vocab_to_json(ck.vocab);
  meta["seed"] = ck.seed;
  meta["step"] = ck.step;
  meta["extra"] = ck.extra;
  const std::string text = meta.dump();

  std::string out(kMagic, sizeof kMagic);
  out.push_back(char(kVersion));
  put_le(out, text.size(), 4);
  out += text;
  put_le(out, ck.params.size(), 4);
  for (const auto& [name, t] : ck.params.items()) {
    if (name.size() > 0xFFFF) throw ParameterError("tensor name too long: " + name);
    put_le(out, name.size(), 2);
    out += name;
    out.push_back(char(t.rank()));
    for (Index d : t.shape()) put_le(out, std::uint64_t(d), 4);
    for (Real v : t.data()) {
      const float f = float(v);
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      put_le(out, bits, 4);
    }
  }
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write " + tmp.string());
    f.write(out.data(), std::streamsize(out.size()));
    if (!f) throw DataError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("missing file: " + path.string());
  const std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  Reader r{buf, path.string()};
  if (r.bytes(sizeof kMagic) != std::string(kMagic, sizeof kMagic)) throw DataError(r.path + ": not a PICKTCKPT file");
  const auto version = std::uint8_t(r.le(1));
  if (version != kVersion) throw DataError(r.path + ": unsupported checkpoint version " + std::to_string(version));
  const std::size_t meta_len = r.le(4);
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(r.bytes(meta_len));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(r.path + ": bad metadata: " + e.what());
  }
  Checkpoint ck;
  ck.config = config_from_json(meta.at("config"));
  ck.vocab = vocab_from_json(meta.at("vocab"));
  ck.seed = meta.value("seed", std::uint64_t{0});
  ck.step = meta.value("step", std::uint64_t{0});
  ck.extra = meta.value("extra", nlohmann::json::object());

  const std::size_t count = r.le(4);
  for (std::size_t i = 0; i < count; ++i) {
    const std::string name = r.bytes(r.le(2));
    const std::size_t rank = r.le(1);
    Shape shape;
    for (std::size_t k = 0; k < rank; ++k) shape.push_back(Index(r.le(4)));
    const Index n = shape_numel(shape);
    r.need(std::size_t(n) * 4);
    std::vector<Real> values(static_cast<std::size_t>(n));
    for (auto& v : values) {
      const auto bits = std::uint32_t(r.le(4));
      float fv;
      std::memcpy(&fv, &bits, 4);
      v = Real(fv);
    }
    ck.params.add(name, Tensor::from(shape, std::move(values), true));
  }
  if (r.pos != buf.size()) throw DataError(r.path + ": " + std::to_string(buf.size() - r.pos) + " trailing bytes");
  return ck;
}

}  // namespace pickt::model
