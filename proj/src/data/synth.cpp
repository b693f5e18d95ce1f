#include "pickt/data/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "pickt/core/error.hpp"
#include "pickt/core/rng.hpp"

namespace pickt::data {

namespace {

std::string padded(char prefix, std::size_t i, std::size_t count) {
  const int width = int(std::to_string(count).size());
  char buf[32];
  std::snprintf(buf, sizeof buf, "%c%0*zu", prefix, width, i);
  return buf;
}

// Pronounceable pseudo-word from a seeded stream.
std::string pseudo_word(Rng& rng, int syllables) {
  static constexpr std::array<const char*, 16> kOnset = {"b", "d", "f", "g", "k", "l", "m", "n",
                                                         "p", "r", "s", "t", "v", "z", "br", "st"};
  static constexpr std::array<const char*, 6> kVowel = {"a", "e", "i", "o", "u", "ou"};
  std::string w;
  for (int s = 0; s < syllables; ++s) {
    w += kOnset[rng.uniform_int(kOnset.size())];
    w += kVowel[rng.uniform_int(kVowel.size())];
  }
  return w;
}

constexpr std::array<const char*, 9> kLevelWords = {"trivial", "gentle",  "simple",  "standard", "moderate",
                                                   "involved", "tricky", "arduous", "formidable"};
constexpr std::array<const char*, 3> kDifficulty = {"easy", "medium", "hard"};

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct Item {
  double difficulty;
  double discrimination;
  std::vector<std::size_t> concepts;
};

}  // namespace

Dataset synth_generate(const SynthOptions& o) {
  if (o.students == 0 || o.questions == 0 || o.concepts == 0) throw ParameterError("synth sizes must be positive");
  if (o.min_interactions == 0 || o.max_interactions < o.min_interactions) {
    throw ParameterError("synth interaction range must satisfy 0 < min <= max");
  }
  const Rng root(o.seed);
  Dataset ds;

  // Concepts and a DAG over them: edges only from lower to higher index.
  Rng crng = root.split("concepts");
  std::vector<std::vector<std::size_t>> prereqs(o.concepts);
  std::vector<std::string> concept_words(o.concepts);
  for (std::size_t c = 0; c < o.concepts; ++c) {
    ConceptMeta m;
    m.id = padded('c', c, o.concepts);
    m.area = "area" + std::to_string(c * 4 / o.concepts);
    m.content_type = (crng.uniform() < 0.5) ? "lecture" : "exercise";
    concept_words[c] = pseudo_word(crng, 2) + " " + pseudo_word(crng, 3);
    m.text = "concept " + concept_words[c];
    ds.concepts.push_back(std::move(m));
    if (c > 0) {
      const std::size_t n_pre = 1 + crng.uniform_int(std::min<std::size_t>(2, c));
      for (std::size_t k = 0; k < n_pre; ++k) {
        const std::size_t p = crng.uniform_int(c);
        if (std::find(prereqs[c].begin(), prereqs[c].end(), p) == prereqs[c].end()) {
          prereqs[c].push_back(p);
          ds.cc_edges.push_back({ds.concepts[p].id, ds.concepts[c].id, "prerequisite"});
        }
      }
    }
  }

  // Questions with 2PL parameters.
  Rng qrng = root.split("questions");
  std::vector<Item> items(o.questions);
  for (std::size_t q = 0; q < o.questions; ++q) {
    Item& it = items[q];
    it.difficulty = qrng.normal(0.0, 1.0);
    it.discrimination = std::exp(qrng.normal(0.0, 0.25)) * o.discrimination_scale;
    it.concepts.push_back(q < o.concepts ? q : qrng.uniform_int(o.concepts));
    if (!prereqs[it.concepts[0]].empty() && qrng.uniform() < 0.3) {
      const auto& pre = prereqs[it.concepts[0]];
      it.concepts.push_back(pre[qrng.uniform_int(pre.size())]);
    }

    QuestionMeta m;
    m.id = padded('q', q, o.questions);
    m.type = qrng.uniform() < 0.7 ? "choice" : "short";
    const double noisy = it.difficulty + qrng.normal(0.0, 0.8);
    m.difficulty = kDifficulty[noisy < -0.6 ? 0 : noisy < 0.6 ? 1 : 2];
    m.discrimination = it.discrimination / std::max(o.discrimination_scale, 1e-12) < 1.0 ? "low" : "high";
    m.activity = qrng.uniform() < 0.8 ? "practice" : "quiz";
    const auto level = std::size_t(std::clamp(std::floor((it.difficulty + 2.25) / 0.5), 0.0, 8.0));
    std::string text = std::string("a ") + kLevelWords[level] + " question on";
    for (std::size_t c : it.concepts) text += " " + concept_words[c];
    text += " item " + pseudo_word(qrng, 2);
    m.text = std::move(text);
    ds.questions.push_back(std::move(m));
    for (std::size_t c : it.concepts) ds.cq_links.push_back({ds.concepts[c].id, ds.questions[q].id});
  }

  // Students practise; mastery of linked concepts grows with each attempt.
  for (std::size_t s = 0; s < o.students; ++s) {
    Rng srng = root.split("student").split(s);
    const std::string sid = padded('s', s, o.students);
    const double ability = srng.normal(0.0, 1.0);
    std::vector<double> mastery(o.concepts);
    std::vector<int> attempts(o.concepts, 0);
    for (std::size_t c = 0; c < o.concepts; ++c) mastery[c] = ability + srng.normal(0.0, 0.5);
    const std::size_t n = o.min_interactions + srng.uniform_int(o.max_interactions - o.min_interactions + 1);
    std::int64_t clock = 1'600'000'000'000LL + std::int64_t(srng.uniform_int(86'400'000ULL * 30));
    for (std::size_t t = 0; t < n; ++t) {
      const std::size_t q = srng.uniform_int(o.questions);
      const Item& it = items[q];
      double m = 0.0;
      for (std::size_t c : it.concepts) m += mastery[c];
      m /= double(it.concepts.size());
      const double p = logistic(it.discrimination * (m - it.difficulty + o.offset));
      const int r = srng.uniform() < p ? 1 : 0;
      for (std::size_t c : it.concepts) {
        mastery[c] += o.learning_rate * (r ? 1.5 : 1.0) / (1.0 + 0.2 * attempts[c]);
        ++attempts[c];
      }

      InteractionRecord rec;
      rec.student_id = sid;
      rec.question_id = ds.questions[q].id;
      rec.timestamp_ms = clock;
      rec.response = r;
      const double secs = std::exp(std::log(25.0) + 0.4 * it.difficulty + (r ? -0.2 : 0.1) + srng.normal(0.0, 0.5));
      const std::int64_t elapsed = std::int64_t(std::llround(secs * 1000.0));
      const double lag_min = srng.uniform() < 0.1 ? 600.0 + srng.uniform() * 1200.0 : -std::log(1.0 - srng.uniform()) * 2.0;
      const std::int64_t lag = std::int64_t(std::llround(lag_min * 60000.0));
      if (srng.uniform() >= 0.01) rec.elapsed_ms = elapsed;
      if (srng.uniform() >= 0.01 && t + 1 < n) rec.lag_ms = lag;
      ds.records.push_back(std::move(rec));
      clock += elapsed + lag;
    }
  }
  ds.reindex();
  return ds;
}

Dataset synth_write(const SynthOptions& options, const std::filesystem::path& dir) {
  Dataset ds = synth_generate(options);
  write_dataset(ds, dir);
  return ds;
}

}  // namespace pickt::data
