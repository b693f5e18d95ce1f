#include "pickt/cli/config.hpp"

#include <charconv>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "pickt/core/error.hpp"
#include "pickt/data/split.hpp"

namespace pickt::cli {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* what) {
  throw ParameterError(key + ": expected " + what + ", got '" + value + "'");
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) bad_value(key, v, "a non-negative integer");
  return out;
}

std::size_t to_positive(const std::string& key, const std::string& v) {
  const std::uint64_t n = to_u64(key, v);
  if (n == 0) bad_value(key, v, "a positive integer");
  return std::size_t(n);
}

double to_double(const std::string& key, const std::string& v) {
  double out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size() || v.empty()) bad_value(key, v, "a number");
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "on" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "off" || v == "0" || v == "no") return false;
  bad_value(key, v, "on/off");
}

std::string fmt(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}
std::string fmt(std::uint64_t v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "on" : "off"; }

struct Key {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::vector<std::pair<std::string, Key>>& table() {
  using C = RunConfig;
  using S = const std::string&;
  static const std::vector<std::pair<std::string, Key>> t = {
      {"dataset.dir", {[](C& c, S, S v) { c.dataset_dir = v; }, [](const C& c) { return c.dataset_dir.string(); }}},
      {"output.dir", {[](C& c, S, S v) { c.output_dir = v; }, [](const C& c) { return c.output_dir.string(); }}},
      {"model.max_seq_len", {[](C& c, S k, S v) { c.model.max_seq_len = Index(to_positive(k, v)); },
                             [](const C& c) { return fmt(std::uint64_t(c.model.max_seq_len)); }}},
      {"model.layers", {[](C& c, S k, S v) { c.model.encoder_layers = c.model.decoder_layers = Index(to_positive(k, v)); },
                        [](const C& c) { return fmt(std::uint64_t(c.model.encoder_layers)); }}},
      {"model.heads", {[](C& c, S k, S v) { c.model.heads = Index(to_positive(k, v)); },
                       [](const C& c) { return fmt(std::uint64_t(c.model.heads)); }}},
      {"model.d_hidden", {[](C& c, S k, S v) { c.model.d_hidden = Index(to_positive(k, v)); },
                          [](const C& c) { return fmt(std::uint64_t(c.model.d_hidden)); }}},
      {"model.d_intermediate", {[](C& c, S k, S v) { c.model.d_intermediate = Index(to_positive(k, v)); },
                                [](const C& c) { return fmt(std::uint64_t(c.model.d_intermediate)); }}},
      {"model.dropout", {[](C& c, S k, S v) { c.model.dropout = Real(to_double(k, v)); },
                         [](const C& c) { return fmt(double(c.model.dropout)); }}},
      {"model.han", {[](C& c, S k, S v) { c.model.han = to_bool(k, v); }, [](const C& c) { return fmt(c.model.han); }}},
      {"han.in_dim", {[](C& c, S k, S v) { c.graph.in_dim = to_positive(k, v); },
                      [](const C& c) { return fmt(std::uint64_t(c.graph.in_dim)); }}},
      {"han.hidden_dim", {[](C& c, S k, S v) { c.model.han_config.hidden_dim = Index(to_positive(k, v)); },
                          [](const C& c) { return fmt(std::uint64_t(c.model.han_config.hidden_dim)); }}},
      {"han.heads", {[](C& c, S k, S v) { c.model.han_config.heads = Index(to_positive(k, v)); },
                     [](const C& c) { return fmt(std::uint64_t(c.model.han_config.heads)); }}},
      {"train.epochs", {[](C& c, S k, S v) { c.train.epochs = std::size_t(to_u64(k, v)); },
                        [](const C& c) { return fmt(std::uint64_t(c.train.epochs)); }}},
      {"train.batch_size", {[](C& c, S k, S v) { c.train.batch_size = to_positive(k, v); },
                            [](const C& c) { return fmt(std::uint64_t(c.train.batch_size)); }}},
      {"train.eval_batch_size", {[](C& c, S k, S v) { c.train.eval_batch_size = to_positive(k, v); },
                                 [](const C& c) { return fmt(std::uint64_t(c.train.eval_batch_size)); }}},
      {"train.lr", {[](C& c, S k, S v) {
                      const double lr = to_double(k, v);
                      if (!(lr > 0)) bad_value(k, v, "a positive number");
                      c.train.learning_rate = lr;
                    },
                    [](const C& c) { return fmt(c.train.learning_rate); }}},
      {"train.seed", {[](C& c, S k, S v) { c.train.seed = to_u64(k, v); }, [](const C& c) { return fmt(c.train.seed); }}},
      {"split.mode", {[](C& c, S, S v) {
                        data::SplitPlan::parse(v);
                        c.split_mode = v;
                      },
                      [](const C& c) { return c.split_mode; }}},
      {"embeddings.path", {[](C& c, S, S v) {
                             if (v.empty())
                               c.graph.embeddings.reset();
                             else
                               c.graph.embeddings = v;
                           },
                           [](const C& c) { return c.graph.embeddings ? c.graph.embeddings->string() : std::string(); }}},
      {"embeddings.hash_dim", {[](C& c, S k, S v) { c.graph.hash_dim = to_positive(k, v); },
                               [](const C& c) { return fmt(std::uint64_t(c.graph.hash_dim)); }}},
      {"embeddings.zero_text", {[](C& c, S k, S v) { c.graph.zero_text = to_bool(k, v); },
                                [](const C& c) { return fmt(c.graph.zero_text); }}},
      {"coldstart.scenario", {[](C& c, S k, S v) {
                                if (v != "new-student" && v != "new-question") bad_value(k, v, "new-student or new-question");
                                c.coldstart_scenario = v;
                              },
                              [](const C& c) { return c.coldstart_scenario; }}},
      {"coldstart.diagnostic_count", {[](C& c, S k, S v) { c.diagnostic_count = to_positive(k, v); },
                                      [](const C& c) { return fmt(std::uint64_t(c.diagnostic_count)); }}},
      {"coldstart.question_fraction", {[](C& c, S k, S v) {
                                         const double f = to_double(k, v);
                                         if (!(f > 0 && f < 1)) bad_value(k, v, "a fraction in (0, 1)");
                                         c.question_fraction = f;
                                       },
                                       [](const C& c) { return fmt(c.question_fraction); }}},
      {"coldstart.student_fraction", {[](C& c, S k, S v) {
                                        const double f = to_double(k, v);
                                        if (!(f > 0 && f < 1)) bad_value(k, v, "a fraction in (0, 1)");
                                        c.student_fraction = f;
                                      },
                                      [](const C& c) { return fmt(c.student_fraction); }}},
      {"coldstart.diagnostic_dir", {[](C& c, S, S v) { c.diagnostic_dir = v; },
                                    [](const C& c) { return c.diagnostic_dir.string(); }}},
      {"coldstart.followup_dir", {[](C& c, S, S v) { c.followup_dir = v; },
                                  [](const C& c) { return c.followup_dir.string(); }}},
      {"coldstart.ablation", {[](C& c, S k, S v) { c.coldstart_ablation = to_bool(k, v); },
                              [](const C& c) { return fmt(c.coldstart_ablation); }}},
      {"synth.students", {[](C& c, S k, S v) { c.synth.students = to_positive(k, v); },
                          [](const C& c) { return fmt(std::uint64_t(c.synth.students)); }}},
      {"synth.questions", {[](C& c, S k, S v) { c.synth.questions = to_positive(k, v); },
                           [](const C& c) { return fmt(std::uint64_t(c.synth.questions)); }}},
      {"synth.concepts", {[](C& c, S k, S v) { c.synth.concepts = to_positive(k, v); },
                          [](const C& c) { return fmt(std::uint64_t(c.synth.concepts)); }}},
      {"synth.seed", {[](C& c, S k, S v) { c.synth.seed = to_u64(k, v); }, [](const C& c) { return fmt(c.synth.seed); }}},
      {"synth.min_interactions", {[](C& c, S k, S v) { c.synth.min_interactions = to_positive(k, v); },
                                  [](const C& c) { return fmt(std::uint64_t(c.synth.min_interactions)); }}},
      {"synth.max_interactions", {[](C& c, S k, S v) { c.synth.max_interactions = to_positive(k, v); },
                                  [](const C& c) { return fmt(std::uint64_t(c.synth.max_interactions)); }}},
  };
  return t;
}

const Key* find(const std::string& key) {
  for (const auto& [name, k] : table()) {
    if (name == key) return &k;
  }
  return nullptr;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  const std::string k = key == "seed" ? "train.seed" : key;
  const Key* entry = find(k);
  if (!entry) throw ParameterError("unknown config key '" + key + "'");
  entry->set(*this, k, value);
}

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& [name, k] : table()) v.push_back(name);
    return v;
  }();
  return names;
}

std::string RunConfig::get(const std::string& key) const {
  const Key* entry = find(key == "seed" ? "train.seed" : key);
  if (!entry) throw ParameterError("unknown config key '" + key + "'");
  return entry->get(*this);
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [name, k] : table()) out += name + " = " + k.get(*this) + "\n";
  return out;
}

void RunConfig::finalize() {
  model.han_config.in_dim = Index(graph.in_dim);
  model.han_config.out_dim = model.d_hidden;
  if (synth.min_interactions > synth.max_interactions) {
    throw ParameterError("synth.min_interactions exceeds synth.max_interactions");
  }
}

void apply_config_text(RunConfig& config, const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParameterError(origin + ":" + std::to_string(n) + ": expected key = value");
    try {
      config.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ParameterError& e) {
      throw ParameterError(origin + ":" + std::to_string(n) + ": " + e.what());
    }
  }
}

void apply_config_file(RunConfig& config, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path.string() + ": cannot open config file");
  std::ostringstream ss;
  ss << in.rdbuf();
  apply_config_text(config, ss.str(), path.string());
}

void apply_override(RunConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ParameterError("override '" + assignment + "' is not key=value");
  config.set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

std::filesystem::path make_run_dir(const std::filesystem::path& root, const std::string& command, std::uint64_t seed) {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  localtime_r(&now, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &tm);
  const std::string base = command + "-" + stamp + "-seed" + std::to_string(seed);
  std::filesystem::create_directories(root);
  std::filesystem::path dir = root / base;
  for (int i = 2; !std::filesystem::create_directory(dir); ++i) dir = root / (base + "-" + std::to_string(i));
  return dir;
}

std::size_t thread_limit() {
  const char* env = std::getenv("PICKT_THREADS");
  if (!env) return 1;
  std::size_t n = 0;
  const std::string s(env);
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), n);
  if (ec != std::errc() || p != s.data() + s.size() || n == 0) return 1;
  return n;
}

}  // namespace pickt::cli
