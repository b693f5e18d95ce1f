#pragma once

#include <filesystem>
#include <fstream>
#include <string>

#include "pickt/data/dataset.hpp"

namespace fixtures {

inline std::filesystem::path fresh_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("pickt_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream(path, std::ios::binary) << text;
}

/// Three concepts (c1 -> c2), four questions, two students.
///   q1: c1   q2: c1,c2   q3: c3   q4: c2
inline pickt::data::Dataset tiny_dataset() {
  using namespace pickt::data;
  Dataset ds;
  ds.concepts = {{"c1", "alg", "skill", "fractions"}, {"c2", "alg", "skill", "ratios"}, {"c3", "geo", "fact", "angles"}};
  ds.questions = {{"q1", "mc", "easy", "hi", "quiz", "add halves", {}},
                  {"q2", "mc", "hard", "lo", "quiz", "ratio of halves", {}},
                  {"q3", "open", "easy", "hi", "exam", "angle sum", {}},
                  {"q4", std::nullopt, std::nullopt, std::nullopt, std::nullopt, std::nullopt, {}}};
  ds.cc_edges = {{"c1", "c2", "prereq"}};
  ds.cq_links = {{"c1", "q1"}, {"c1", "q2"}, {"c2", "q2"}, {"c3", "q3"}, {"c2", "q4"}};
  ds.records = {
      {"s1", "q1", 1000, 1, 5000, 60000},   {"s1", "q2", 2000, 0, 400000, std::nullopt},
      {"s2", "q3", 1500, 1, std::nullopt, 120000}, {"s1", "q3", 3000, 1, 1000, 0},
      {"s2", "q1", 500, 0, 2500, 1000},     {"s2", "q4", 2500, 1, 100, 100000000},
  };
  ds.reindex();
  return ds;
}

}  // namespace fixtures
