#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace pickt::data {

struct CsvRow {
  std::size_t line = 0;  // 1-based line where the record starts
  std::vector<std::string> fields;
};

struct CsvTable {
  std::filesystem::path path;
  std::vector<std::string> header;
  std::vector<CsvRow> rows;

  /// Column position for `name`; throws DataError naming the file when absent.
  std::size_t column(std::string_view name) const;
};

/// RFC 4180 reader: quoted fields may hold commas, quotes ("") and newlines.
/// A zero-byte file yields an empty header and no rows.
CsvTable read_csv(const std::filesystem::path& path);

/// Quotes a field when it contains a comma, quote, or line break.
std::string csv_escape(std::string_view field);
std::string csv_join(const std::vector<std::string>& fields);

}  // namespace pickt::data
