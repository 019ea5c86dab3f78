#pragma once

// Minimal CSV reading/writing shared by every file schema in the toolkit.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace asdmeta::csv {

struct Row {
  std::size_t line = 0;  // 1-based line in the source text
  std::vector<std::string> cells;
};

struct Document {
  std::vector<std::string> header;
  std::size_t header_line = 0;
  std::vector<Row> rows;

  /// Index of `name` in the header, or nullopt.
  std::optional<std::size_t> find(std::string_view name) const;
  /// Index of `name`; throws ValidationError naming the missing column.
  std::size_t require(std::string_view name) const;
};

/// Parses comma-separated text. Blank lines and lines whose first character is
/// '#' are skipped; cells are trimmed; double-quoted cells may contain commas
/// and "" escapes. Throws ValidationError on an empty document or a row whose
/// cell count differs from the header.
Document parse(std::string_view text);

/// Quotes a cell when it contains a comma, quote, or leading/trailing space.
std::string escape(std::string_view cell);

/// Joins escaped cells with commas (no newline).
std::string join(const std::vector<std::string>& cells);

/// "NA", case-insensitive.
bool is_na(std::string_view cell);

/// Full-string decimal parse; nullopt if any character is left over.
std::optional<double> parse_double(std::string_view cell);
std::optional<long long> parse_int(std::string_view cell);

}  // namespace asdmeta::csv
