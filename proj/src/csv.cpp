#include "asdmeta/csv.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>

#include <fmt/format.h>

#include "asdmeta/tabular.hpp"

namespace asdmeta::csv {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string> split_line(std::string_view line, std::size_t line_no) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cell.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell.push_back(c);
      }
    } else if (c == '"' && trim(cell).empty()) {
      cell.clear();
      quoted = true;
      was_quoted = true;
    } else if (c == ',') {
      cells.push_back(was_quoted ? cell : std::string(trim(cell)));
      cell.clear();
      was_quoted = false;
    } else if (!(was_quoted && std::isspace(static_cast<unsigned char>(c)))) {
      cell.push_back(c);
    }
  }
  if (quoted) throw ValidationError("unterminated quoted cell", line_no);
  cells.push_back(was_quoted ? cell : std::string(trim(cell)));
  return cells;
}

}  // namespace

std::optional<std::size_t> Document::find(std::string_view name) const {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) return std::nullopt;
  return static_cast<std::size_t>(it - header.begin());
}

std::size_t Document::require(std::string_view name) const {
  if (auto idx = find(name)) return *idx;
  throw ValidationError(fmt::format("missing required column {}", name), header_line,
                        std::string(name));
}

Document parse(std::string_view text) {
  Document doc;
  bool have_header = false;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line_no == 1 && line.starts_with("\xEF\xBB\xBF")) line.remove_prefix(3);
    if (trim(line).empty() || line.front() == '#') {
      if (end == text.size()) break;
      continue;
    }
    auto cells = split_line(line, line_no);
    if (!have_header) {
      doc.header = std::move(cells);
      doc.header_line = line_no;
      have_header = true;
    } else {
      if (cells.size() != doc.header.size())
        throw ValidationError(fmt::format("expected {} cells, found {}", doc.header.size(),
                                          cells.size()),
                              line_no);
      doc.rows.push_back({line_no, std::move(cells)});
    }
    if (end == text.size()) break;
  }
  if (!have_header) throw ValidationError("empty file: no header row");
  return doc;
}

std::string escape(std::string_view cell) {
  bool needs_quotes = cell.find_first_of(",\"\n") != std::string_view::npos ||
                      (!cell.empty() && (std::isspace(static_cast<unsigned char>(cell.front())) ||
                                         std::isspace(static_cast<unsigned char>(cell.back()))));
  if (!needs_quotes) return std::string(cell);
  std::string out = "\"";
  for (char c : cell) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

std::string join(const std::vector<std::string>& cells) {
  std::string out;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out.push_back(',');
    out += escape(cells[i]);
  }
  return out;
}

bool is_na(std::string_view cell) {
  return cell.size() == 2 && std::toupper(static_cast<unsigned char>(cell[0])) == 'N' &&
         std::toupper(static_cast<unsigned char>(cell[1])) == 'A';
}

std::optional<double> parse_double(std::string_view cell) {
  if (cell.empty()) return std::nullopt;
  if (cell.front() == '+') cell.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc() || ptr != cell.data() + cell.size()) return std::nullopt;
  return value;
}

std::optional<long long> parse_int(std::string_view cell) {
  if (cell.empty()) return std::nullopt;
  long long value = 0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), value);
  if (ec != std::errc() || ptr != cell.data() + cell.size()) return std::nullopt;
  return value;
}

}  // namespace asdmeta::csv
