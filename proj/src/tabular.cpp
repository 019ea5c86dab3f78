#include "asdmeta/tabular.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <fmt/format.h>

#include "asdmeta/csv.hpp"

namespace asdmeta {

namespace {

std::string upper(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

double require_number(const csv::Row& row, std::size_t col, const csv::Document& doc) {
  const std::string& cell = row.cells[col];
  auto value = csv::parse_double(cell);
  if (!value)
    throw ValidationError(fmt::format("line {}, column {}: '{}' is not a number", row.line,
                                      doc.header[col], cell),
                          row.line, doc.header[col]);
  if (!std::isfinite(*value))
    throw ValidationError(fmt::format("line {}, column {}: value must be finite", row.line,
                                      doc.header[col]),
                          row.line, doc.header[col]);
  return *value;
}

std::optional<double> optional_positive(const csv::Row& row, std::size_t col,
                                        const csv::Document& doc) {
  if (csv::is_na(row.cells[col])) return std::nullopt;
  double value = require_number(row, col, doc);
  if (value <= 0.0)
    throw ValidationError(fmt::format("line {}, column {}: value must be > 0", row.line,
                                      doc.header[col]),
                          row.line, doc.header[col]);
  return value;
}

void require_rows(const csv::Document& doc) {
  if (doc.rows.empty()) throw ValidationError("empty file: header but no data rows", doc.header_line);
}

std::string format_optional(const std::optional<double>& value) {
  return value ? format_double(*value) : std::string("NA");
}

}  // namespace

std::string_view label_name(Label label) { return label == kASD ? "ASD" : "NT"; }

ValidationError::ValidationError(std::string message, std::size_t line, std::string column)
    : std::runtime_error(std::move(message)), line_(line), column_(std::move(column)) {}

Matrix Matrix::select_rows(std::span<const std::size_t> rows) const {
  Matrix out(rows.size(), cols_);
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(rows[i] * cols_), cols_,
                out.data_.begin() + static_cast<std::ptrdiff_t>(i * cols_));
  return out;
}

Matrix Matrix::select_cols(std::span<const std::size_t> cols) const {
  Matrix out(rows_, cols.size());
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols.size(); ++c) out(r, c) = (*this)(r, cols[c]);
  return out;
}

Mask::Mask(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
  for (auto& b : bits_) b = b ? 1 : 0;
}

Mask Mask::parse(std::string_view text) {
  Mask m(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '0' && text[i] != '1')
      throw std::invalid_argument(fmt::format("mask character {} is not 0 or 1", i));
    m.bits_[i] = text[i] == '1';
  }
  return m;
}

std::size_t Mask::popcount() const noexcept {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), 1));
}

std::vector<std::size_t> Mask::indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < bits_.size(); ++i)
    if (bits_[i]) out.push_back(i);
  return out;
}

std::string Mask::to_string() const {
  std::string s(bits_.size(), '0');
  for (std::size_t i = 0; i < bits_.size(); ++i)
    if (bits_[i]) s[i] = '1';
  return s;
}

Mask Mask::restrict_to(const Mask& parent) const {
  if (parent.size() != size()) throw std::invalid_argument("restrict_to: mask size mismatch");
  Mask out;
  for (std::size_t i = 0; i < size(); ++i)
    if (parent.test(i)) out.bits_.push_back(bits_[i]);
  return out;
}

Mask Mask::lift(const Mask& sub, const Mask& parent) {
  if (sub.size() != parent.popcount())
    throw std::invalid_argument("lift: sub-mask size must equal parent popcount");
  Mask out(parent.size());
  std::size_t j = 0;
  for (std::size_t i = 0; i < parent.size(); ++i)
    if (parent.test(i)) out.bits_[i] = sub.bits_[j++];
  return out;
}

Mask Mask::operator&(const Mask& other) const {
  if (other.size() != size()) throw std::invalid_argument("mask AND: size mismatch");
  Mask out(size());
  for (std::size_t i = 0; i < size(); ++i) out.bits_[i] = bits_[i] & other.bits_[i];
  return out;
}

bool Mask::subset_of(const Mask& other) const {
  if (other.size() != size()) return false;
  for (std::size_t i = 0; i < size(); ++i)
    if (bits_[i] && !other.bits_[i]) return false;
  return true;
}

void FeatureTable::validate() const {
  std::size_t n = subject_ids.size();
  if (n == 0) throw ValidationError("feature table has no rows");
  if (feature_names.empty()) throw ValidationError("feature table has no feature columns");
  if (site_ids.size() != n || labels.size() != n || features.rows() != n)
    throw ValidationError("feature table columns have different lengths");
  if (features.cols() != feature_names.size())
    throw ValidationError("feature matrix width does not match feature names");
  std::unordered_set<std::string_view> seen;
  for (std::size_t r = 0; r < n; ++r) {
    if (!seen.insert(subject_ids[r]).second)
      throw ValidationError(fmt::format("duplicate subject id {}", subject_ids[r]), 0, "SUB_ID");
    if (labels[r] != kNT && labels[r] != kASD)
      throw ValidationError(fmt::format("row {}: label must be 0 or 1", r), 0, "DX_GROUP");
    for (std::size_t c = 0; c < features.cols(); ++c)
      if (!std::isfinite(features(r, c)))
        throw ValidationError(fmt::format("row {}: non-finite value", r), 0, feature_names[c]);
  }
}

FeatureTable FeatureTable::select_rows(std::span<const std::size_t> rows) const {
  FeatureTable out;
  out.feature_names = feature_names;
  out.features = features.select_rows(rows);
  for (std::size_t r : rows) {
    out.subject_ids.push_back(subject_ids[r]);
    out.site_ids.push_back(site_ids[r]);
    out.labels.push_back(labels[r]);
  }
  return out;
}

std::string format_double(double value) { return fmt::format("{}", value); }

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(fmt::format("cannot open {}", path.string()));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

FeatureTable parse_feature_table(std::string_view text) {
  csv::Document doc = csv::parse(text);
  std::size_t sub_col = doc.require("SUB_ID");
  std::size_t site_col = doc.require("SITE_ID");
  std::size_t dx_col = doc.require("DX_GROUP");
  std::vector<std::size_t> feature_cols;
  FeatureTable table;
  for (std::size_t c = 0; c < doc.header.size(); ++c) {
    if (c == sub_col || c == site_col || c == dx_col) continue;
    feature_cols.push_back(c);
    table.feature_names.push_back(doc.header[c]);
  }
  if (feature_cols.empty()) throw ValidationError("no feature columns", doc.header_line);
  require_rows(doc);

  table.features = Matrix(doc.rows.size(), feature_cols.size());
  std::unordered_set<std::string> seen;
  for (std::size_t r = 0; r < doc.rows.size(); ++r) {
    const csv::Row& row = doc.rows[r];
    const std::string& id = row.cells[sub_col];
    if (id.empty()) throw ValidationError(fmt::format("line {}: empty SUB_ID", row.line), row.line, "SUB_ID");
    if (!seen.insert(id).second)
      throw ValidationError(fmt::format("line {}: duplicate SUB_ID {}", row.line, id), row.line,
                            "SUB_ID");
    if (row.cells[site_col].empty())
      throw ValidationError(fmt::format("line {}: empty SITE_ID", row.line), row.line, "SITE_ID");
    std::string dx = upper(row.cells[dx_col]);
    Label label;
    if (dx == "ASD") {
      label = kASD;
    } else if (dx == "NT") {
      label = kNT;
    } else {
      throw ValidationError(fmt::format("line {}, column DX_GROUP: unknown value '{}' (expected ASD or NT)",
                                        row.line, row.cells[dx_col]),
                            row.line, "DX_GROUP");
    }
    table.subject_ids.push_back(id);
    table.site_ids.push_back(row.cells[site_col]);
    table.labels.push_back(label);
    for (std::size_t c = 0; c < feature_cols.size(); ++c)
      table.features(r, c) = require_number(row, feature_cols[c], doc);
  }
  return table;
}

FeatureTable load_feature_table(const std::filesystem::path& path) {
  return parse_feature_table(read_text_file(path));
}

std::string format_feature_table(const FeatureTable& table) {
  std::vector<std::string> header = {"SUB_ID", "SITE_ID", "DX_GROUP"};
  header.insert(header.end(), table.feature_names.begin(), table.feature_names.end());
  std::string out = csv::join(header) + "\n";
  for (std::size_t r = 0; r < table.rows(); ++r) {
    std::vector<std::string> cells = {table.subject_ids[r], table.site_ids[r],
                                      std::string(label_name(table.labels[r]))};
    for (double v : table.features.row(r)) cells.push_back(format_double(v));
    out += csv::join(cells) + "\n";
  }
  return out;
}

void save_feature_table(const FeatureTable& table, const std::filesystem::path& path) {
  write_text_file_atomic(path, format_feature_table(table));
}

void write_text_file_atomic(const std::filesystem::path& path, std::string_view content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error(fmt::format("cannot write {}", tmp.string()));
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error(fmt::format("write failed for {}", tmp.string()));
  }
  std::filesystem::rename(tmp, path);
}

std::vector<PhenotypeRecord> parse_phenotypes(std::string_view text) {
  csv::Document doc = csv::parse(text);
  std::size_t sub_col = doc.require("SUB_ID");
  std::size_t age_col = doc.require("AGE_AT_SCAN");
  std::size_t sex_col = doc.require("SEX");
  std::size_t eye_col = doc.require("EYE_STATUS_AT_SCAN");
  require_rows(doc);

  std::vector<PhenotypeRecord> records;
  std::unordered_set<std::string> seen;
  for (const csv::Row& row : doc.rows) {
    PhenotypeRecord rec;
    rec.subject_id = row.cells[sub_col];
    if (rec.subject_id.empty())
      throw ValidationError(fmt::format("line {}: empty SUB_ID", row.line), row.line, "SUB_ID");
    if (!seen.insert(rec.subject_id).second)
      throw ValidationError(fmt::format("line {}: duplicate SUB_ID {}", row.line, rec.subject_id),
                            row.line, "SUB_ID");
    rec.age_at_scan = require_number(row, age_col, doc);
    if (rec.age_at_scan <= 0.0)
      throw ValidationError(fmt::format("line {}, column AGE_AT_SCAN: age must be > 0", row.line),
                            row.line, "AGE_AT_SCAN");
    // ABIDE codes sex as 1 = male, 2 = female.
    std::string sex = upper(row.cells[sex_col]);
    if (sex == "F" || sex == "FEMALE" || sex == "2") {
      rec.sex = Sex::kFemale;
    } else if (sex == "M" || sex == "MALE" || sex == "1") {
      rec.sex = Sex::kMale;
    } else {
      throw ValidationError(fmt::format("line {}, column SEX: unknown value '{}'", row.line,
                                        row.cells[sex_col]),
                            row.line, "SEX");
    }
    auto eye = csv::parse_int(row.cells[eye_col]);
    if (!eye || (*eye != 1 && *eye != 2))
      throw ValidationError(fmt::format("line {}, column EYE_STATUS_AT_SCAN: '{}' is not 1 or 2",
                                        row.line, row.cells[eye_col]),
                            row.line, "EYE_STATUS_AT_SCAN");
    rec.eye_status = static_cast<EyeStatus>(*eye);
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<PhenotypeRecord> load_phenotypes(const std::filesystem::path& path) {
  return parse_phenotypes(read_text_file(path));
}

std::string format_phenotypes(std::span<const PhenotypeRecord> records) {
  std::string out = "SUB_ID,AGE_AT_SCAN,SEX,EYE_STATUS_AT_SCAN\n";
  for (const auto& rec : records)
    out += csv::join({rec.subject_id, format_double(rec.age_at_scan),
                      rec.sex == Sex::kFemale ? "F" : "M",
                      std::to_string(static_cast<int>(rec.eye_status))}) +
           "\n";
  return out;
}

std::vector<ScanParamsRecord> parse_scan_params(std::string_view text) {
  csv::Document doc = csv::parse(text);
  std::size_t site_col = doc.require("SITE_ID");
  std::size_t vendor_col = doc.require("VENDOR");
  std::size_t tr_col = doc.require("TR_SEC");
  std::size_t te_col = doc.require("TE_SEC");
  std::size_t ti_col = doc.require("TI_SEC");
  std::size_t fa_col = doc.require("FA_DEG");
  require_rows(doc);

  std::vector<ScanParamsRecord> records;
  std::unordered_set<std::string> seen;
  for (const csv::Row& row : doc.rows) {
    ScanParamsRecord rec;
    rec.site_id = row.cells[site_col];
    if (rec.site_id.empty())
      throw ValidationError(fmt::format("line {}: empty SITE_ID", row.line), row.line, "SITE_ID");
    if (!seen.insert(rec.site_id).second)
      throw ValidationError(fmt::format("line {}: duplicate SITE_ID {}", row.line, rec.site_id),
                            row.line, "SITE_ID");
    rec.vendor = row.cells[vendor_col];
    if (rec.vendor.empty() || csv::is_na(rec.vendor))
      throw ValidationError(fmt::format("line {}: missing VENDOR", row.line), row.line, "VENDOR");
    rec.tr_sec = optional_positive(row, tr_col, doc);
    rec.te_sec = optional_positive(row, te_col, doc);
    rec.ti_sec = optional_positive(row, ti_col, doc);
    rec.fa_deg = optional_positive(row, fa_col, doc);
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<ScanParamsRecord> load_scan_params(const std::filesystem::path& path) {
  return parse_scan_params(read_text_file(path));
}

std::string format_scan_params(std::span<const ScanParamsRecord> records) {
  std::string out = "SITE_ID,VENDOR,TR_SEC,TE_SEC,TI_SEC,FA_DEG\n";
  for (const auto& rec : records)
    out += csv::join({rec.site_id, rec.vendor, format_optional(rec.tr_sec),
                      format_optional(rec.te_sec), format_optional(rec.ti_sec),
                      format_optional(rec.fa_deg)}) +
           "\n";
  return out;
}

std::vector<SitePartition> partition_by_site(const FeatureTable& table) {
  std::vector<std::string> order;
  std::unordered_map<std::string, std::vector<std::size_t>> rows;
  for (std::size_t r = 0; r < table.rows(); ++r) {
    auto [it, inserted] = rows.try_emplace(table.site_ids[r]);
    if (inserted) order.push_back(table.site_ids[r]);
    it->second.push_back(r);
  }
  std::vector<SitePartition> parts;
  parts.reserve(order.size());
  for (const auto& site : order) parts.push_back({site, table.select_rows(rows[site])});
  return parts;
}

FeatureTable apply_mask(const FeatureTable& table, const Mask& mask) {
  if (mask.size() != table.cols())
    throw std::invalid_argument(
        fmt::format("mask length {} does not match {} feature columns", mask.size(), table.cols()));
  if (mask.none()) throw std::invalid_argument("mask selects no features");
  auto cols = mask.indices();
  FeatureTable out;
  out.subject_ids = table.subject_ids;
  out.site_ids = table.site_ids;
  out.labels = table.labels;
  out.features = table.features.select_cols(cols);
  for (std::size_t c : cols) out.feature_names.push_back(table.feature_names[c]);
  return out;
}

}  // namespace asdmeta
