#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace asdmeta {

/// Diagnosis label. Files spell these "ASD" / "NT".
using Label = std::uint8_t;
inline constexpr Label kNT = 0;
inline constexpr Label kASD = 1;

std::string_view label_name(Label label);

/// Schema violation in an input file or table. `line` is the 1-based line
/// in the file (0 when not file-backed); `column` is the header name.
class ValidationError : public std::runtime_error {
 public:
  ValidationError(std::string message, std::size_t line = 0, std::string column = {});

  std::size_t line() const noexcept { return line_; }
  const std::string& column() const noexcept { return column_; }

 private:
  std::size_t line_;
  std::string column_;
};

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<const double> data() const noexcept { return data_; }

  /// Rows at `rows`, in the given order.
  Matrix select_rows(std::span<const std::size_t> rows) const;
  /// Columns at `cols`, in the given order.
  Matrix select_cols(std::span<const std::size_t> cols) const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Binary feature-selection mask over d columns.
class Mask {
 public:
  Mask() = default;
  explicit Mask(std::size_t size, bool value = false) : bits_(size, value ? 1 : 0) {}
  explicit Mask(std::vector<std::uint8_t> bits);

  static Mask all(std::size_t size) { return Mask(size, true); }
  /// Parses a string of '0'/'1' characters.
  static Mask parse(std::string_view text);

  std::size_t size() const noexcept { return bits_.size(); }
  bool test(std::size_t i) const noexcept { return bits_[i] != 0; }
  void set(std::size_t i, bool value = true) noexcept { bits_[i] = value ? 1 : 0; }
  void flip(std::size_t i) noexcept { bits_[i] ^= 1; }

  std::size_t popcount() const noexcept;
  bool none() const noexcept { return popcount() == 0; }
  /// Indices of set bits, ascending.
  std::vector<std::size_t> indices() const;
  std::string to_string() const;
  const std::vector<std::uint8_t>& bits() const noexcept { return bits_; }

  /// Bits of `*this` at the set positions of `parent` (projection into the
  /// parent's sub-space). Sizes must match.
  Mask restrict_to(const Mask& parent) const;
  /// Inverse of restrict_to: expands a sub-space mask back to the parent's
  /// original indexing. `sub.size()` must equal `parent.popcount()`.
  static Mask lift(const Mask& sub, const Mask& parent);

  Mask operator&(const Mask& other) const;
  /// True when every set bit of *this is also set in `other`.
  bool subset_of(const Mask& other) const;

  friend bool operator==(const Mask&, const Mask&) = default;

 private:
  std::vector<std::uint8_t> bits_;
};

/// Subjects x features with diagnosis labels and site membership.
struct FeatureTable {
  std::vector<std::string> subject_ids;
  std::vector<std::string> site_ids;
  Matrix features;
  std::vector<Label> labels;
  std::vector<std::string> feature_names;

  std::size_t rows() const noexcept { return subject_ids.size(); }
  std::size_t cols() const noexcept { return feature_names.size(); }

  /// Throws ValidationError if any invariant is broken: parallel lengths,
  /// n >= 1, d >= 1, finite values, binary labels, unique subject ids.
  void validate() const;

  FeatureTable select_rows(std::span<const std::size_t> rows) const;

  friend bool operator==(const FeatureTable&, const FeatureTable&) = default;
};

enum class Sex : std::uint8_t { kFemale, kMale };
enum class EyeStatus : std::uint8_t { kOpen = 1, kClosed = 2 };

struct PhenotypeRecord {
  std::string subject_id;
  double age_at_scan = 0.0;
  Sex sex = Sex::kMale;
  EyeStatus eye_status = EyeStatus::kOpen;

  friend bool operator==(const PhenotypeRecord&, const PhenotypeRecord&) = default;
};

struct ScanParamsRecord {
  std::string site_id;
  std::string vendor;
  std::optional<double> tr_sec;
  std::optional<double> te_sec;
  std::optional<double> ti_sec;
  std::optional<double> fa_deg;

  friend bool operator==(const ScanParamsRecord&, const ScanParamsRecord&) = default;
};

struct SitePartition {
  std::string site_id;
  FeatureTable table;
};

// File schemas (comma-separated, one header row, "NA" = missing, lines
// starting with '#' are comments):
//   features:    SUB_ID,SITE_ID,DX_GROUP,<feature columns...>
//   phenotypes:  SUB_ID,AGE_AT_SCAN,SEX,EYE_STATUS_AT_SCAN
//   scan params: SITE_ID,VENDOR,TR_SEC,TE_SEC,TI_SEC,FA_DEG

FeatureTable load_feature_table(const std::filesystem::path& path);
FeatureTable parse_feature_table(std::string_view text);
std::string format_feature_table(const FeatureTable& table);
void save_feature_table(const FeatureTable& table, const std::filesystem::path& path);

std::vector<PhenotypeRecord> load_phenotypes(const std::filesystem::path& path);
std::vector<PhenotypeRecord> parse_phenotypes(std::string_view text);
std::string format_phenotypes(std::span<const PhenotypeRecord> records);

std::vector<ScanParamsRecord> load_scan_params(const std::filesystem::path& path);
std::vector<ScanParamsRecord> parse_scan_params(std::string_view text);
std::string format_scan_params(std::span<const ScanParamsRecord> records);

/// Sub-tables per site, ordered by first appearance; row order is kept.
std::vector<SitePartition> partition_by_site(const FeatureTable& table);

/// Keeps the columns at the mask's set bits. Throws std::invalid_argument on
/// length mismatch or an all-zero mask.
FeatureTable apply_mask(const FeatureTable& table, const Mask& mask);

/// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);

/// Reads a whole file; throws ValidationError if it cannot be opened.
std::string read_text_file(const std::filesystem::path& path);

/// Writes `content` to a temporary sibling and renames it over `path`.
void write_text_file_atomic(const std::filesystem::path& path, std::string_view content);

}  // namespace asdmeta
