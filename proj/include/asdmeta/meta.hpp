#pragma once

// Site meta-data statistics: phenotype summaries, subsampled site accuracy
// and Pearson correlation tests.

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "asdmeta/cv.hpp"
#include "asdmeta/tabular.hpp"

namespace asdmeta {

/// Σ(x-x̄)(y-ȳ) / sqrt(Σ(x-x̄)² Σ(y-ȳ)²). Throws std::invalid_argument on
/// length mismatch, n < 3, or a constant input.
double pearson_r(std::span<const double> x, std::span<const double> y);

/// Regularized incomplete beta I_x(a, b) by Lentz's continued fraction.
double incomplete_beta(double a, double b, double x);

/// CDF of Student's t with `df` degrees of freedom.
double student_t_cdf(double t, double df);

/// Two-sided p-value for H0: rho = 0 from a sample correlation r over n
/// pairs. Throws std::invalid_argument if n < 3 or |r| > 1.
double pearson_p(double r, std::size_t n);

struct CorrelationResult {
  double r = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
};

struct SiteStats {
  std::string site_id;
  std::size_t n = 0;
  double mean_age = 0.0;
  /// Sample standard deviation (divisor n-1); 0 for a single subject.
  double std_age = 0.0;
  /// N_female / N_male; absent when there are no males.
  std::optional<double> fm_ratio;
  double eye_median = 0.0;
  double accuracy = 0.0;
};

/// Summary of `records` (the caller passes the ASD group). `n` is set to
/// records.size(). Throws std::invalid_argument on empty input.
SiteStats phenotype_stats(std::span<const PhenotypeRecord> records, double accuracy);

enum class Metric { kDataSize, kMeanAge, kStdAge, kFmRatio, kEyeMedian };

inline constexpr Metric kAllMetrics[] = {Metric::kDataSize, Metric::kMeanAge, Metric::kStdAge,
                                         Metric::kFmRatio, Metric::kEyeMedian};

/// DATA_SIZE, MEAN_AGE, STD_AGE, FM_RATIO, EYE_MEDIAN.
std::string metric_name(Metric m);
std::optional<double> metric_value(const SiteStats& s, Metric m);

struct BootstrapConfig {
  std::size_t replicates = 50;
  double fraction = 0.5;
  int threads = 1;

  void validate() const;
};

struct BootstrapReplicate {
  /// 1-based; 0 is reserved for whole-site rows.
  int replicate = 0;
  /// Stats of the subsample: n is the subsample size, phenotype fields
  /// cover its ASD members, accuracy is its CV mean on the masked features.
  SiteStats stats;
};

struct BootstrapResult {
  std::vector<BootstrapReplicate> replicates;
  std::vector<std::string> warnings;
};

/// Draws `replicates` subsamples of ceil(fraction * n) subjects without
/// replacement. Replicate r uses stream derive_seed(seed, {kTagReplicate, r})
/// for both the draw and its CV. Replicates without ASD members are skipped
/// with a warning. Throws if the subsample is smaller than cv.k or a subject
/// has no phenotype record.
BootstrapResult bootstrap_site(const std::string& site_id, const FeatureTable& site_table,
                               const std::map<std::string, PhenotypeRecord>& phenotypes,
                               const Mask& mask, const BootstrapConfig& config,
                               const ForestConfig& fcfg, const CVOptions& cv, std::uint64_t seed);

/// Whole-site stats over the ASD group with the given accuracy.
SiteStats site_stats(const std::string& site_id, const FeatureTable& site_table,
                     const std::map<std::string, PhenotypeRecord>& phenotypes, double accuracy);

std::map<std::string, PhenotypeRecord> index_phenotypes(std::span<const PhenotypeRecord> records);

struct PairRow {
  std::string metric_name;
  std::string site_id;
  int replicate = 0;
  double metric_value = 0.0;
  double accuracy = 0.0;

  friend bool operator==(const PairRow&, const PairRow&) = default;
};

/// Pairs for one metric; rows where the metric is undefined are left out and
/// counted in `skipped`.
std::vector<PairRow> make_pairs(std::span<const BootstrapReplicate> samples, Metric metric,
                                std::size_t* skipped = nullptr);

/// Pearson correlation of metric value against accuracy. Throws
/// std::invalid_argument with fewer than 3 pairs or a constant column.
CorrelationResult correlate(std::span<const PairRow> pairs);

/// CSV with header METRIC_NAME,SITE_ID,REPLICATE,METRIC_VALUE,ACCURACY.
std::string format_pairs(std::span<const PairRow> pairs);
std::vector<PairRow> parse_pairs(std::string_view text);

}  // namespace asdmeta
