#pragma once

// Synthetic multi-site datasets with planted informative features.
//
// Site s draws from its own stream derive_seed(seed, {kTagSite, s}), so sites
// can be generated in any order. Informative column j of subject i:
//
//   x_ij = (+effect/2 if ASD else -effect/2) + noise_scale_s * z,  z ~ N(0, 1)
//
// and every other column is noise_scale_s * z. With one informative feature
// the Bayes accuracy is Phi(effect / (2 * noise_scale_s)).
//
// Phenotypes and scan parameters come from separate streams and never depend
// on the features.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "asdmeta/tabular.hpp"

namespace asdmeta {

struct PhenotypeModel {
  double age_mean = 17.0;
  double age_sd = 7.5;
  double age_min = 6.5;  // truncation point (rejection sampling)
  double female_fraction = 0.15;
  double eyes_open_fraction = 0.7;
};

struct SynthConfig {
  std::vector<std::size_t> sizes;    // subjects per site; n_sites = sizes.size()
  std::vector<double> noise_scale;   // per site, or a single value for all
  std::vector<std::string> site_ids; // optional; defaults to SITE01, SITE02, ...
  std::size_t d = 62;
  std::size_t k_informative = 6;
  double effect_size = 1.0;
  double label_balance = 0.5;
  std::uint64_t seed = 0;
  PhenotypeModel phenotypes;

  std::size_t n_sites() const noexcept { return sizes.size(); }
  double noise_for(std::size_t site) const;
  /// Throws std::invalid_argument on any violated invariant.
  void validate() const;
};

struct SynthDataset {
  FeatureTable table;
  Mask truth_mask;
  std::vector<std::string> site_ids;
  std::vector<std::vector<PhenotypeRecord>> phenotypes;  // per site
  std::vector<ScanParamsRecord> scan_params;             // one per site

  std::vector<PhenotypeRecord> all_phenotypes() const;
};

SynthDataset generate(const SynthConfig& config);

/// Standard normal CDF.
double normal_cdf(double x);
/// Bayes-optimal accuracy for one informative feature.
double bayes_accuracy(double effect_size, double noise_scale);

struct SizeQualityConfig {
  std::size_t n_sites = 20;
  std::size_t size_min = 26;
  std::size_t size_max = 184;
  double quality_slope = 1.0;
  double noise_base = 1.0;
  std::size_t d = 10;
  std::size_t k_informative = 2;
  double effect_size = 2.0;
  double label_balance = 0.5;
  std::uint64_t seed = 0;
  PhenotypeModel phenotypes;
};

struct SizeQualityStudy {
  SynthDataset dataset;
  std::vector<std::size_t> sizes;
  std::vector<double> noise_scales;
};

/// Site s gets size round(size_min + s * (size_max - size_min) / (n_sites - 1))
/// and noise
///   noise_base * (1 + quality_slope * (size - size_min) / (size_max - size_min)).
/// Throws if size_min == size_max while quality_slope != 0.
SizeQualityStudy generate_size_quality_study(const SizeQualityConfig& config);

/// Writes features.csv, phenotypes.csv, scan_params.csv and truth_mask.txt
/// (one line of 0/1 characters) into `dir`. `preamble` (comment lines) is
/// prepended to each CSV.
void write_dataset(const SynthDataset& dataset, const std::filesystem::path& dir,
                   std::string_view preamble = {});

}  // namespace asdmeta
