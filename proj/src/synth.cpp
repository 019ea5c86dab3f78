#include "asdmeta/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include <fmt/format.h>

#include "asdmeta/rng.hpp"

namespace asdmeta {

namespace {

// Scanner models that appear in the ABIDE-I scan-parameter records.
constexpr std::array<const char*, 7> kVendors = {
    "Siemens Magnetom TrioTim", "Siemens Magnetom Verio",     "Philips Achieva 3T",
    "Siemens Magnetom Allegra", "General Electric Discovery MR750 3T",
    "Philips Intera 3T",        "General Electric Signa 3T"};

double truncated_normal(Rng& rng, double mean, double sd, double lower) {
  for (int attempt = 0; attempt < 1000; ++attempt) {
    double v = mean + sd * rng.normal();
    if (v >= lower) return v;
  }
  return lower;
}

}  // namespace

double SynthConfig::noise_for(std::size_t site) const {
  return noise_scale.size() == 1 ? noise_scale.front() : noise_scale.at(site);
}

void SynthConfig::validate() const {
  if (sizes.empty()) throw std::invalid_argument("synth: at least one site is required");
  for (std::size_t s : sizes)
    if (s < 1) throw std::invalid_argument("synth: every site needs at least one subject");
  if (noise_scale.size() != 1 && noise_scale.size() != sizes.size())
    throw std::invalid_argument("synth: noise_scale must have 1 or n_sites entries");
  for (double v : noise_scale)
    if (!(v > 0.0)) throw std::invalid_argument("synth: noise_scale must be > 0");
  if (!site_ids.empty() && site_ids.size() != sizes.size())
    throw std::invalid_argument("synth: site_ids must have n_sites entries");
  if (d < 1) throw std::invalid_argument("synth: d must be >= 1");
  if (k_informative < 1 || k_informative > d)
    throw std::invalid_argument("synth: k_informative must be in [1, d]");
  if (!(effect_size >= 0.0)) throw std::invalid_argument("synth: effect_size must be >= 0");
  if (!(label_balance > 0.0 && label_balance < 1.0))
    throw std::invalid_argument("synth: label_balance must be in (0, 1)");
  if (!(phenotypes.age_sd >= 0.0) || !(phenotypes.age_min > 0.0))
    throw std::invalid_argument("synth: invalid age model");
}

std::vector<PhenotypeRecord> SynthDataset::all_phenotypes() const {
  std::vector<PhenotypeRecord> out;
  for (const auto& site : phenotypes) out.insert(out.end(), site.begin(), site.end());
  return out;
}

SynthDataset generate(const SynthConfig& config) {
  config.validate();
  SynthDataset out;
  const std::size_t n_sites = config.n_sites();
  for (std::size_t s = 0; s < n_sites; ++s)
    out.site_ids.push_back(config.site_ids.empty() ? fmt::format("SITE{:02}", s + 1)
                                                   : config.site_ids[s]);

  Rng truth_rng(derive_seed(config.seed, {kTagTruth}));
  auto order = truth_rng.permutation(config.d);
  out.truth_mask = Mask(config.d);
  for (std::size_t i = 0; i < config.k_informative; ++i) out.truth_mask.set(order[i]);

  std::size_t total = 0;
  for (std::size_t s : config.sizes) total += s;
  FeatureTable& table = out.table;
  table.features = Matrix(total, config.d);
  for (std::size_t j = 0; j < config.d; ++j) table.feature_names.push_back(fmt::format("f_{}", j + 1));

  const double half_effect = config.effect_size / 2.0;
  std::size_t row = 0;
  for (std::size_t s = 0; s < n_sites; ++s) {
    const std::size_t n = config.sizes[s];
    const double noise = config.noise_for(s);
    Rng rng(derive_seed(config.seed, {kTagSite, s}));

    auto n_asd = static_cast<std::size_t>(std::llround(config.label_balance * static_cast<double>(n)));
    if (n >= 2) n_asd = std::clamp<std::size_t>(n_asd, 1, n - 1);
    std::vector<Label> labels(n, kNT);
    std::fill_n(labels.begin(), std::min(n_asd, n), kASD);
    rng.shuffle(std::span<Label>(labels));

    for (std::size_t i = 0; i < n; ++i, ++row) {
      table.subject_ids.push_back(fmt::format("{}_{:04}", out.site_ids[s], i + 1));
      table.site_ids.push_back(out.site_ids[s]);
      table.labels.push_back(labels[i]);
      for (std::size_t j = 0; j < config.d; ++j) {
        double shift = out.truth_mask.test(j) ? (labels[i] == kASD ? half_effect : -half_effect) : 0.0;
        table.features(row, j) = shift + noise * rng.normal();
      }
    }

    Rng pheno_rng(derive_seed(config.seed, {kTagPhenotype, s}));
    const PhenotypeModel& pm = config.phenotypes;
    std::vector<PhenotypeRecord> records;
    for (std::size_t i = 0; i < n; ++i) {
      PhenotypeRecord rec;
      rec.subject_id = table.subject_ids[row - n + i];
      rec.age_at_scan = truncated_normal(pheno_rng, pm.age_mean, pm.age_sd, pm.age_min);
      rec.sex = pheno_rng.bernoulli(pm.female_fraction) ? Sex::kFemale : Sex::kMale;
      rec.eye_status = pheno_rng.bernoulli(pm.eyes_open_fraction) ? EyeStatus::kOpen : EyeStatus::kClosed;
      records.push_back(std::move(rec));
    }
    out.phenotypes.push_back(std::move(records));

    Rng scan_rng(derive_seed(config.seed, {kTagScan, s}));
    ScanParamsRecord scan;
    scan.site_id = out.site_ids[s];
    scan.vendor = kVendors[scan_rng.below(kVendors.size())];
    scan.tr_sec = 1.2 + 1.4 * scan_rng.uniform();
    scan.te_sec = 1.7e-3 + 2.9e-3 * scan_rng.uniform();
    scan.ti_sec = 0.6 + 0.5 * scan_rng.uniform();
    scan.fa_deg = static_cast<double>(7 + scan_rng.below(9));
    out.scan_params.push_back(std::move(scan));
  }
  return out;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double bayes_accuracy(double effect_size, double noise_scale) {
  return normal_cdf(effect_size / (2.0 * noise_scale));
}

SizeQualityStudy generate_size_quality_study(const SizeQualityConfig& config) {
  if (config.n_sites < 1) throw std::invalid_argument("size-quality study: n_sites must be >= 1");
  if (config.size_min < 1 || config.size_max < config.size_min)
    throw std::invalid_argument("size-quality study: need 1 <= size_min <= size_max");
  const double span = static_cast<double>(config.size_max - config.size_min);
  if (span == 0.0 && config.quality_slope != 0.0)
    throw std::invalid_argument("size-quality study: degenerate size range with nonzero quality_slope");
  if (!(config.noise_base > 0.0)) throw std::invalid_argument("size-quality study: noise_base must be > 0");

  SizeQualityStudy study;
  for (std::size_t s = 0; s < config.n_sites; ++s) {
    double t = config.n_sites == 1 ? 0.0 : static_cast<double>(s) / static_cast<double>(config.n_sites - 1);
    auto size = static_cast<std::size_t>(std::llround(static_cast<double>(config.size_min) + t * span));
    double normalized = span == 0.0 ? 0.0 : static_cast<double>(size - config.size_min) / span;
    double noise = config.noise_base * (1.0 + config.quality_slope * normalized);
    if (!(noise > 0.0))
      throw std::invalid_argument("size-quality study: quality_slope makes a noise scale non-positive");
    study.sizes.push_back(size);
    study.noise_scales.push_back(noise);
  }

  SynthConfig synth;
  synth.sizes = study.sizes;
  synth.noise_scale = study.noise_scales;
  synth.d = config.d;
  synth.k_informative = config.k_informative;
  synth.effect_size = config.effect_size;
  synth.label_balance = config.label_balance;
  synth.seed = derive_seed(config.seed, {kTagStudy});
  synth.phenotypes = config.phenotypes;
  study.dataset = generate(synth);
  return study;
}

void write_dataset(const SynthDataset& dataset, const std::filesystem::path& dir,
                   std::string_view preamble) {
  std::filesystem::create_directories(dir);
  std::string pre(preamble);
  write_text_file_atomic(dir / "features.csv", pre + format_feature_table(dataset.table));
  write_text_file_atomic(dir / "phenotypes.csv", pre + format_phenotypes(dataset.all_phenotypes()));
  write_text_file_atomic(dir / "scan_params.csv", pre + format_scan_params(dataset.scan_params));
  write_text_file_atomic(dir / "truth_mask.txt", dataset.truth_mask.to_string() + "\n");
}

}  // namespace asdmeta
