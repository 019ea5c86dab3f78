#include "asdmeta/meta.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <fmt/format.h>

#include "asdmeta/csv.hpp"
#include "asdmeta/parallel.hpp"
#include "asdmeta/rng.hpp"

namespace asdmeta {

namespace {

constexpr double kBetaEps = 1e-12;
constexpr int kBetaMaxIter = 300;

// Continued fraction for I_x(a, b), modified Lentz.
double beta_continued_fraction(double a, double b, double x) {
  constexpr double tiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kBetaMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < kBetaEps) break;
  }
  return h;
}

double cell_double(const csv::Row& row, std::size_t col, const char* name) {
  auto v = csv::parse_double(row.cells[col]);
  if (!v) throw ValidationError(fmt::format("expected a number, got '{}'", row.cells[col]), row.line, name);
  return *v;
}

}  // namespace

double pearson_r(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("pearson_r: length mismatch");
  if (x.size() < 3) throw std::invalid_argument("pearson_r: need at least 3 pairs");
  const auto n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw std::invalid_argument("pearson_r: correlation undefined for constant input");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0)) throw std::invalid_argument("incomplete_beta: a and b must be > 0");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, double df) {
  if (!(df > 0.0)) throw std::invalid_argument("student_t_cdf: df must be > 0");
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  const double tail = 0.5 * incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
  return t > 0 ? 1.0 - tail : tail;
}

double pearson_p(double r, std::size_t n) {
  if (n < 3) throw std::invalid_argument("pearson_p: n must be >= 3");
  if (!(std::fabs(r) <= 1.0)) throw std::invalid_argument("pearson_p: |r| must be <= 1");
  const double df = static_cast<double>(n - 2);
  // Two-sided tail 2(1 - F(|t|)) = I_{df/(df+t^2)}(df/2, 1/2), and
  // df/(df+t^2) = 1 - r^2.
  const double x = (1.0 - r) * (1.0 + r);
  return std::clamp(incomplete_beta(df / 2.0, 0.5, x), 0.0, 1.0);
}

SiteStats phenotype_stats(std::span<const PhenotypeRecord> records, double accuracy) {
  if (records.empty()) throw std::invalid_argument("phenotype_stats: no records");
  SiteStats s;
  s.n = records.size();
  s.accuracy = accuracy;
  const auto n = static_cast<double>(records.size());
  double sum = 0.0;
  std::size_t females = 0, males = 0;
  std::vector<int> eyes;
  for (const auto& r : records) {
    sum += r.age_at_scan;
    (r.sex == Sex::kFemale ? females : males)++;
    eyes.push_back(static_cast<int>(r.eye_status));
  }
  s.mean_age = sum / n;
  if (records.size() > 1) {
    double ss = 0.0;
    for (const auto& r : records) ss += (r.age_at_scan - s.mean_age) * (r.age_at_scan - s.mean_age);
    s.std_age = std::sqrt(ss / (n - 1.0));
  }
  if (males > 0) s.fm_ratio = static_cast<double>(females) / static_cast<double>(males);
  std::sort(eyes.begin(), eyes.end());
  const std::size_t mid = eyes.size() / 2;
  s.eye_median = eyes.size() % 2 ? eyes[mid] : (eyes[mid - 1] + eyes[mid]) / 2.0;
  return s;
}

std::string metric_name(Metric m) {
  switch (m) {
    case Metric::kDataSize: return "DATA_SIZE";
    case Metric::kMeanAge: return "MEAN_AGE";
    case Metric::kStdAge: return "STD_AGE";
    case Metric::kFmRatio: return "FM_RATIO";
    case Metric::kEyeMedian: return "EYE_MEDIAN";
  }
  return "?";
}

std::optional<double> metric_value(const SiteStats& s, Metric m) {
  switch (m) {
    case Metric::kDataSize: return static_cast<double>(s.n);
    case Metric::kMeanAge: return s.mean_age;
    case Metric::kStdAge: return s.std_age;
    case Metric::kFmRatio: return s.fm_ratio;
    case Metric::kEyeMedian: return s.eye_median;
  }
  return std::nullopt;
}

void BootstrapConfig::validate() const {
  if (replicates < 1) throw std::invalid_argument("bootstrap: replicates must be >= 1");
  if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("bootstrap: fraction must be in (0, 1]");
}

std::map<std::string, PhenotypeRecord> index_phenotypes(std::span<const PhenotypeRecord> records) {
  std::map<std::string, PhenotypeRecord> out;
  for (const auto& r : records) out.emplace(r.subject_id, r);
  return out;
}

namespace {

std::vector<PhenotypeRecord> asd_records(const FeatureTable& table, std::span<const std::size_t> rows,
                                         const std::map<std::string, PhenotypeRecord>& phenotypes) {
  std::vector<PhenotypeRecord> out;
  for (std::size_t i : rows) {
    if (table.labels[i] != kASD) continue;
    auto it = phenotypes.find(table.subject_ids[i]);
    if (it == phenotypes.end())
      throw std::invalid_argument(fmt::format("no phenotype record for subject {}", table.subject_ids[i]));
    out.push_back(it->second);
  }
  return out;
}

}  // namespace

SiteStats site_stats(const std::string& site_id, const FeatureTable& site_table,
                     const std::map<std::string, PhenotypeRecord>& phenotypes, double accuracy) {
  std::vector<std::size_t> rows(site_table.rows());
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = i;
  auto asd = asd_records(site_table, rows, phenotypes);
  if (asd.empty()) throw std::invalid_argument(fmt::format("site {} has no ASD subjects", site_id));
  SiteStats s = phenotype_stats(asd, accuracy);
  s.site_id = site_id;
  s.n = site_table.rows();
  return s;
}

BootstrapResult bootstrap_site(const std::string& site_id, const FeatureTable& site_table,
                               const std::map<std::string, PhenotypeRecord>& phenotypes,
                               const Mask& mask, const BootstrapConfig& config,
                               const ForestConfig& fcfg, const CVOptions& cv, std::uint64_t seed) {
  config.validate();
  const std::size_t n = site_table.rows();
  const auto m = static_cast<std::size_t>(std::ceil(config.fraction * static_cast<double>(n) - 1e-9));
  if (m < cv.k)
    throw std::invalid_argument(fmt::format("bootstrap: site {} subsample of {} subjects is smaller than k={}",
                                            site_id, m, cv.k));
  const FeatureTable masked = apply_mask(site_table, mask);
  const Mask all = Mask::all(masked.cols());
  ForestConfig inner = fcfg;
  if (config.threads > 1) inner.threads = 1;

  std::vector<std::optional<SiteStats>> stats(config.replicates);
  parallel_for(config.replicates, config.threads, [&](std::size_t b) {
    const std::uint64_t rep_seed = derive_seed(seed, {kTagReplicate, b + 1});
    Rng rng(rep_seed);
    auto perm = rng.permutation(n);
    std::vector<std::size_t> rows(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(m));
    std::sort(rows.begin(), rows.end());
    auto asd = asd_records(site_table, rows, phenotypes);
    if (asd.empty()) return;
    FeatureTable sub = masked.select_rows(rows);
    CVResult acc = cv_accuracy(sub, all, inner, cv, rep_seed);
    SiteStats s = phenotype_stats(asd, acc.mean);
    s.site_id = site_id;
    s.n = m;
    stats[b] = std::move(s);
  });

  BootstrapResult out;
  for (std::size_t b = 0; b < stats.size(); ++b) {
    if (stats[b])
      out.replicates.push_back({static_cast<int>(b + 1), std::move(*stats[b])});
    else
      out.warnings.push_back(fmt::format("site {}: replicate {} has no ASD subjects; skipped", site_id, b + 1));
  }
  return out;
}

std::vector<PairRow> make_pairs(std::span<const BootstrapReplicate> samples, Metric metric,
                                std::size_t* skipped) {
  std::vector<PairRow> out;
  std::size_t missing = 0;
  for (const auto& s : samples) {
    auto v = metric_value(s.stats, metric);
    if (!v) {
      ++missing;
      continue;
    }
    out.push_back({metric_name(metric), s.stats.site_id, s.replicate, *v, s.stats.accuracy});
  }
  if (skipped) *skipped = missing;
  return out;
}

CorrelationResult correlate(std::span<const PairRow> pairs) {
  if (pairs.size() < 3) throw std::invalid_argument("correlate: need at least 3 valid pairs");
  std::vector<double> x, y;
  for (const auto& p : pairs) {
    x.push_back(p.metric_value);
    y.push_back(p.accuracy);
  }
  CorrelationResult out;
  out.n = pairs.size();
  out.r = pearson_r(x, y);
  out.p_value = pearson_p(out.r, out.n);
  return out;
}

std::string format_pairs(std::span<const PairRow> pairs) {
  std::string out = "METRIC_NAME,SITE_ID,REPLICATE,METRIC_VALUE,ACCURACY\n";
  for (const auto& p : pairs)
    out += fmt::format("{},{},{},{},{}\n", p.metric_name, csv::escape(p.site_id), p.replicate,
                       format_double(p.metric_value), format_double(p.accuracy));
  return out;
}

std::vector<PairRow> parse_pairs(std::string_view text) {
  auto doc = csv::parse(text);
  auto c_metric = doc.require("METRIC_NAME"), c_site = doc.require("SITE_ID"),
       c_rep = doc.require("REPLICATE"), c_value = doc.require("METRIC_VALUE"),
       c_acc = doc.require("ACCURACY");
  std::vector<PairRow> out;
  for (const auto& row : doc.rows) {
    auto rep = csv::parse_int(row.cells[c_rep]);
    if (!rep) throw ValidationError(fmt::format("expected an integer, got '{}'", row.cells[c_rep]), row.line, "REPLICATE");
    out.push_back({row.cells[c_metric], row.cells[c_site], static_cast<int>(*rep),
                   cell_double(row, c_value, "METRIC_VALUE"), cell_double(row, c_acc, "ACCURACY")});
  }
  return out;
}

}  // namespace asdmeta
