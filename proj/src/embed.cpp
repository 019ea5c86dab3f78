#include "asdmeta/embed.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

#include <fmt/format.h>

#include "asdmeta/csv.hpp"
#include "asdmeta/rng.hpp"

namespace asdmeta {

namespace {

constexpr double kFloor = 1e-12;
constexpr double kJitter = 1e-9;
constexpr int kMaxBisection = 200;

Matrix squared_distances(const Matrix& x) {
  const std::size_t n = x.rows();
  Matrix d(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t c = 0; c < x.cols(); ++c) {
        double t = x(i, c) - x(j, c);
        s += t * t;
      }
      d(i, j) = d(j, i) = s;
    }
  return d;
}

Matrix jitter_duplicates(const Matrix& x) {
  Matrix out = x;
  std::map<std::vector<double>, int> seen;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto row = x.row(i);
    int& count = seen[std::vector<double>(row.begin(), row.end())];
    for (std::size_t c = 0; c < x.cols(); ++c) out(i, c) += kJitter * count * static_cast<double>(c + 1);
    ++count;
  }
  return out;
}

// Conditional row i at precision beta; returns the entropy.
double conditional_row(const Matrix& d, std::size_t i, double beta, std::vector<double>& p) {
  const std::size_t n = d.rows();
  double dmin = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j)
    if (j != i) dmin = std::min(dmin, d(i, j));
  double sum = 0.0, weighted = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (j == i) {
      p[j] = 0.0;
      continue;
    }
    const double shifted = d(i, j) - dmin;
    p[j] = std::exp(-beta * shifted);
    sum += p[j];
    weighted += shifted * p[j];
  }
  for (double& v : p) v /= sum;
  return std::log(sum) + beta * weighted / sum;
}

}  // namespace

EncodedScans encode_scan_conditions(std::span<const ScanParamsRecord> records) {
  if (records.empty()) throw std::invalid_argument("encode_scan_conditions: no records");
  EncodedScans out;
  std::map<std::string, int> codes;
  for (const auto& r : records) {
    auto [it, inserted] = codes.emplace(r.vendor, static_cast<int>(out.vendors.size()));
    if (inserted) out.vendors.push_back(r.vendor);
    if (!r.te_sec || !r.fa_deg) {
      out.warnings.push_back(fmt::format("site {}: missing {}; excluded from the embedding", r.site_id,
                                         !r.te_sec ? "TE" : "FA"));
      continue;
    }
    out.vectors.push_back({r.site_id, it->second, *r.te_sec, *r.fa_deg});
  }
  if (out.vectors.empty()) throw std::invalid_argument("encode_scan_conditions: every site lacks TE or FA");
  return out;
}

Matrix scan_matrix(std::span<const ScanVector> vectors) {
  Matrix m(vectors.size(), 3);
  for (std::size_t i = 0; i < vectors.size(); ++i) {
    m(i, 0) = vectors[i].vendor_code;
    m(i, 1) = vectors[i].te_sec;
    m(i, 2) = vectors[i].fa_deg;
  }
  return m;
}

Matrix standardize(const Matrix& x, std::vector<std::string>* warnings) {
  const std::size_t n = x.rows();
  if (n < 2) throw std::invalid_argument("standardize: need at least 2 rows");
  Matrix out(n, x.cols());
  for (std::size_t c = 0; c < x.cols(); ++c) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += x(i, c);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (x(i, c) - mean) * (x(i, c) - mean);
    const double sd = std::sqrt(var / static_cast<double>(n));
    if (sd == 0.0) {
      if (warnings) warnings->push_back(fmt::format("column {} is constant; set to zero", c));
      continue;
    }
    for (std::size_t i = 0; i < n; ++i) out(i, c) = (x(i, c) - mean) / sd;
  }
  return out;
}

void EmbeddingConfig::validate(std::size_t n) const {
  if (n < 4) throw std::invalid_argument("tsne: need at least 4 points");
  if (!(perplexity > 0.0)) throw std::invalid_argument("tsne: perplexity must be > 0");
  if (!(3.0 * perplexity < static_cast<double>(n - 1)))
    throw std::invalid_argument(
        fmt::format("tsne: perplexity {} too large for {} points (need perplexity < (N-1)/3)", perplexity, n));
  if (iterations < 1) throw std::invalid_argument("tsne: iterations must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("tsne: learning_rate must be > 0");
  if (!(exaggeration >= 1.0)) throw std::invalid_argument("tsne: exaggeration must be >= 1");
}

Affinities compute_affinities(const Matrix& x, double perplexity, double tol) {
  const std::size_t n = x.rows();
  if (n < 2) throw std::invalid_argument("compute_affinities: need at least 2 points");
  const Matrix d = squared_distances(jitter_duplicates(x));
  const double target = std::log(perplexity);

  Affinities out;
  Matrix cond(n, n);
  out.entropies.resize(n);
  out.betas.resize(n);
  std::vector<double> row(n);
  for (std::size_t i = 0; i < n; ++i) {
    double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
    double h = conditional_row(d, i, beta, row);
    for (int it = 0; it < kMaxBisection && std::fabs(h - target) >= tol; ++it) {
      if (h > target) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : (beta + hi) / 2.0;
      } else {
        hi = beta;
        beta = (beta + lo) / 2.0;
      }
      h = conditional_row(d, i, beta, row);
    }
    out.entropies[i] = h;
    out.betas[i] = beta;
    for (std::size_t j = 0; j < n; ++j) cond(i, j) = row[j];
  }
  out.p = Matrix(n, n);
  const double denom = 2.0 * static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out.p(i, j) = (cond(i, j) + cond(j, i)) / denom;
  return out;
}

Matrix low_dim_affinities(const Matrix& y) {
  const std::size_t n = y.rows();
  Matrix q(n, n);
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double dx = y(i, 0) - y(j, 0), dy = y(i, 1) - y(j, 1);
      double w = 1.0 / (1.0 + dx * dx + dy * dy);
      q(i, j) = q(j, i) = w;
      sum += 2.0 * w;
    }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) q(i, j) /= sum;
  return q;
}

double kl_divergence(const Matrix& p, const Matrix& y) {
  const Matrix q = low_dim_affinities(y);
  double kl = 0.0;
  for (std::size_t i = 0; i < p.rows(); ++i)
    for (std::size_t j = 0; j < p.cols(); ++j)
      if (i != j && p(i, j) > 0.0)
        kl += p(i, j) * std::log(std::max(p(i, j), kFloor) / std::max(q(i, j), kFloor));
  return kl;
}

Matrix kl_gradient(const Matrix& p, const Matrix& y) {
  const std::size_t n = y.rows();
  const Matrix q = low_dim_affinities(y);
  Matrix g(n, 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      double dx = y(i, 0) - y(j, 0), dy = y(i, 1) - y(j, 1);
      double m = 4.0 * (p(i, j) - q(i, j)) / (1.0 + dx * dx + dy * dy);
      g(i, 0) += m * dx;
      g(i, 1) += m * dy;
    }
  return g;
}

TsneResult tsne(const Matrix& x, const EmbeddingConfig& config) {
  const std::size_t n = x.rows();
  config.validate(n);
  const Matrix p = compute_affinities(x, config.perplexity).p;
  Matrix exaggerated = p;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) exaggerated(i, j) *= config.exaggeration;

  Rng rng(derive_seed(config.seed, {kTagEmbedInit}));
  Matrix y(n, 2), update(n, 2), gains(n, 2, 1.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < 2; ++c) y(i, c) = config.init_std * rng.normal();

  TsneResult out;
  for (int it = 0; it < config.iterations; ++it) {
    const Matrix& target = it < config.exaggeration_iters ? exaggerated : p;
    const double momentum = it < config.momentum_switch ? config.initial_momentum : config.final_momentum;
    const Matrix g = kl_gradient(target, y);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < 2; ++c) {
        double& gain = gains(i, c);
        gain = (g(i, c) > 0.0) != (update(i, c) > 0.0) ? gain + 0.2 : gain * 0.8;
        gain = std::max(gain, config.min_gain);
        update(i, c) = momentum * update(i, c) - config.learning_rate * gain * g(i, c);
        y(i, c) += update(i, c);
      }
    for (std::size_t c = 0; c < 2; ++c) {
      double mean = 0.0;
      for (std::size_t i = 0; i < n; ++i) mean += y(i, c);
      mean /= static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) y(i, c) -= mean;
    }
    out.kl_history.push_back(kl_divergence(p, y));
  }
  out.embedding = std::move(y);
  return out;
}

std::string format_embedding(std::span<const EmbeddingRow> rows) {
  std::string out = "SITE_ID,X,Y,ACCURACY\n";
  for (const auto& r : rows)
    out += fmt::format("{},{},{},{}\n", csv::escape(r.site_id), format_double(r.x), format_double(r.y),
                       r.accuracy ? format_double(*r.accuracy) : "NA");
  return out;
}

std::string format_kl_history(std::span<const double> history) {
  std::string out = "ITERATION,KL\n";
  for (std::size_t i = 0; i < history.size(); ++i) out += fmt::format("{},{}\n", i + 1, format_double(history[i]));
  return out;
}

}  // namespace asdmeta
