#pragma once

// Scan-condition vectors and exact t-SNE.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "asdmeta/tabular.hpp"

namespace asdmeta {

struct ScanVector {
  std::string site_id;
  int vendor_code = 0;
  double te_sec = 0.0;
  double fa_deg = 0.0;

  friend bool operator==(const ScanVector&, const ScanVector&) = default;
};

struct EncodedScans {
  std::vector<ScanVector> vectors;
  /// Vendor strings indexed by code.
  std::vector<std::string> vendors;
  std::vector<std::string> warnings;
};

/// Vendor strings are coded 0, 1, ... by first appearance in `records`.
/// Sites missing TE or FA are dropped with a warning; throws
/// std::invalid_argument if nothing is left.
EncodedScans encode_scan_conditions(std::span<const ScanParamsRecord> records);

/// N x 3 matrix of (vendor_code, te_sec, fa_deg).
Matrix scan_matrix(std::span<const ScanVector> vectors);

/// Column z-scores (population std). Constant columns become zeros and are
/// reported in `warnings` if given. Throws if there are fewer than 2 rows.
Matrix standardize(const Matrix& x, std::vector<std::string>* warnings = nullptr);

struct EmbeddingConfig {
  double perplexity = 5.0;
  int iterations = 1000;
  double learning_rate = 100.0;
  double exaggeration = 4.0;
  int exaggeration_iters = 100;
  double initial_momentum = 0.5;
  double final_momentum = 0.8;
  int momentum_switch = 250;
  double min_gain = 0.01;
  double init_std = 1e-4;
  std::uint64_t seed = 0;

  void validate(std::size_t n) const;
};

struct Affinities {
  /// Symmetric joint probabilities, zero diagonal, summing to 1.
  Matrix p;
  /// Shannon entropy (nats) of each conditional distribution.
  std::vector<double> entropies;
  std::vector<double> betas;
};

/// Conditional Gaussians calibrated by bisection on the precision until the
/// entropy is within `tol` of log(perplexity), then symmetrized. Exact
/// duplicate rows are separated by a deterministic 1e-9 jitter first.
Affinities compute_affinities(const Matrix& x, double perplexity, double tol = 1e-5);

/// Student-t(1) joint probabilities of the embedding `y` (N x 2).
Matrix low_dim_affinities(const Matrix& y);

/// KL(P || Q) with both clamped at 1e-12 inside the log.
double kl_divergence(const Matrix& p, const Matrix& y);

/// dKL/dy: 4 Σ_j (p_ij - q_ij)(y_i - y_j) / (1 + |y_i - y_j|^2).
Matrix kl_gradient(const Matrix& p, const Matrix& y);

struct TsneResult {
  Matrix embedding;
  /// KL(P || Q) after each iteration, always against the unexaggerated P.
  std::vector<double> kl_history;
};

TsneResult tsne(const Matrix& x, const EmbeddingConfig& config);

struct EmbeddingRow {
  std::string site_id;
  double x = 0.0;
  double y = 0.0;
  /// Written as NA when absent.
  std::optional<double> accuracy;
};

/// CSV with header SITE_ID,X,Y,ACCURACY.
std::string format_embedding(std::span<const EmbeddingRow> rows);
/// CSV with header ITERATION,KL (1-based iterations).
std::string format_kl_history(std::span<const double> history);

}  // namespace asdmeta
