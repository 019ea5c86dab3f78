#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "asdmeta/forest.hpp"
#include "asdmeta/tabular.hpp"

namespace asdmeta {

/// Per-fold accuracies with their mean and population (divisor k) std.
struct CVResult {
  std::vector<double> fold_accuracies;
  double mean = 0.0;
  double std = 0.0;

  static CVResult from_folds(std::vector<double> folds);
  friend bool operator==(const CVResult&, const CVResult&) = default;
};

/// Shuffles [0, n) with the stream for `seed` and deals it into k folds; the
/// first n % k folds get one extra index. Requires 2 <= k <= n.
std::vector<std::vector<std::size_t>> kfold_indices(std::size_t n, std::size_t k,
                                                    std::uint64_t seed);

/// Stratified variant: each class is shuffled and dealt round-robin so class
/// proportions per fold differ by at most one row.
std::vector<std::vector<std::size_t>> stratified_kfold_indices(std::span<const Label> labels,
                                                               std::size_t k, std::uint64_t seed);

/// Fraction of equal entries. Throws on empty input or length mismatch.
double accuracy(std::span<const Label> predicted, std::span<const Label> truth);

struct CVOptions {
  std::size_t k = 3;
  bool stratified = false;
};

/// k-fold CV of a forest on X. Fold assignment uses
/// derive_seed(seed, {kTagFolds}); the forest for fold f uses
/// derive_seed(seed, {kTagForest, f}) (fcfg.seed is ignored).
CVResult cv_accuracy(const Matrix& X, std::span<const Label> y, const ForestConfig& fcfg,
                     const CVOptions& options, std::uint64_t seed);

/// cv_accuracy on the columns of `table` selected by `mask`.
CVResult cv_accuracy(const FeatureTable& table, const Mask& mask, const ForestConfig& fcfg,
                     const CVOptions& options, std::uint64_t seed);

}  // namespace asdmeta
