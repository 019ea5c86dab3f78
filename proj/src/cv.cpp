#include "asdmeta/cv.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include <fmt/format.h>

#include "asdmeta/rng.hpp"

namespace asdmeta {

CVResult CVResult::from_folds(std::vector<double> folds) {
  CVResult out;
  out.fold_accuracies = std::move(folds);
  const double k = static_cast<double>(out.fold_accuracies.size());
  if (out.fold_accuracies.empty()) return out;
  out.mean = std::accumulate(out.fold_accuracies.begin(), out.fold_accuracies.end(), 0.0) / k;
  double ss = 0.0;
  for (double a : out.fold_accuracies) ss += (a - out.mean) * (a - out.mean);
  out.std = std::sqrt(ss / k);
  return out;
}

std::vector<std::vector<std::size_t>> kfold_indices(std::size_t n, std::size_t k,
                                                    std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("kfold_indices: k must be >= 2");
  if (k > n) throw std::invalid_argument(fmt::format("kfold_indices: k={} exceeds n={}", k, n));
  Rng rng(derive_seed(seed, {kTagFolds}));
  auto order = rng.permutation(n);
  std::vector<std::vector<std::size_t>> folds(k);
  std::size_t base = n / k, extra = n % k, pos = 0;
  for (std::size_t f = 0; f < k; ++f) {
    std::size_t size = base + (f < extra ? 1 : 0);
    folds[f].assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                    order.begin() + static_cast<std::ptrdiff_t>(pos + size));
    pos += size;
  }
  return folds;
}

std::vector<std::vector<std::size_t>> stratified_kfold_indices(std::span<const Label> labels,
                                                               std::size_t k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("stratified_kfold_indices: k must be >= 2");
  if (k > labels.size())
    throw std::invalid_argument(fmt::format("stratified_kfold_indices: k={} exceeds n={}", k, labels.size()));
  Rng rng(derive_seed(seed, {kTagFolds}));
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i] == kASD].push_back(i);
  std::vector<std::vector<std::size_t>> folds(k);
  std::size_t next = 0;
  for (auto& members : by_class) {
    rng.shuffle(std::span<std::size_t>(members));
    for (std::size_t i : members) folds[next++ % k].push_back(i);
  }
  return folds;
}

double accuracy(std::span<const Label> predicted, std::span<const Label> truth) {
  if (predicted.size() != truth.size())
    throw std::invalid_argument("accuracy: length mismatch");
  if (truth.empty()) throw std::invalid_argument("accuracy: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

CVResult cv_accuracy(const Matrix& X, std::span<const Label> y, const ForestConfig& fcfg,
                     const CVOptions& options, std::uint64_t seed) {
  if (y.size() != X.rows()) throw std::invalid_argument("cv_accuracy: label count mismatch");
  auto folds = options.stratified ? stratified_kfold_indices(y, options.k, seed)
                                  : kfold_indices(X.rows(), options.k, seed);
  std::vector<char> held_out(X.rows());
  std::vector<double> accs;
  accs.reserve(folds.size());
  for (std::size_t f = 0; f < folds.size(); ++f) {
    std::fill(held_out.begin(), held_out.end(), 0);
    for (std::size_t i : folds[f]) held_out[i] = 1;
    std::vector<std::size_t> train;
    train.reserve(X.rows() - folds[f].size());
    for (std::size_t i = 0; i < X.rows(); ++i)
      if (!held_out[i]) train.push_back(i);
    std::vector<Label> y_train, y_test;
    for (std::size_t i : train) y_train.push_back(y[i]);
    for (std::size_t i : folds[f]) y_test.push_back(y[i]);

    ForestConfig cfg = fcfg;
    cfg.seed = derive_seed(seed, {kTagForest, f});
    ForestModel model = fit_forest(X.select_rows(train), y_train, cfg);
    accs.push_back(accuracy(predict(model, X.select_rows(folds[f])), y_test));
  }
  return CVResult::from_folds(std::move(accs));
}

CVResult cv_accuracy(const FeatureTable& table, const Mask& mask, const ForestConfig& fcfg,
                     const CVOptions& options, std::uint64_t seed) {
  if (mask.size() != table.cols())
    throw std::invalid_argument("cv_accuracy: mask length does not match feature count");
  if (mask.none()) throw std::invalid_argument("cv_accuracy: mask selects no features");
  auto cols = mask.indices();
  return cv_accuracy(table.features.select_cols(cols), table.labels, fcfg, options, seed);
}

}  // namespace asdmeta
