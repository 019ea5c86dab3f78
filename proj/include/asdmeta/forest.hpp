#pragma once

// Random-forest binary classifier (CART trees, Gini impurity, bagging).
//
// Split search: for each candidate feature the node's rows are sorted by value
// and every midpoint between consecutive distinct values is a threshold; rows
// with x <= threshold go left. Candidates are compared exactly in integer
// arithmetic on (bootstrap-weighted) class counts, so ties are real ties and
// resolve to the lowest feature index, then the lowest threshold.
//
// Feature subsampling: features are visited in a per-node random order until
// `max_features` features admitting a valid split have been scored (features
// that are constant in the node, or whose every split violates
// min_samples_leaf, do not count). A node with no valid split becomes a leaf.
//
// Predictions depend on (X, y, seed) with rows in the given order: bootstrap
// draws index rows by position, so permuting the training rows changes the
// resamples.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "asdmeta/tabular.hpp"

namespace asdmeta {

/// How many features each split considers.
struct MaxFeatures {
  enum class Rule : std::uint8_t { kSqrt, kAll, kCount };
  Rule rule = Rule::kSqrt;
  std::size_t count = 0;

  static MaxFeatures sqrt() { return {Rule::kSqrt, 0}; }
  static MaxFeatures all() { return {Rule::kAll, 0}; }
  static MaxFeatures fixed(std::size_t n) { return {Rule::kCount, n}; }

  /// Number of features for a `d`-column input (ceil(sqrt(d)) for kSqrt),
  /// clamped to [1, d].
  std::size_t resolve(std::size_t d) const;
  std::string to_string() const;
  static MaxFeatures parse(const std::string& text);

  friend bool operator==(const MaxFeatures&, const MaxFeatures&) = default;
};

struct ForestConfig {
  int n_trees = 100;
  MaxFeatures max_features = MaxFeatures::sqrt();
  int min_samples_leaf = 1;
  std::optional<int> max_depth;  // unlimited by default
  bool bootstrap = true;
  std::uint64_t seed = 0;
  int threads = 1;

  void validate() const;
};

struct TreeNode {
  int feature = -1;  // -1 for a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  std::int64_t count[2] = {0, 0};  // (NT, ASD) training rows reaching the node

  bool is_leaf() const noexcept { return feature < 0; }
  Label majority() const noexcept { return count[1] > count[0] ? kASD : kNT; }
};

/// Nodes in depth-first pre-order; node 0 is the root.
struct DecisionTree {
  std::vector<TreeNode> nodes;

  Label predict(std::span<const double> x) const;
  std::size_t depth() const;
};

struct ForestModel {
  std::vector<DecisionTree> trees;
  std::size_t n_features = 0;
};

/// Grows one CART tree on the rows of X weighted by `weights` (bootstrap
/// multiplicities; rows with weight 0 are ignored).
DecisionTree fit_tree(const Matrix& X, std::span<const Label> y,
                      std::span<const std::uint32_t> weights, const ForestConfig& config,
                      std::uint64_t tree_seed);

/// Fits config.n_trees trees. Tree t draws its bootstrap and feature
/// subsets from derive_seed(config.seed, {kTagTree, t}), so fits are
/// identical for any config.threads. Throws std::invalid_argument on empty
/// input, length mismatch or non-finite features. A single-class y yields
/// single-leaf trees.
ForestModel fit_forest(const Matrix& X, std::span<const Label> y, const ForestConfig& config);

/// Majority vote over trees; an exact tie goes to NT.
std::vector<Label> predict(const ForestModel& model, const Matrix& X);
/// ASD vote count per row.
std::vector<int> vote_counts(const ForestModel& model, const Matrix& X);

/// Structured text dump: one line per node with index, split, children and counts.
std::string dump_forest(const ForestModel& model);

}  // namespace asdmeta
