#include "asdmeta/forest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

#include <fmt/format.h>

#include "asdmeta/parallel.hpp"
#include "asdmeta/rng.hpp"

namespace asdmeta {

namespace {

using Int = std::int64_t;
using Wide = __int128;

// Weighted Gini of a split is  N - (S_l / n_l + S_r / n_r)  with S = a^2 + b^2,
// so maximizing  S_l / n_l + S_r / n_r  minimizes child impurity. Kept as a
// fraction for exact comparison.
struct SplitScore {
  Wide num = 0;
  Wide den = 1;
  double approx = 0.0;

  static SplitScore of(Int l0, Int l1, Int r0, Int r1) {
    Int nl = l0 + l1;
    Int nr = r0 + r1;
    Int sl = l0 * l0 + l1 * l1;
    Int sr = r0 * r0 + r1 * r1;
    return {Wide(sl) * nr + Wide(sr) * nl, Wide(nl) * nr,
            static_cast<double>(sl) / static_cast<double>(nl) +
                static_cast<double>(sr) / static_cast<double>(nr)};
  }
  // Returns >0, 0, <0. The double estimate settles clear cases; anything
  // within rounding distance is decided exactly.
  friend int compare(const SplitScore& a, const SplitScore& b) {
    double tol = 1e-9 * std::max(a.approx, b.approx);
    if (a.approx > b.approx + tol) return 1;
    if (a.approx < b.approx - tol) return -1;
    Wide lhs = a.num * b.den;
    Wide rhs = b.num * a.den;
    return lhs > rhs ? 1 : (lhs < rhs ? -1 : 0);
  }
};

struct BestSplit {
  bool found = false;
  std::size_t feature = 0;
  double threshold = 0.0;
  SplitScore score;
};

double midpoint(double a, double b) {
  double t = a / 2.0 + b / 2.0;
  if (t >= b || !std::isfinite(t)) t = a;
  return t;
}

// Row indices of X sorted by each column, shared by all trees of a forest.
using ColumnOrders = std::vector<std::vector<std::uint32_t>>;

ColumnOrders sort_columns(const Matrix& X) {
  ColumnOrders orders(X.cols(), std::vector<std::uint32_t>(X.rows()));
  for (std::size_t f = 0; f < X.cols(); ++f) {
    auto& order = orders[f];
    for (std::size_t r = 0; r < X.rows(); ++r) order[r] = static_cast<std::uint32_t>(r);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::uint32_t a, std::uint32_t b) { return X(a, f) < X(b, f); });
  }
  return orders;
}

class TreeBuilder {
 public:
  TreeBuilder(const Matrix& X, std::span<const Label> y, std::span<const std::uint32_t> weights,
              const ColumnOrders& orders, const ForestConfig& config, std::uint64_t seed)
      : X_(X), y_(y), w_(weights), orders_(orders), config_(config), rng_(seed),
        max_features_(config.max_features.resolve(X.cols())), stamp_(X.rows(), -1) {
    class_weight_.resize(X.rows());
    for (std::size_t r = 0; r < X.rows(); ++r) {
      if (weights[r] > 0) samples_.push_back(static_cast<std::uint32_t>(r));
      class_weight_[r] = y[r] == kASD ? std::pair<Int, Int>{0, weights[r]}
                                      : std::pair<Int, Int>{weights[r], 0};
    }
    features_.resize(X.cols());
    sorted_.resize(samples_.size());
  }

  DecisionTree build() {
    DecisionTree tree;
    struct Task {
      std::size_t begin, end;
      int depth;
      int parent;
      bool is_left;
    };
    std::vector<Task> stack = {{0, samples_.size(), 0, -1, false}};
    while (!stack.empty()) {
      Task task = stack.back();
      stack.pop_back();
      int index = static_cast<int>(tree.nodes.size());
      tree.nodes.emplace_back();
      if (task.parent >= 0) {
        auto& parent = tree.nodes[static_cast<std::size_t>(task.parent)];
        (task.is_left ? parent.left : parent.right) = index;
      }
      Int c0 = 0, c1 = 0;
      for (std::size_t i = task.begin; i < task.end; ++i) {
        std::uint32_t r = samples_[i];
        (y_[r] == kASD ? c1 : c0) += w_[r];
      }
      tree.nodes.back().count[0] = c0;
      tree.nodes.back().count[1] = c1;

      bool leaf = c0 == 0 || c1 == 0 || c0 + c1 < 2 * Int(config_.min_samples_leaf) ||
                  (config_.max_depth && task.depth >= *config_.max_depth);
      if (leaf) continue;
      BestSplit best = find_split(task.begin, task.end, index);
      if (!best.found) continue;

      auto& node = tree.nodes.back();
      node.feature = static_cast<int>(best.feature);
      node.threshold = best.threshold;
      auto mid = std::partition(samples_.begin() + static_cast<std::ptrdiff_t>(task.begin),
                                samples_.begin() + static_cast<std::ptrdiff_t>(task.end),
                                [&](std::uint32_t r) { return X_(r, best.feature) <= best.threshold; });
      auto split = static_cast<std::size_t>(mid - samples_.begin());
      stack.push_back({split, task.end, task.depth + 1, index, false});
      stack.push_back({task.begin, split, task.depth + 1, index, true});
    }
    return tree;
  }

 private:
  // Fills sorted_ with the node's rows ordered by column f. Large nodes filter
  // the presorted column; small ones sort directly.
  std::size_t gather_sorted(std::size_t begin, std::size_t end, std::size_t f, int node) {
    const std::size_t count = end - begin;
    if (count * 4 >= X_.rows()) {
      std::size_t k = 0;
      for (std::uint32_t r : orders_[f]) {
        sorted_[k] = {X_(r, f), r};
        k += stamp_[r] == node;
        if (k == count) break;
      }
      return count;
    }
    for (std::size_t i = begin; i < end; ++i) {
      std::uint32_t r = samples_[i];
      sorted_[i - begin] = {X_(r, f), r};
    }
    std::sort(sorted_.begin(), sorted_.begin() + static_cast<std::ptrdiff_t>(count),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    return count;
  }

  BestSplit find_split(std::size_t begin, std::size_t end, int node) {
    for (std::size_t i = begin; i < end; ++i) stamp_[samples_[i]] = node;
    for (std::size_t f = 0; f < features_.size(); ++f) features_[f] = f;
    BestSplit best;
    std::size_t scored = 0;
    std::size_t remaining = features_.size();
    const Int min_leaf = config_.min_samples_leaf;
    while (scored < max_features_ && remaining > 0) {
      // Draw the next feature without replacement.
      std::size_t pick = static_cast<std::size_t>(rng_.below(remaining));
      std::size_t f = features_[pick];
      std::swap(features_[pick], features_[remaining - 1]);
      --remaining;

      const std::size_t count = gather_sorted(begin, end, f, node);
      if (sorted_[0].first == sorted_[count - 1].first) continue;

      Int t0 = 0, t1 = 0;
      for (std::size_t i = 0; i < count; ++i) {
        t0 += class_weight_[sorted_[i].second].first;
        t1 += class_weight_[sorted_[i].second].second;
      }
      Int l0 = 0, l1 = 0;
      bool valid = false;
      for (std::size_t i = 0; i + 1 < count; ++i) {
        const auto& cw = class_weight_[sorted_[i].second];
        l0 += cw.first;
        l1 += cw.second;
        double v = sorted_[i].first;
        double next = sorted_[i + 1].first;
        if (v == next) continue;
        if (l0 + l1 < min_leaf || (t0 - l0) + (t1 - l1) < min_leaf) continue;
        valid = true;
        SplitScore score = SplitScore::of(l0, l1, t0 - l0, t1 - l1);
        // Within one feature thresholds ascend, so an equal score from the
        // same feature never wins.
        int cmp = best.found ? compare(score, best.score) : 1;
        if (cmp > 0 || (cmp == 0 && f < best.feature))
          best = {true, f, midpoint(v, next), score};
      }
      if (valid) ++scored;
    }
    return best;
  }

  const Matrix& X_;
  std::span<const Label> y_;
  std::span<const std::uint32_t> w_;
  const ColumnOrders& orders_;
  const ForestConfig& config_;
  Rng rng_;
  std::size_t max_features_;
  std::vector<int> stamp_;
  std::vector<std::pair<Int, Int>> class_weight_;  // (NT, ASD) weight per row
  std::vector<std::uint32_t> samples_;
  std::vector<std::size_t> features_;
  std::vector<std::pair<double, std::uint32_t>> sorted_;
};

void check_inputs(const Matrix& X, std::span<const Label> y) {
  if (X.rows() == 0 || X.cols() == 0) throw std::invalid_argument("fit: empty input");
  if (y.size() != X.rows()) throw std::invalid_argument("fit: label count does not match rows");
  for (double v : X.data())
    if (!std::isfinite(v)) throw std::invalid_argument("fit: non-finite feature value");
  for (Label l : y)
    if (l != kNT && l != kASD) throw std::invalid_argument("fit: labels must be 0 or 1");
}

}  // namespace

std::size_t MaxFeatures::resolve(std::size_t d) const {
  std::size_t k = d;
  switch (rule) {
    case Rule::kSqrt:
      k = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(d))));
      break;
    case Rule::kAll:
      k = d;
      break;
    case Rule::kCount:
      k = count;
      break;
  }
  return std::clamp<std::size_t>(k, 1, std::max<std::size_t>(d, 1));
}

std::string MaxFeatures::to_string() const {
  switch (rule) {
    case Rule::kSqrt:
      return "sqrt";
    case Rule::kAll:
      return "all";
    case Rule::kCount:
      break;
  }
  return std::to_string(count);
}

MaxFeatures MaxFeatures::parse(const std::string& text) {
  if (text == "sqrt") return sqrt();
  if (text == "all") return all();
  try {
    std::size_t pos = 0;
    long long n = std::stoll(text, &pos);
    if (pos == text.size() && n >= 1) return fixed(static_cast<std::size_t>(n));
  } catch (const std::exception&) {
  }
  throw std::invalid_argument(fmt::format("max_features must be sqrt, all or a positive integer, got '{}'", text));
}

void ForestConfig::validate() const {
  if (n_trees < 1) throw std::invalid_argument("n_trees must be >= 1");
  if (min_samples_leaf < 1) throw std::invalid_argument("min_samples_leaf must be >= 1");
  if (max_depth && *max_depth < 0) throw std::invalid_argument("max_depth must be >= 0");
  if (max_features.rule == MaxFeatures::Rule::kCount && max_features.count < 1)
    throw std::invalid_argument("max_features must be >= 1");
}

Label DecisionTree::predict(std::span<const double> x) const {
  std::size_t i = 0;
  while (!nodes[i].is_leaf()) {
    const TreeNode& node = nodes[i];
    i = static_cast<std::size_t>(x[static_cast<std::size_t>(node.feature)] <= node.threshold
                                     ? node.left
                                     : node.right);
  }
  return nodes[i].majority();
}

std::size_t DecisionTree::depth() const {
  std::vector<std::size_t> level(nodes.size(), 0);
  std::size_t deepest = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    deepest = std::max(deepest, level[i]);
    if (!nodes[i].is_leaf()) {
      level[static_cast<std::size_t>(nodes[i].left)] = level[i] + 1;
      level[static_cast<std::size_t>(nodes[i].right)] = level[i] + 1;
    }
  }
  return deepest;
}

DecisionTree fit_tree(const Matrix& X, std::span<const Label> y,
                      std::span<const std::uint32_t> weights, const ForestConfig& config,
                      std::uint64_t tree_seed) {
  check_inputs(X, y);
  if (weights.size() != X.rows()) throw std::invalid_argument("fit_tree: weight count mismatch");
  ColumnOrders orders = sort_columns(X);
  return TreeBuilder(X, y, weights, orders, config, tree_seed).build();
}

ForestModel fit_forest(const Matrix& X, std::span<const Label> y, const ForestConfig& config) {
  config.validate();
  check_inputs(X, y);
  ForestModel model;
  model.n_features = X.cols();
  model.trees.resize(static_cast<std::size_t>(config.n_trees));
  const std::size_t n = X.rows();
  const ColumnOrders orders = sort_columns(X);
  parallel_for(model.trees.size(), config.threads, [&](std::size_t t) {
    std::uint64_t seed = derive_seed(config.seed, {kTagTree, t});
    std::vector<std::uint32_t> weights(n, config.bootstrap ? 0u : 1u);
    Rng rng(seed);
    if (config.bootstrap)
      for (std::size_t i = 0; i < n; ++i) ++weights[rng.below(n)];
    // The split search continues on an independent stream of the same tree.
    model.trees[t] = TreeBuilder(X, y, weights, orders, config, splitmix64(seed)).build();
  });
  return model;
}

std::vector<int> vote_counts(const ForestModel& model, const Matrix& X) {
  if (X.cols() != model.n_features)
    throw std::invalid_argument(fmt::format("predict: expected {} columns, got {}",
                                            model.n_features, X.cols()));
  std::vector<int> votes(X.rows(), 0);
  for (std::size_t r = 0; r < X.rows(); ++r) {
    auto x = X.row(r);
    for (const auto& tree : model.trees) votes[r] += tree.predict(x) == kASD;
  }
  return votes;
}

std::vector<Label> predict(const ForestModel& model, const Matrix& X) {
  auto votes = vote_counts(model, X);
  const int n_trees = static_cast<int>(model.trees.size());
  std::vector<Label> out(votes.size());
  for (std::size_t r = 0; r < votes.size(); ++r) out[r] = 2 * votes[r] > n_trees ? kASD : kNT;
  return out;
}

std::string dump_forest(const ForestModel& model) {
  std::string out = fmt::format("forest trees={} features={}\n", model.trees.size(), model.n_features);
  for (std::size_t t = 0; t < model.trees.size(); ++t) {
    const auto& nodes = model.trees[t].nodes;
    out += fmt::format("tree {} nodes={}\n", t, nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const auto& n = nodes[i];
      if (n.is_leaf())
        out += fmt::format("  {} leaf label={} counts={},{}\n", i, label_name(n.majority()),
                           n.count[0], n.count[1]);
      else
        out += fmt::format("  {} split feature={} threshold={} left={} right={} counts={},{}\n", i,
                           n.feature, format_double(n.threshold), n.left, n.right, n.count[0],
                           n.count[1]);
    }
  }
  return out;
}

}  // namespace asdmeta
