#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "eqm/errors.hpp"
#include "eqm/parallel.hpp"
#include "eqm/rng.hpp"

namespace eqm {

using Matrix = std::vector<std::vector<double>>;

struct ForestParams {
  std::size_t n_trees = 300;
  std::size_t max_depth = 0;        // 0 = unlimited
  std::size_t min_samples_leaf = 2;
  std::size_t mtry = 0;             // 0 = ceil(n_features / 3), resolved at fit
  std::uint64_t seed = 0;

  bool operator==(const ForestParams&) const = default;
};

// feature < 0 marks a leaf carrying `value`; internal nodes route x[feature]
// <= threshold to `left`, otherwise `right`.
struct TreeNode {
  std::int32_t feature = -1;
  double threshold = 0.0;
  std::int32_t left = -1;
  std::int32_t right = -1;
  double value = 0.0;

  bool operator==(const TreeNode&) const = default;
};

struct Tree {
  std::vector<TreeNode> nodes;

  bool operator==(const Tree&) const = default;
};

struct Forest {
  ForestParams params;                           // mtry resolved
  std::vector<std::string> feature_names;
  std::vector<Tree> trees;
  std::vector<std::vector<std::uint8_t>> in_bag; // per tree, per training row
  std::vector<double> split_gain;                // unnormalized, per feature

  std::size_t n_features() const { return feature_names.size(); }

  bool operator==(const Forest&) const = default;
};

namespace detail {

struct SplitChoice {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
  std::size_t n_left = 0;
};

class TreeBuilder {
 public:
  TreeBuilder(const Matrix& x, const std::vector<double>& y, const ForestParams& params,
              std::size_t n_features)
      : x_(x), y_(y), params_(params), n_features_(n_features) {
    feat_order_.resize(n_features);
    for (std::size_t f = 0; f < n_features; ++f) feat_order_[f] = static_cast<int>(f);
  }

  Tree build(std::vector<std::size_t> bag, Rng& rng, std::vector<double>& gain_out) {
    Tree tree;
    idx_ = std::move(bag);
    struct Job {
      std::int32_t node;
      std::size_t begin;
      std::size_t end;
      std::size_t depth;
    };
    std::vector<Job> stack;
    tree.nodes.emplace_back();
    stack.push_back({0, 0, idx_.size(), 0});
    while (!stack.empty()) {
      const Job job = stack.back();
      stack.pop_back();
      const std::size_t n = job.end - job.begin;
      double y_min = y_[idx_[job.begin]];
      double y_max = y_min;
      double y_sum = 0.0;
      for (std::size_t i = job.begin; i < job.end; ++i) {
        const double v = y_[idx_[i]];
        y_min = std::min(y_min, v);
        y_max = std::max(y_max, v);
        y_sum += v;
      }
      TreeNode& node = tree.nodes[static_cast<std::size_t>(job.node)];
      if (y_min == y_max) {
        node.value = y_min;  // exact for constant targets
        continue;
      }
      const bool depth_stop = params_.max_depth > 0 && job.depth >= params_.max_depth;
      if (depth_stop || n < 2 * params_.min_samples_leaf) {
        node.value = y_sum / static_cast<double>(n);
        continue;
      }
      const SplitChoice split = best_split(job.begin, job.end, y_sum, rng);
      if (split.feature < 0) {
        node.value = y_sum / static_cast<double>(n);
        continue;
      }
      gain_out[static_cast<std::size_t>(split.feature)] += split.gain;
      const auto mid = std::partition(idx_.begin() + static_cast<std::ptrdiff_t>(job.begin),
                                      idx_.begin() + static_cast<std::ptrdiff_t>(job.end),
                                      [&](std::size_t row) {
                                        return x_[row][static_cast<std::size_t>(split.feature)] <=
                                               split.threshold;
                                      });
      const std::size_t cut = static_cast<std::size_t>(mid - idx_.begin());
      node.feature = split.feature;
      node.threshold = split.threshold;
      node.left = static_cast<std::int32_t>(tree.nodes.size());
      node.right = node.left + 1;
      const std::int32_t left = node.left;
      const std::int32_t right = node.right;
      tree.nodes.emplace_back();
      tree.nodes.emplace_back();
      stack.push_back({right, cut, job.end, job.depth + 1});
      stack.push_back({left, job.begin, cut, job.depth + 1});
    }
    return tree;
  }

 private:
  // Best variance-reduction split over mtry sampled features; candidates are
  // scanned in ascending feature index and threshold order with strictly
  // better gains required, which freezes the tie-break.
  SplitChoice best_split(std::size_t begin, std::size_t end, double y_sum, Rng& rng) {
    const std::size_t n = end - begin;
    for (std::size_t j = 0; j < params_.mtry; ++j) {
      const std::size_t pick = j + static_cast<std::size_t>(rng.below(n_features_ - j));
      std::swap(feat_order_[j], feat_order_[pick]);
    }
    std::sort(feat_order_.begin(), feat_order_.begin() + static_cast<std::ptrdiff_t>(params_.mtry));

    SplitChoice best;
    const double total_mean_term = y_sum * y_sum / static_cast<double>(n);
    for (std::size_t j = 0; j < params_.mtry; ++j) {
      const std::size_t f = static_cast<std::size_t>(feat_order_[j]);
      pairs_.clear();
      pairs_.reserve(n);
      for (std::size_t i = begin; i < end; ++i) {
        pairs_.emplace_back(x_[idx_[i]][f], y_[idx_[i]]);
      }
      std::sort(pairs_.begin(), pairs_.end());
      double cum = 0.0;
      for (std::size_t k = 1; k < n; ++k) {
        cum += pairs_[k - 1].second;
        if (pairs_[k].first == pairs_[k - 1].first) continue;
        if (k < params_.min_samples_leaf || n - k < params_.min_samples_leaf) continue;
        const double rest = y_sum - cum;
        const double gain = cum * cum / static_cast<double>(k) +
                            rest * rest / static_cast<double>(n - k) - total_mean_term;
        if (gain > best.gain && gain > 0.0) {
          const double a = pairs_[k - 1].first;
          const double b = pairs_[k].first;
          double t = a + (b - a) / 2.0;
          if (t >= b) t = a;  // adjacent doubles: keep the cut separating
          best = {static_cast<int>(f), t, gain, k};
        }
      }
    }
    return best;
  }

  const Matrix& x_;
  const std::vector<double>& y_;
  const ForestParams& params_;
  std::size_t n_features_;
  std::vector<std::size_t> idx_;
  std::vector<int> feat_order_;
  std::vector<std::pair<double, double>> pairs_;
};

}  // namespace detail

inline Forest fit_forest(const Matrix& x, const std::vector<double>& y, ForestParams params,
                         std::vector<std::string> feature_names = {}) {
  if (x.size() != y.size()) {
    raise("forest.DimensionMismatch", "feature matrix has " + std::to_string(x.size()) +
                                          " rows but target has " + std::to_string(y.size()));
  }
  if (x.size() < 2) raise("forest.DimensionMismatch", "need at least 2 training rows");
  const std::size_t n_features = x.front().size();
  if (n_features == 0) raise("forest.DimensionMismatch", "need at least 1 feature");
  for (std::size_t r = 0; r < x.size(); ++r) {
    if (x[r].size() != n_features) {
      raise("forest.DimensionMismatch", "row " + std::to_string(r) + " has " +
                                            std::to_string(x[r].size()) + " features, expected " +
                                            std::to_string(n_features));
    }
    if (!std::isfinite(y[r])) raise("forest.NonFiniteInput", "target row " + std::to_string(r));
    for (const double v : x[r]) {
      if (!std::isfinite(v)) raise("forest.NonFiniteInput", "feature row " + std::to_string(r));
    }
  }
  if (feature_names.empty()) {
    for (std::size_t f = 0; f < n_features; ++f) feature_names.push_back("f" + std::to_string(f));
  }
  if (feature_names.size() != n_features) {
    raise("forest.DimensionMismatch", "feature name list does not match matrix width");
  }
  if (params.n_trees == 0) params.n_trees = 1;
  if (params.min_samples_leaf == 0) params.min_samples_leaf = 1;
  if (params.mtry == 0) params.mtry = (n_features + 2) / 3;
  params.mtry = std::clamp<std::size_t>(params.mtry, 1, n_features);

  Forest forest;
  forest.params = params;
  forest.feature_names = std::move(feature_names);
  forest.trees.resize(params.n_trees);
  forest.in_bag.assign(params.n_trees, std::vector<std::uint8_t>(x.size(), 0));
  std::vector<std::vector<double>> gains(params.n_trees,
                                         std::vector<double>(n_features, 0.0));

  const std::size_t n = x.size();
  parallel_for(params.n_trees, [&](std::size_t t) {
    Rng rng(derive_stream(params.seed, t));
    std::vector<std::size_t> bag(n);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t row = static_cast<std::size_t>(rng.below(n));
      bag[i] = row;
      forest.in_bag[t][row] = 1;
    }
    detail::TreeBuilder builder(x, y, params, n_features);
    forest.trees[t] = builder.build(std::move(bag), rng, gains[t]);
  });

  forest.split_gain.assign(n_features, 0.0);
  for (const std::vector<double>& g : gains) {
    for (std::size_t f = 0; f < n_features; ++f) forest.split_gain[f] += g[f];
  }
  return forest;
}

inline double predict_tree(const Tree& tree, std::span<const double> x) {
  std::int32_t node = 0;
  while (tree.nodes[static_cast<std::size_t>(node)].feature >= 0) {
    const TreeNode& nd = tree.nodes[static_cast<std::size_t>(node)];
    node = x[static_cast<std::size_t>(nd.feature)] <= nd.threshold ? nd.left : nd.right;
  }
  return tree.nodes[static_cast<std::size_t>(node)].value;
}

inline double predict(const Forest& forest, std::span<const double> x) {
  if (x.size() != forest.n_features()) {
    raise("forest.DimensionMismatch", "input has " + std::to_string(x.size()) +
                                          " features, model expects " +
                                          std::to_string(forest.n_features()));
  }
  for (const double v : x) {
    if (!std::isfinite(v)) raise("forest.NonFiniteInput", "non-finite prediction input");
  }
  double sum = 0.0;
  for (const Tree& tree : forest.trees) sum += predict_tree(tree, x);
  return sum / static_cast<double>(forest.trees.size());
}

// Out-of-bag prediction over the training matrix; rows that land in every
// bootstrap bag come back absent.
inline std::vector<std::optional<double>> oob_predict(const Forest& forest, const Matrix& x) {
  if (forest.in_bag.empty() || forest.in_bag.front().size() != x.size()) {
    raise("forest.DimensionMismatch", "matrix does not match the forest's training rows");
  }
  std::vector<std::optional<double>> out(x.size());
  for (std::size_t r = 0; r < x.size(); ++r) {
    if (x[r].size() != forest.n_features()) {
      raise("forest.DimensionMismatch", "row " + std::to_string(r) + " width mismatch");
    }
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t t = 0; t < forest.trees.size(); ++t) {
      if (forest.in_bag[t][r]) continue;
      sum += predict_tree(forest.trees[t], x[r]);
      ++count;
    }
    if (count > 0) out[r] = sum / static_cast<double>(count);
  }
  return out;
}

// Split-gain importance normalized to sum 1; all-zero when no split exists.
inline std::vector<std::pair<std::string, double>> feature_importance(const Forest& forest) {
  double total = 0.0;
  for (const double g : forest.split_gain) total += g;
  std::vector<std::pair<std::string, double>> out;
  out.reserve(forest.feature_names.size());
  for (std::size_t f = 0; f < forest.feature_names.size(); ++f) {
    out.emplace_back(forest.feature_names[f], total > 0.0 ? forest.split_gain[f] / total : 0.0);
  }
  return out;
}

}  // namespace eqm
