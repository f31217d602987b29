#pragma once

// Independent reference computations used by the unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "gbart/tree.hpp"

namespace oracle {

// Leaf-count distribution of a Galton-Watson tree where a depth-d node splits with
// probability alpha^d, truncated at max_depth (nodes there never split). Returns P(K = k)
// for k = 0..k_max (index 0 unused).
inline std::vector<double> gw_leaf_count(double alpha, int max_depth, int k_max) {
  std::vector<double> below(static_cast<std::size_t>(k_max + 1), 0.0);
  below[1] = 1.0;
  for (int d = max_depth - 1; d >= 0; --d) {
    const double p = std::pow(alpha, d);
    std::vector<double> cur(static_cast<std::size_t>(k_max + 1), 0.0);
    cur[1] = 1.0 - p;
    for (int a = 1; a <= k_max; ++a)
      for (int b = 1; a + b <= k_max; ++b)
        cur[static_cast<std::size_t>(a + b)] += p * below[static_cast<std::size_t>(a)] * below[static_cast<std::size_t>(b)];
    below = cur;
  }
  return below;
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Two-sample Kolmogorov-Smirnov statistic.
inline double ks_distance(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= v) ++i;
    while (j < b.size() && b[j] <= v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

inline double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double variance(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

// Batch-means standard error of the mean for a correlated series.
inline double batch_se(const std::vector<double>& v, int n_batches = 50) {
  const std::size_t b = v.size() / static_cast<std::size_t>(n_batches);
  std::vector<double> means;
  for (int k = 0; k < n_batches; ++k) {
    double s = 0.0;
    for (std::size_t i = 0; i < b; ++i) s += v[static_cast<std::size_t>(k) * b + i];
    means.push_back(s / static_cast<double>(b));
  }
  return std::sqrt(variance(means) / n_batches);
}

// Potential scale reduction factor for equal-length chains.
inline double gelman_rubin(const std::vector<std::vector<double>>& chains) {
  const double m = static_cast<double>(chains.size());
  const double n = static_cast<double>(chains.front().size());
  std::vector<double> means, vars;
  for (const auto& c : chains) {
    means.push_back(mean(c));
    vars.push_back(variance(c));
  }
  const double W = mean(vars);
  const double B = n * variance(means);
  (void)m;
  const double v_hat = (n - 1) / n * W + B / n;
  return std::sqrt(v_hat / W);
}


// All trees the growth process can reach from a node holding `rows`, with node-local splits.
inline std::vector<gbart::TreePartition> enumerate_trees(const gbart::CovariateIndex& data, int max_depth) {
  using gbart::TreeNode;
  using gbart::TreePartition;
  std::function<std::vector<std::vector<TreeNode>>(std::vector<int>, int)> rec =
      [&](std::vector<int> rows, int depth) {
        std::vector<std::vector<TreeNode>> out;
        out.push_back({TreeNode{}});
        if (depth >= max_depth) return out;
        for (int a = 0; a < data.q(); ++a) {
          std::vector<double> vals;
          for (int r : rows) vals.push_back(data.X()(r, a));
          std::sort(vals.begin(), vals.end());
          vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
          if (vals.size() < 2) continue;
          for (double c : vals) {
            std::vector<int> l, r;
            for (int i : rows) (data.X()(i, a) < c ? l : r).push_back(i);
            for (const auto& lt : rec(l, depth + 1)) {
              for (const auto& rt : rec(r, depth + 1)) {
                std::vector<TreeNode> nodes(1);
                nodes[0].rule = {a, c};
                nodes[0].left = 1;
                const int off_l = 1;
                for (auto n : lt) {
                  if (n.left >= 0) { n.left += off_l; n.right += off_l; }
                  nodes.push_back(n);
                }
                const int off_r = static_cast<int>(nodes.size());
                nodes[0].right = off_r;
                for (auto n : rt) {
                  if (n.left >= 0) { n.left += off_r; n.right += off_r; }
                  nodes.push_back(n);
                }
                out.push_back(nodes);
              }
            }
          }
        }
        return out;
      };
  std::vector<int> all;
  for (int i = 0; i < data.n(); ++i) all.push_back(i);
  std::vector<TreePartition> trees;
  for (auto& nodes : rec(all, 0)) trees.push_back(TreePartition::from_nodes(nodes));
  return trees;
}

}  // namespace oracle
