#pragma once

#include <random>
#include <string>
#include <vector>

#include "gbart/numeric.hpp"

namespace gbart {

// x[axis] < threshold goes left.
struct SplitRule {
  int axis = 0;
  double threshold = 0.0;
  bool operator==(const SplitRule&) const = default;
};

struct TreeNode {
  int parent = -1;
  int left = -1;
  int right = -1;
  int depth = 0;
  SplitRule rule{};
  bool is_leaf() const { return left < 0; }
  bool operator==(const TreeNode&) const = default;
};

// Binary partition of [0,1]^q. Nodes are stored in preorder; leaves are numbered 0..K-1
// from left to right.
class TreePartition {
 public:
  TreePartition();

  int n_nodes() const { return static_cast<int>(nodes_.size()); }
  int n_leaves() const { return static_cast<int>(leaves_.size()); }
  const std::vector<TreeNode>& nodes() const { return nodes_; }
  const TreeNode& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  // Node id of leaf k.
  int leaf_node(int k) const { return leaves_[static_cast<std::size_t>(k)]; }
  // Leaf number of a leaf node, -1 for internal nodes.
  int leaf_number(int node_id) const { return leaf_number_[static_cast<std::size_t>(node_id)]; }

  int leaf_index(std::span<const double> x) const;
  int leaf_index(const RowMatrix& X, Eigen::Index row) const;
  std::vector<int> leaf_assignment(const RowMatrix& X) const;
  std::vector<int> cell_counts(const RowMatrix& X) const;

  // Internal nodes whose children are both leaves.
  std::vector<int> nog_nodes() const;
  std::vector<int> internal_nodes() const;
  int depth() const;

  // Split leaf k; the children become leaves k and k+1.
  TreePartition grow(int leaf, SplitRule rule) const;
  // Collapse a nog node into a leaf.
  TreePartition prune(int node_id) const;
  TreePartition change(int node_id, SplitRule rule) const;

  // Build from a parent-linked node list in any order with node 0 as root.
  static TreePartition from_nodes(std::vector<TreeNode> nodes);

  std::string key() const;
  bool operator==(const TreePartition& o) const { return nodes_ == o.nodes_; }

 private:
  void reindex();

  std::vector<TreeNode> nodes_;
  std::vector<int> leaves_;
  std::vector<int> leaf_number_;
};

// Dense per-axis ranks of the covariate matrix, shared by prior evaluation and proposals.
class CovariateIndex {
 public:
  explicit CovariateIndex(RowMatrix X);

  const RowMatrix& X() const { return X_; }
  int n() const { return static_cast<int>(X_.rows()); }
  int q() const { return static_cast<int>(X_.cols()); }
  int rank(int row, int axis) const { return ranks_[static_cast<std::size_t>(row * q() + axis)]; }
  double value_of_rank(int axis, int r) const {
    return values_[static_cast<std::size_t>(axis)][static_cast<std::size_t>(r)];
  }
  int n_distinct(int axis) const { return static_cast<int>(values_[static_cast<std::size_t>(axis)].size()); }
  // Rank of a threshold value, or -1 if it is not an observed value on that axis.
  int rank_of_value(int axis, double v) const;

  // Distinct ranks on `axis` among `rows`, in order of first appearance.
  std::vector<int> distinct_ranks(std::span<const int> rows, int axis) const;
  int count_distinct(std::span<const int> rows, int axis) const;
  bool has_two_values(std::span<const int> rows, int axis) const;
  // Axes with at least two distinct values among rows.
  std::vector<int> splittable_axes(std::span<const int> rows) const;

 private:
  RowMatrix X_;
  std::vector<int> ranks_;
  std::vector<std::vector<double>> values_;
};

struct TreePriorSpec {
  enum class Kind { chipman, denison };
  Kind kind = Kind::chipman;
  double alpha = 0.25;
  double lambda = 10.0;
  int validity_constant = 1;
  // Nodes at this depth never split.
  int max_depth = 64;

  void validate() const;
  static Kind parse_kind(const std::string& s);
};

// Rows of X falling in each node (indexed by node id).
std::vector<std::vector<int>> node_members(const TreePartition& tree, const RowMatrix& X);

bool is_valid(const TreePartition& tree, const RowMatrix& X, int C);

double chipman_split_probability(double alpha, int depth);
// log alpha^d - log(#axes) - log(#values) for an internal node.
double chipman_internal_term(double alpha, int depth, int n_axes, int n_values);
// log(1 - alpha^d) when the node could split, else 0.
double chipman_leaf_term(double alpha, int depth, bool splittable, int max_depth);

// Truncated Poisson: lambda^K / ((e^lambda - 1) K!).
double denison_log_pk(double lambda, int K);
// log of q^(K-1) n! / (n-K+1)!.
double denison_log_count(int q, int n, int K);

// Log prior probability of the tree under the growth process, ignoring validity.
double log_prior_tree_process(const TreePriorSpec& spec, const TreePartition& tree,
                              const CovariateIndex& data);
// Log prior of a valid tree; throws std::invalid_argument for invalid trees.
double log_prior_tree(const TreePriorSpec& spec, const TreePartition& tree,
                      const CovariateIndex& data);

TreePartition sample_tree_chipman(const TreePriorSpec& spec, const CovariateIndex& data,
                                  std::mt19937_64& rng);
TreePartition sample_tree_denison(const TreePriorSpec& spec, const CovariateIndex& data,
                                  std::mt19937_64& rng);
TreePartition sample_tree(const TreePriorSpec& spec, const CovariateIndex& data,
                          std::mt19937_64& rng);

inline constexpr int kRejectionCap = 1000;

}  // namespace gbart
