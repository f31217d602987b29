#pragma once

#include <vector>

#include "gbart/leafprior.hpp"
#include "gbart/tree.hpp"

namespace gbart {

struct TreeComponent {
  TreePartition tree;
  // K x D, row k is the value on leaf k.
  RowMatrix leaf_values;
};

// Additive ensemble: f(x) = sum over trees of the value of the leaf containing x.
class Forest {
 public:
  explicit Forest(int dim = 1) : dim_(dim) {}

  int dim() const { return dim_; }
  int n_trees() const { return static_cast<int>(trees_.size()); }
  const std::vector<TreeComponent>& trees() const { return trees_; }
  const TreeComponent& tree(int t) const { return trees_[static_cast<std::size_t>(t)]; }
  TreeComponent& tree(int t) { return trees_[static_cast<std::size_t>(t)]; }

  void add(TreePartition tree, RowMatrix leaf_values);

  Vector evaluate(std::span<const double> x) const;
  // n x D matrix of evaluations at the rows of X.
  RowMatrix evaluate_all(const RowMatrix& X) const;

 private:
  int dim_;
  std::vector<TreeComponent> trees_;
};

double log_joint_prior(const Forest& forest, const TreePriorSpec& tree_spec,
                       const LeafPrior& leaf_prior, const CovariateIndex& data);

// Number of distinct cells of the refinement of all nontrivial trees over the rows of X.
int refined_cell_count(const Forest& forest, const RowMatrix& X);

}  // namespace gbart
