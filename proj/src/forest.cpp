#include "gbart/forest.hpp"

#include <algorithm>
#include <stdexcept>

namespace gbart {

void Forest::add(TreePartition tree, RowMatrix leaf_values) {
  if (leaf_values.rows() != tree.n_leaves() || leaf_values.cols() != dim_)
    throw std::invalid_argument("leaf values must be n_leaves x dim");
  trees_.push_back({std::move(tree), std::move(leaf_values)});
}

Vector Forest::evaluate(std::span<const double> x) const {
  Vector out = Vector::Zero(dim_);
  for (const auto& c : trees_) out += c.leaf_values.row(c.tree.leaf_index(x)).transpose();
  return out;
}

RowMatrix Forest::evaluate_all(const RowMatrix& X) const {
  RowMatrix out = RowMatrix::Zero(X.rows(), dim_);
  for (const auto& c : trees_)
    for (Eigen::Index i = 0; i < X.rows(); ++i) out.row(i) += c.leaf_values.row(c.tree.leaf_index(X, i));
  return out;
}

double log_joint_prior(const Forest& forest, const TreePriorSpec& tree_spec,
                       const LeafPrior& leaf_prior, const CovariateIndex& data) {
  double lp = 0.0;
  for (const auto& c : forest.trees()) {
    lp += log_prior_tree(tree_spec, c.tree, data);
    for (Eigen::Index k = 0; k < c.leaf_values.rows(); ++k) lp += leaf_prior.log_density(row_span(c.leaf_values, k));
  }
  return lp;
}

int refined_cell_count(const Forest& forest, const RowMatrix& X) {
  std::vector<const TreePartition*> active;
  for (const auto& c : forest.trees())
    if (c.tree.n_leaves() > 1) active.push_back(&c.tree);
  if (active.empty()) return X.rows() > 0 ? 1 : 0;
  std::vector<std::vector<int>> keys(static_cast<std::size_t>(X.rows()));
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    for (const auto* t : active) keys[static_cast<std::size_t>(i)].push_back(t->leaf_index(X, i));
  std::sort(keys.begin(), keys.end());
  return static_cast<int>(std::unique(keys.begin(), keys.end()) - keys.begin());
}

}  // namespace gbart
