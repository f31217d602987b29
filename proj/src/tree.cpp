#include "gbart/tree.hpp"

#include <algorithm>
#include <cstdio>
#include <stdexcept>

namespace gbart {

TreePartition::TreePartition() : nodes_(1), leaves_{0}, leaf_number_{0} {}

TreePartition TreePartition::from_nodes(std::vector<TreeNode> nodes) {
  if (nodes.empty()) throw std::invalid_argument("tree needs at least a root node");
  TreePartition t;
  std::vector<TreeNode> out;
  out.reserve(nodes.size());
  // Preorder walk from node 0, renumbering as we go.
  struct Item {
    int old_id;
    int new_parent;
    bool is_left;
  };
  std::vector<Item> stack{{0, -1, false}};
  while (!stack.empty()) {
    const Item it = stack.back();
    stack.pop_back();
    if (it.old_id < 0 || it.old_id >= static_cast<int>(nodes.size()))
      throw std::invalid_argument("tree node index out of range");
    if (out.size() > nodes.size()) throw std::invalid_argument("tree nodes contain a cycle");
    const TreeNode& src = nodes[static_cast<std::size_t>(it.old_id)];
    if ((src.left < 0) != (src.right < 0))
      throw std::invalid_argument("tree node must have zero or two children");
    TreeNode n;
    n.parent = it.new_parent;
    n.depth = it.new_parent < 0 ? 0 : out[static_cast<std::size_t>(it.new_parent)].depth + 1;
    n.rule = src.is_leaf() ? SplitRule{} : src.rule;
    const int id = static_cast<int>(out.size());
    out.push_back(n);
    if (it.new_parent >= 0) {
      auto& p = out[static_cast<std::size_t>(it.new_parent)];
      (it.is_left ? p.left : p.right) = id;
    }
    if (!src.is_leaf()) {
      stack.push_back({src.right, id, false});
      stack.push_back({src.left, id, true});
    }
  }
  t.nodes_ = std::move(out);
  t.reindex();
  return t;
}

void TreePartition::reindex() {
  leaves_.clear();
  leaf_number_.assign(nodes_.size(), -1);
  // Preorder storage means leaves appear left to right.
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].is_leaf()) {
      leaf_number_[i] = static_cast<int>(leaves_.size());
      leaves_.push_back(static_cast<int>(i));
    }
  }
}

int TreePartition::leaf_index(std::span<const double> x) const {
  int id = 0;
  while (!nodes_[static_cast<std::size_t>(id)].is_leaf()) {
    const auto& n = nodes_[static_cast<std::size_t>(id)];
    id = x[static_cast<std::size_t>(n.rule.axis)] < n.rule.threshold ? n.left : n.right;
  }
  return leaf_number_[static_cast<std::size_t>(id)];
}

int TreePartition::leaf_index(const RowMatrix& X, Eigen::Index row) const {
  return leaf_index(row_span(X, row));
}

std::vector<int> TreePartition::leaf_assignment(const RowMatrix& X) const {
  std::vector<int> out(static_cast<std::size_t>(X.rows()));
  for (Eigen::Index i = 0; i < X.rows(); ++i) out[static_cast<std::size_t>(i)] = leaf_index(X, i);
  return out;
}

std::vector<int> TreePartition::cell_counts(const RowMatrix& X) const {
  std::vector<int> counts(leaves_.size(), 0);
  for (Eigen::Index i = 0; i < X.rows(); ++i) ++counts[static_cast<std::size_t>(leaf_index(X, i))];
  return counts;
}

std::vector<int> TreePartition::nog_nodes() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const auto& n = nodes_[i];
    if (!n.is_leaf() && nodes_[static_cast<std::size_t>(n.left)].is_leaf() &&
        nodes_[static_cast<std::size_t>(n.right)].is_leaf())
      out.push_back(static_cast<int>(i));
  }
  return out;
}

std::vector<int> TreePartition::internal_nodes() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (!nodes_[i].is_leaf()) out.push_back(static_cast<int>(i));
  return out;
}

int TreePartition::depth() const {
  int d = 0;
  for (const auto& n : nodes_) d = std::max(d, n.depth);
  return d;
}

TreePartition TreePartition::grow(int leaf, SplitRule rule) const {
  if (leaf < 0 || leaf >= n_leaves()) throw std::invalid_argument("grow: leaf out of range");
  std::vector<TreeNode> nodes = nodes_;
  const int id = leaf_node(leaf);
  const int l = static_cast<int>(nodes.size());
  TreeNode child;
  child.parent = id;
  nodes.push_back(child);
  nodes.push_back(child);
  nodes[static_cast<std::size_t>(id)].left = l;
  nodes[static_cast<std::size_t>(id)].right = l + 1;
  nodes[static_cast<std::size_t>(id)].rule = rule;
  return from_nodes(std::move(nodes));
}

TreePartition TreePartition::prune(int node_id) const {
  if (node_id < 0 || node_id >= n_nodes()) throw std::invalid_argument("prune: node out of range");
  const auto& n = node(node_id);
  if (n.is_leaf() || !node(n.left).is_leaf() || !node(n.right).is_leaf())
    throw std::invalid_argument("prune: node must have two leaf children");
  std::vector<TreeNode> nodes = nodes_;
  nodes[static_cast<std::size_t>(node_id)].left = -1;
  nodes[static_cast<std::size_t>(node_id)].right = -1;
  return from_nodes(std::move(nodes));
}

TreePartition TreePartition::change(int node_id, SplitRule rule) const {
  if (node_id < 0 || node_id >= n_nodes() || node(node_id).is_leaf())
    throw std::invalid_argument("change: node must be internal");
  TreePartition t = *this;
  t.nodes_[static_cast<std::size_t>(node_id)].rule = rule;
  return t;
}

std::string TreePartition::key() const {
  std::string s;
  char buf[64];
  for (const auto& n : nodes_) {
    if (n.is_leaf()) {
      s += 'L';
    } else {
      std::snprintf(buf, sizeof buf, "(%d:%a)", n.rule.axis, n.rule.threshold);
      s += buf;
    }
  }
  return s;
}

CovariateIndex::CovariateIndex(RowMatrix X) : X_(std::move(X)) {
  const int n = this->n(), q = this->q();
  if (!X_.allFinite()) throw std::invalid_argument("covariates must be finite");
  values_.resize(static_cast<std::size_t>(q));
  ranks_.resize(static_cast<std::size_t>(n) * static_cast<std::size_t>(q));
  for (int a = 0; a < q; ++a) {
    auto& v = values_[static_cast<std::size_t>(a)];
    v.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = X_(i, a);
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    for (int i = 0; i < n; ++i)
      ranks_[static_cast<std::size_t>(i * q + a)] =
          static_cast<int>(std::lower_bound(v.begin(), v.end(), X_(i, a)) - v.begin());
  }
}

int CovariateIndex::rank_of_value(int axis, double v) const {
  if (axis < 0 || axis >= q()) return -1;
  const auto& vals = values_[static_cast<std::size_t>(axis)];
  const auto it = std::lower_bound(vals.begin(), vals.end(), v);
  if (it == vals.end() || *it != v) return -1;
  return static_cast<int>(it - vals.begin());
}

std::vector<int> CovariateIndex::distinct_ranks(std::span<const int> rows, int axis) const {
  std::vector<char> seen(static_cast<std::size_t>(n_distinct(axis)), 0);
  std::vector<int> out;
  for (int r : rows) {
    const int k = rank(r, axis);
    if (!seen[static_cast<std::size_t>(k)]) {
      seen[static_cast<std::size_t>(k)] = 1;
      out.push_back(k);
    }
  }
  return out;
}

int CovariateIndex::count_distinct(std::span<const int> rows, int axis) const {
  return static_cast<int>(distinct_ranks(rows, axis).size());
}

bool CovariateIndex::has_two_values(std::span<const int> rows, int axis) const {
  if (rows.size() < 2) return false;
  const int first = rank(rows[0], axis);
  for (int r : rows)
    if (rank(r, axis) != first) return true;
  return false;
}

std::vector<int> CovariateIndex::splittable_axes(std::span<const int> rows) const {
  std::vector<int> out;
  for (int a = 0; a < q(); ++a)
    if (has_two_values(rows, a)) out.push_back(a);
  return out;
}

void TreePriorSpec::validate() const {
  if (kind == Kind::chipman && !(alpha > 0 && alpha < 0.5))
    throw std::invalid_argument("chipman alpha must lie in (0, 1/2)");
  if (kind == Kind::denison && !(lambda > 0)) throw std::invalid_argument("denison lambda must be positive");
  if (validity_constant < 1) throw std::invalid_argument("validity constant must be >= 1");
  if (max_depth < 0) throw std::invalid_argument("max_depth must be >= 0");
}

TreePriorSpec::Kind TreePriorSpec::parse_kind(const std::string& s) {
  if (s == "chipman") return Kind::chipman;
  if (s == "denison") return Kind::denison;
  throw std::invalid_argument("unknown tree prior: " + s);
}

std::vector<std::vector<int>> node_members(const TreePartition& tree, const RowMatrix& X) {
  std::vector<std::vector<int>> members(static_cast<std::size_t>(tree.n_nodes()));
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    int id = 0;
    while (true) {
      members[static_cast<std::size_t>(id)].push_back(static_cast<int>(i));
      const auto& n = tree.node(id);
      if (n.is_leaf()) break;
      id = X(i, n.rule.axis) < n.rule.threshold ? n.left : n.right;
    }
  }
  return members;
}

bool is_valid(const TreePartition& tree, const RowMatrix& X, int C) {
  for (int c : tree.cell_counts(X))
    if (c < C) return false;
  return true;
}

double chipman_split_probability(double alpha, int depth) { return std::pow(alpha, depth); }

double chipman_internal_term(double alpha, int depth, int n_axes, int n_values) {
  return depth * std::log(alpha) - std::log(static_cast<double>(n_axes)) -
         std::log(static_cast<double>(n_values));
}

double chipman_leaf_term(double alpha, int depth, bool splittable, int max_depth) {
  if (!splittable || depth >= max_depth) return 0.0;
  if (depth == 0) return kNegInf;
  return std::log1p(-std::pow(alpha, depth));
}

double denison_log_pk(double lambda, int K) {
  if (K < 1) return kNegInf;
  // log(e^lambda - 1) = lambda + log(1 - e^-lambda)
  return K * std::log(lambda) - (lambda + std::log(-std::expm1(-lambda))) - std::lgamma(K + 1.0);
}

double denison_log_count(int q, int n, int K) {
  if (K < 1 || K > n) throw std::invalid_argument("denison count needs 1 <= K <= n");
  return (K - 1) * std::log(static_cast<double>(q)) + std::lgamma(n + 1.0) - std::lgamma(n - K + 2.0);
}

double log_prior_tree_process(const TreePriorSpec& spec, const TreePartition& tree,
                              const CovariateIndex& data) {
  if (spec.kind == TreePriorSpec::Kind::denison) {
    const int K = tree.n_leaves();
    if (K > data.n() || tree.depth() > spec.max_depth) return kNegInf;
    return denison_log_pk(spec.lambda, K) - denison_log_count(data.q(), data.n(), K);
  }
  const auto members = node_members(tree, data.X());
  double lp = 0.0;
  for (int id = 0; id < tree.n_nodes(); ++id) {
    const auto& n = tree.node(id);
    const auto& rows = members[static_cast<std::size_t>(id)];
    const auto axes = data.splittable_axes(rows);
    if (n.is_leaf()) {
      lp += chipman_leaf_term(spec.alpha, n.depth, !axes.empty(), spec.max_depth);
      continue;
    }
    if (n.depth >= spec.max_depth) return kNegInf;
    if (std::find(axes.begin(), axes.end(), n.rule.axis) == axes.end()) return kNegInf;
    const int r = data.rank_of_value(n.rule.axis, n.rule.threshold);
    const auto dr = data.distinct_ranks(rows, n.rule.axis);
    if (r < 0 || std::find(dr.begin(), dr.end(), r) == dr.end()) return kNegInf;
    lp += chipman_internal_term(spec.alpha, n.depth, static_cast<int>(axes.size()),
                                static_cast<int>(dr.size()));
  }
  return lp;
}

double log_prior_tree(const TreePriorSpec& spec, const TreePartition& tree,
                      const CovariateIndex& data) {
  if (!is_valid(tree, data.X(), spec.validity_constant))
    throw std::invalid_argument("log_prior_tree: tree is not valid for this data");
  return log_prior_tree_process(spec, tree, data);
}

namespace {

int uniform_index(std::mt19937_64& rng, std::size_t n) {
  return static_cast<int>(std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
}

struct Split {
  SplitRule rule;
  std::vector<int> left, right;
};

Split split_rows(const CovariateIndex& data, const std::vector<int>& rows, int axis, double thr) {
  Split s;
  s.rule = {axis, thr};
  for (int r : rows) (data.X()(r, axis) < thr ? s.left : s.right).push_back(r);
  return s;
}

}  // namespace

TreePartition sample_tree_chipman(const TreePriorSpec& spec, const CovariateIndex& data,
                                  std::mt19937_64& rng) {
  spec.validate();
  if (spec.kind != TreePriorSpec::Kind::chipman) throw std::invalid_argument("spec is not chipman");
  if (data.n() < spec.validity_constant) throw std::invalid_argument("not enough data for a valid tree");
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<int> all(static_cast<std::size_t>(data.n()));
  for (int i = 0; i < data.n(); ++i) all[static_cast<std::size_t>(i)] = i;

  for (int attempt = 0; attempt < kRejectionCap; ++attempt) {
    std::vector<TreeNode> nodes(1);
    std::vector<std::pair<int, std::vector<int>>> stack;
    stack.emplace_back(0, all);
    bool valid = true;
    while (!stack.empty() && valid) {
      auto [id, rows] = std::move(stack.back());
      stack.pop_back();
      const int d = nodes[static_cast<std::size_t>(id)].depth;
      if (d >= spec.max_depth) continue;
      const auto axes = data.splittable_axes(rows);
      if (axes.empty()) continue;
      if (unif(rng) >= chipman_split_probability(spec.alpha, d)) continue;
      const int axis = axes[static_cast<std::size_t>(uniform_index(rng, axes.size()))];
      const auto dr = data.distinct_ranks(rows, axis);
      const double thr = data.value_of_rank(axis, dr[static_cast<std::size_t>(uniform_index(rng, dr.size()))]);
      Split s = split_rows(data, rows, axis, thr);
      // Rejection on the full tree is equivalent to stopping at the first invalid cell.
      if (static_cast<int>(s.left.size()) < spec.validity_constant ||
          static_cast<int>(s.right.size()) < spec.validity_constant) {
        valid = false;
        break;
      }
      const int l = static_cast<int>(nodes.size());
      TreeNode child;
      child.parent = id;
      child.depth = d + 1;
      nodes.push_back(child);
      nodes.push_back(child);
      nodes[static_cast<std::size_t>(id)].left = l;
      nodes[static_cast<std::size_t>(id)].right = l + 1;
      nodes[static_cast<std::size_t>(id)].rule = s.rule;
      stack.emplace_back(l + 1, std::move(s.right));
      stack.emplace_back(l, std::move(s.left));
    }
    if (valid) return TreePartition::from_nodes(std::move(nodes));
  }
  throw std::runtime_error("sample_tree_chipman: rejection cap exceeded");
}

TreePartition sample_tree_denison(const TreePriorSpec& spec, const CovariateIndex& data,
                                  std::mt19937_64& rng) {
  spec.validate();
  if (spec.kind != TreePriorSpec::Kind::denison) throw std::invalid_argument("spec is not denison");
  if (data.n() < spec.validity_constant) throw std::invalid_argument("not enough data for a valid tree");
  std::poisson_distribution<int> pois(spec.lambda);
  std::vector<int> all(static_cast<std::size_t>(data.n()));
  for (int i = 0; i < data.n(); ++i) all[static_cast<std::size_t>(i)] = i;

  for (int attempt = 0; attempt < kRejectionCap; ++attempt) {
    int K = 0;
    while (K < 1) K = pois(rng);
    if (K > data.n() / spec.validity_constant) continue;
    TreePartition tree;
    std::vector<std::vector<int>> cells{all};
    bool ok = true;
    for (int step = 1; step < K && ok; ++step) {
      const int leaf = uniform_index(rng, cells.size());
      const auto& rows = cells[static_cast<std::size_t>(leaf)];
      const auto axes = data.splittable_axes(rows);
      if (axes.empty() || tree.node(tree.leaf_node(leaf)).depth >= spec.max_depth) {
        ok = false;
        break;
      }
      const int axis = axes[static_cast<std::size_t>(uniform_index(rng, axes.size()))];
      const auto dr = data.distinct_ranks(rows, axis);
      const double thr = data.value_of_rank(axis, dr[static_cast<std::size_t>(uniform_index(rng, dr.size()))]);
      Split s = split_rows(data, rows, axis, thr);
      if (static_cast<int>(s.left.size()) < spec.validity_constant ||
          static_cast<int>(s.right.size()) < spec.validity_constant) {
        ok = false;
        break;
      }
      tree = tree.grow(leaf, s.rule);
      cells[static_cast<std::size_t>(leaf)] = std::move(s.left);
      cells.insert(cells.begin() + leaf + 1, std::move(s.right));
    }
    if (ok) return tree;
  }
  throw std::runtime_error("sample_tree_denison: rejection cap exceeded");
}

TreePartition sample_tree(const TreePriorSpec& spec, const CovariateIndex& data, std::mt19937_64& rng) {
  return spec.kind == TreePriorSpec::Kind::chipman ? sample_tree_chipman(spec, data, rng)
                                                   : sample_tree_denison(spec, data, rng);
}

}  // namespace gbart
