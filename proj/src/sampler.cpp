#include "gbart/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numbers>
#include <stdexcept>
#include <thread>

namespace gbart {

namespace {

template <class T>
const T& pick(const std::vector<T>& v, std::mt19937_64& rng) {
  return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

}  // namespace

void SamplerConfig::validate() const {
  if (n_iter < 1) throw std::invalid_argument("n_iter must be positive");
  if (burn_in < 0 || burn_in >= n_iter) throw std::invalid_argument("burn_in must lie in [0, n_iter)");
  if (thin < 1) throw std::invalid_argument("thin must be positive");
  if (moves.grow < 0 || moves.prune < 0 || moves.change < 0 || moves.grow + moves.prune + moves.change <= 0)
    throw std::invalid_argument("move probabilities must be nonnegative with a positive sum");
  if (!(leaf_proposal_scale > 0)) throw std::invalid_argument("leaf_proposal_scale must be positive");
  if (chains < 1) throw std::invalid_argument("chains must be positive");
  if (n_trees < 1) throw std::invalid_argument("n_trees must be positive");
}

double log_likelihood(const Likelihood& lik, const Forest& forest, const RowMatrix& X, const RowMatrix& Y) {
  if (Y.rows() == 0) return 0.0;
  if (X.rows() != Y.rows()) throw std::invalid_argument("X and Y must have the same number of rows");
  if (forest.dim() != lik.natural_dim()) throw std::invalid_argument("forest dimension does not match likelihood");
  const RowMatrix f = forest.evaluate_all(X);
  double s = 0.0;
  for (Eigen::Index i = 0; i < Y.rows(); ++i) s += lik.log_density(row_span(Y, i), row_span(f, i));
  return s;
}

BackfitSampler::BackfitSampler(const Likelihood& lik, TreePriorSpec tree_spec, LeafPrior leaf_prior,
                               const CovariateIndex& data, const RowMatrix& Y, SamplerConfig cfg)
    : lik_(lik),
      tree_spec_(tree_spec),
      leaf_prior_(std::move(leaf_prior)),
      data_(data),
      Y_(Y),
      cfg_(cfg),
      D_(lik.natural_dim()),
      forest_(lik.natural_dim()) {
  cfg_.validate();
  tree_spec_.validate();
  if (leaf_prior_.kind() == LeafPrior::Kind::dirichlet)
    throw std::invalid_argument("the sampler does not support the dirichlet leaf prior");
  if (leaf_prior_.dim() != D_) throw std::invalid_argument("leaf prior dimension does not match likelihood");
  if (leaf_prior_.kind() == LeafPrior::Kind::grid && D_ != 1)
    throw std::invalid_argument("grid leaf prior needs a scalar likelihood");
  if (data_.n() < 1) throw std::invalid_argument("no covariate rows");
  if (!cfg_.prior_only) {
    if (Y_.rows() != data_.n() || Y_.cols() != lik_.response_dim())
      throw std::invalid_argument("Y must be n x response_dim");
    for (Eigen::Index i = 0; i < Y_.rows(); ++i)
      if (!lik_.in_support(row_span(Y_, i)))
        throw std::invalid_argument("response row " + std::to_string(i) + " is outside the support of " + lik_.name());
  }
  prior_mean_ = leaf_prior_.marginal_mean();
  prior_var_ = leaf_prior_.marginal_variance();
  log_leaf_scale_ = std::log(cfg_.leaf_proposal_scale);
}

Vector BackfitSampler::initial_leaf_value() const {
  Vector v = Vector::Constant(D_, prior_mean_);
  if (leaf_prior_.is_point_mass()) return Vector::Zero(D_);
  if (!cfg_.prior_only && lik_.family() != Likelihood::Family::multinomial &&
      leaf_prior_.kind() != LeafPrior::Kind::beta) {
    const double ybar = Y_.col(0).mean();
    double anchor = ybar;
    if (lik_.family() == Likelihood::Family::poisson) {
      const double m = std::max(ybar, 0.05);
      anchor = lik_.link().kind == LinkKind::softplus ? softplus_inverse(m) : std::log(m);
    }
    v.setConstant(anchor / cfg_.n_trees);
  }
  if (leaf_prior_.kind() == LeafPrior::Kind::grid) {
    const auto& g = leaf_prior_.grid_values();
    double best = g.front();
    for (double x : g)
      if (std::abs(x - v[0]) < std::abs(best - v[0])) best = x;
    v[0] = best;
  }
  return v;
}

void BackfitSampler::initialize(std::mt19937_64& rng) {
  Forest f(D_);
  const Vector v = initial_leaf_value();
  const int n = data_.n();
  std::vector<int> all(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) all[static_cast<std::size_t>(i)] = i;
  const auto axes = data_.splittable_axes(all);
  const bool need_split =
      tree_spec_.kind == TreePriorSpec::Kind::chipman && !axes.empty() && tree_spec_.max_depth > 0;
  std::vector<TreePartition> trees(static_cast<std::size_t>(cfg_.n_trees));
  std::vector<RowMatrix> values(static_cast<std::size_t>(cfg_.n_trees), v.transpose());
  if (need_split) {
    // Each tree's share of the current fit, so later trees see the residual of earlier ones.
    RowMatrix total = RowMatrix::Zero(n, D_);
    for (int i = 0; i < n; ++i) total.row(i) = cfg_.n_trees * v.transpose();
    for (int t = 0; t < cfg_.n_trees; ++t) {
      RowMatrix G = total;
      for (int i = 0; i < n; ++i) G.row(i) -= v.transpose();
      auto& tree = trees[static_cast<std::size_t>(t)];
      RowMatrix beta = RowMatrix::Zero(2, D_);
      if (!initial_root_split(G, all, axes, tree, beta, rng)) {
        for (int attempt = 0; attempt < kRejectionCap && tree.n_leaves() == 1; ++attempt) {
          const int axis = pick(axes, rng);
          const int r = pick(data_.distinct_ranks(all, axis), rng);
          const SplitRule rule{axis, data_.value_of_rank(axis, r)};
          if (plan_grow(0, all, rule).possible) tree = tree.grow(0, rule);
        }
        if (tree.n_leaves() == 1) throw std::runtime_error("could not find a valid root split for initialisation");
        beta.row(0) = beta.row(1) = v.transpose();
      }
      values[static_cast<std::size_t>(t)] = beta;
      const auto leaf = tree.leaf_assignment(data_.X());
      for (int i = 0; i < n; ++i) total.row(i) = G.row(i) + beta.row(leaf[static_cast<std::size_t>(i)]);
    }
  }
  for (int t = 0; t < cfg_.n_trees; ++t)
    f.add(std::move(trees[static_cast<std::size_t>(t)]), std::move(values[static_cast<std::size_t>(t)]));
  set_forest(std::move(f));
}

// Draws a root split with probability proportional to its prior weight times the Laplace
// approximation of the two cells' marginal likelihood, over at most kInitThresholds
// evenly spaced thresholds per axis. Leaf values start at the cell modes. Returns false when
// there is no likelihood to inform the choice or the leaf prior is not continuous.
bool BackfitSampler::initial_root_split(const RowMatrix& G, const std::vector<int>& all, const std::vector<int>& axes,
                                        TreePartition& tree, RowMatrix& beta, std::mt19937_64& rng) const {
  constexpr std::size_t kInitThresholds = 32;
  if (cfg_.prior_only || leaf_prior_.is_point_mass() || leaf_prior_.kind() == LeafPrior::Kind::grid) return false;
  auto marginal = [&](const std::vector<int>& rows, Vector& mode) {
    const CellProposal q = fit_cell(rows, G);
    mode = q.mean;
    return cell_loglik(rows, G, as_span(q.mean)) + leaf_log_prior(q.mean) +
           0.5 * (D_ * std::log(2 * std::numbers::pi) + q.log_det);
  };
  struct Candidate {
    SplitRule rule;
    Vector left, right;
  };
  std::vector<Candidate> cands;
  std::vector<double> score;
  for (int axis : axes) {
    const auto dr = data_.distinct_ranks(all, axis);
    const std::size_t m = std::min(kInitThresholds, dr.size());
    for (std::size_t j = 0; j < m; ++j) {
      const int r = dr[(2 * j + 1) * dr.size() / (2 * m)];
      const SplitRule rule{axis, data_.value_of_rank(axis, r)};
      const GrowPlan plan = plan_grow(0, all, rule);
      if (!plan.possible) continue;
      Candidate c{rule, Vector(), Vector()};
      double s = chipman_internal_term(tree_spec_.alpha, 0, plan.n_axes, plan.n_values);
      for (const auto* rows : {&plan.left, &plan.right})
        s += chipman_leaf_term(tree_spec_.alpha, 1, !data_.splittable_axes(*rows).empty(), tree_spec_.max_depth);
      s += marginal(plan.left, c.left) + marginal(plan.right, c.right);
      if (!std::isfinite(s)) continue;
      cands.push_back(std::move(c));
      score.push_back(s);
    }
  }
  if (cands.empty()) return false;
  const double z = log_sum_exp(score);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double target = u(rng), acc = 0.0;
  std::size_t pick_at = cands.size() - 1;
  for (std::size_t j = 0; j < cands.size(); ++j) {
    acc += std::exp(score[j] - z);
    if (target < acc) {
      pick_at = j;
      break;
    }
  }
  tree = TreePartition().grow(0, cands[pick_at].rule);
  beta.row(0) = cands[pick_at].left.transpose();
  beta.row(1) = cands[pick_at].right.transpose();
  return true;
}

void BackfitSampler::set_forest(Forest forest) {
  if (forest.dim() != D_) throw std::invalid_argument("forest dimension does not match likelihood");
  forest_ = std::move(forest);
  leaf_of_.clear();
  tree_log_prior_.clear();
  for (const auto& c : forest_.trees()) {
    leaf_of_.push_back(c.tree.leaf_assignment(data_.X()));
    tree_log_prior_.push_back(log_prior_tree(tree_spec_, c.tree, data_));
  }
  fit_ = forest_.evaluate_all(data_.X());
  if (!std::isfinite(tracked_log_posterior()))
    throw std::invalid_argument("starting forest has zero posterior density");
}

double BackfitSampler::tracked_log_posterior() const {
  double s = 0.0;
  if (!cfg_.prior_only)
    for (Eigen::Index i = 0; i < Y_.rows(); ++i) s += lik_.log_density(row_span(Y_, i), row_span(fit_, i));
  for (std::size_t t = 0; t < tree_log_prior_.size(); ++t) {
    s += tree_log_prior_[t];
    const auto& vals = forest_.tree(static_cast<int>(t)).leaf_values;
    for (Eigen::Index k = 0; k < vals.rows(); ++k) s += leaf_prior_.log_density(row_span(vals, k));
  }
  return s;
}

double BackfitSampler::log_posterior() const {
  const double ll = cfg_.prior_only ? 0.0 : log_likelihood(lik_, forest_, data_.X(), Y_);
  return ll + log_joint_prior(forest_, tree_spec_, leaf_prior_, data_);
}

RowMatrix BackfitSampler::other_fit(int t) const {
  RowMatrix G = fit_;
  const auto& vals = forest_.tree(t).leaf_values;
  const auto& lo = leaf_of_[static_cast<std::size_t>(t)];
  for (Eigen::Index i = 0; i < G.rows(); ++i) G.row(i) -= vals.row(lo[static_cast<std::size_t>(i)]);
  return G;
}

std::vector<std::vector<int>> BackfitSampler::cells(int t) const {
  std::vector<std::vector<int>> out(static_cast<std::size_t>(forest_.tree(t).tree.n_leaves()));
  const auto& lo = leaf_of_[static_cast<std::size_t>(t)];
  for (std::size_t i = 0; i < lo.size(); ++i) out[static_cast<std::size_t>(lo[i])].push_back(static_cast<int>(i));
  return out;
}

double BackfitSampler::cell_loglik(const std::vector<int>& rows, const RowMatrix& G,
                                   std::span<const double> beta) const {
  if (cfg_.prior_only) return 0.0;
  double s = 0.0;
  if (lik_.family() != Likelihood::Family::multinomial) {
    const double b = beta[0];
    for (int r : rows) s += lik_.log_density1(Y_(r, 0), G(r, 0) + b);
    return s;
  }
  Vector f(D_);
  for (int r : rows) {
    for (int j = 0; j < D_; ++j) f[j] = G(r, j) + beta[static_cast<std::size_t>(j)];
    s += lik_.log_density(row_span(Y_, r), as_span(f));
  }
  return s;
}

BackfitSampler::CellProposal BackfitSampler::fit_cell(const std::vector<int>& rows, const RowMatrix& G) const {
  CellProposal q;
  if (leaf_prior_.is_point_mass()) {
    q.kind = CellProposal::Kind::point;
    q.mean = Vector::Zero(D_);
    q.exact = true;
    return q;
  }
  if (leaf_prior_.kind() == LeafPrior::Kind::grid) {
    q.kind = CellProposal::Kind::grid;
    const auto& g = leaf_prior_.grid_values();
    const auto& lw = leaf_prior_.grid_log_weights();
    q.grid_log_prob.resize(g.size());
    for (std::size_t j = 0; j < g.size(); ++j)
      q.grid_log_prob[j] = lw[j] + cell_loglik(rows, G, std::span<const double>(&g[j], 1));
    const double z = log_sum_exp(q.grid_log_prob);
    for (double& v : q.grid_log_prob) v -= z;
    q.exact = true;
    return q;
  }
  const double v0 = prior_var_;
  const double mu0 = prior_mean_;
  const bool gaussian_prior = leaf_prior_.kind() == LeafPrior::Kind::gaussian;
  q.mean = Vector::Constant(D_, mu0);
  q.chol = RowMatrix::Zero(D_, D_);
  if (cfg_.prior_only || lik_.family() == Likelihood::Family::gaussian) {
    double prec = 1.0 / v0;
    if (!cfg_.prior_only) {
      const double s2 = lik_.sigma() * lik_.sigma();
      double sum = 0.0;
      for (int r : rows) sum += Y_(r, 0) - G(r, 0);
      prec += static_cast<double>(rows.size()) / s2;
      q.mean[0] = (sum / s2 + mu0 / v0) / prec;
    }
    for (int j = 0; j < D_; ++j) q.chol(j, j) = 1.0 / std::sqrt(prec);
    q.log_det = -D_ * std::log(prec);
    q.exact = gaussian_prior;
    return q;
  }
  const double clip = std::max(1.0, 3.0 * std::sqrt(v0));
  if (D_ == 1) {
    auto phi = [&](double b) {
      double s = -0.5 * (b - mu0) * (b - mu0) / v0;
      for (int r : rows) s += lik_.log_density1(Y_(r, 0), G(r, 0) + b);
      return s;
    };
    double b = mu0, fb = phi(b), h = 1.0 / v0;
    for (int it = 0; it < 50; ++it) {
      double g = -(b - mu0) / v0;
      h = 1.0 / v0;
      for (int r : rows) {
        const double f = G(r, 0) + b;
        g += lik_.score1(Y_(r, 0), f);
        h += lik_.info1(f);
      }
      const double step = std::clamp(g / h, -clip, clip);
      double t = 1.0, nb = b + step, fn = phi(nb);
      for (int k = 0; k < 30 && !(fn >= fb - 1e-12); ++k) {
        t *= 0.5;
        nb = b + t * step;
        fn = phi(nb);
      }
      b = nb;
      fb = fn;
      if (std::abs(t * step) < 1e-9) break;
    }
    h = 1.0 / v0;
    for (int r : rows) h += lik_.info1(G(r, 0) + b);
    q.mean[0] = b;
    q.chol(0, 0) = 1.0 / std::sqrt(h);
    q.log_det = -std::log(h);
    return q;
  }
  Vector f(D_);
  auto phi = [&](const Vector& b) {
    Vector d = b.array() - mu0;
    return cell_loglik(rows, G, as_span(b)) - 0.5 * d.squaredNorm() / v0;
  };
  auto hessian = [&](const Vector& b) {
    RowMatrix H = RowMatrix::Identity(D_, D_) / v0;
    for (int r : rows) {
      for (int j = 0; j < D_; ++j) f[j] = G(r, j) + b[j];
      H += lik_.fisher_information(as_span(f));
    }
    return H;
  };
  Vector b = q.mean;
  double fb = phi(b);
  for (int it = 0; it < 50; ++it) {
    Vector g = -(b.array() - mu0).matrix() / v0;
    for (int r : rows) {
      for (int j = 0; j < D_; ++j) f[j] = G(r, j) + b[j];
      g += lik_.score(row_span(Y_, r), as_span(f));
    }
    Vector step = hessian(b).llt().solve(g);
    const double m = step.cwiseAbs().maxCoeff();
    if (m > clip) step *= clip / m;
    double t = 1.0;
    Vector nb = b + step;
    double fn = phi(nb);
    for (int k = 0; k < 30 && !(fn >= fb - 1e-12); ++k) {
      t *= 0.5;
      nb = b + t * step;
      fn = phi(nb);
    }
    b = nb;
    fb = fn;
    if (t * step.cwiseAbs().maxCoeff() < 1e-9) break;
  }
  q.mean = b;
  const RowMatrix cov = hessian(b).inverse();
  Eigen::LLT<RowMatrix> llt(cov);
  q.chol = llt.matrixL();
  q.log_det = 0.0;
  for (int j = 0; j < D_; ++j) q.log_det += 2 * std::log(q.chol(j, j));
  return q;
}

double BackfitSampler::log_q(const CellProposal& q, const Vector& beta) const {
  switch (q.kind) {
    case CellProposal::Kind::point: return beta.isZero(0.0) ? 0.0 : kNegInf;
    case CellProposal::Kind::grid: {
      const auto& g = leaf_prior_.grid_values();
      for (std::size_t j = 0; j < g.size(); ++j)
        if (g[j] == beta[0]) return q.grid_log_prob[j];
      return kNegInf;
    }
    case CellProposal::Kind::gaussian: {
      const Vector z = q.chol.triangularView<Eigen::Lower>().solve(beta - q.mean);
      return -0.5 * z.squaredNorm() - 0.5 * q.log_det - 0.5 * D_ * kLogTwoPi;
    }
  }
  return kNegInf;
}

Vector BackfitSampler::draw_q(const CellProposal& q, std::mt19937_64& rng) const {
  switch (q.kind) {
    case CellProposal::Kind::point: return Vector::Zero(D_);
    case CellProposal::Kind::grid: {
      double u = std::uniform_real_distribution<double>(0, 1)(rng);
      const auto& g = leaf_prior_.grid_values();
      Vector out(1);
      out[0] = g.back();
      for (std::size_t j = 0; j < g.size(); ++j) {
        u -= std::exp(q.grid_log_prob[j]);
        if (u < 0) {
          out[0] = g[j];
          break;
        }
      }
      return out;
    }
    case CellProposal::Kind::gaussian: {
      std::normal_distribution<double> nd(0, 1);
      Vector z(D_);
      for (int j = 0; j < D_; ++j) z[j] = nd(rng);
      return q.mean + q.chol * z;
    }
  }
  return Vector::Zero(D_);
}

BackfitSampler::GrowPlan BackfitSampler::plan_grow(int depth, const std::vector<int>& rows, SplitRule rule) const {
  GrowPlan p;
  if (depth >= tree_spec_.max_depth) return p;
  const auto axes = data_.splittable_axes(rows);
  if (std::find(axes.begin(), axes.end(), rule.axis) == axes.end()) return p;
  p.n_axes = static_cast<int>(axes.size());
  p.n_values = data_.count_distinct(rows, rule.axis);
  const auto& X = data_.X();
  for (int r : rows) (X(r, rule.axis) < rule.threshold ? p.left : p.right).push_back(r);
  const auto C = static_cast<std::size_t>(std::max(tree_spec_.validity_constant, 1));
  if (p.left.size() < C || p.right.size() < C) return p;
  p.parent = rows;
  p.possible = true;
  return p;
}

double BackfitSampler::tree_delta_grow(const TreePartition& small, int leaf, const GrowPlan& plan) const {
  if (tree_spec_.kind == TreePriorSpec::Kind::denison) {
    const int K = small.n_leaves();
    const int n = data_.n();
    if (K + 1 > n) return kNegInf;
    return denison_log_pk(tree_spec_.lambda, K + 1) - denison_log_count(data_.q(), n, K + 1) -
           denison_log_pk(tree_spec_.lambda, K) + denison_log_count(data_.q(), n, K);
  }
  const int d = small.node(small.leaf_node(leaf)).depth;
  const double a = tree_spec_.alpha;
  const int cap = tree_spec_.max_depth;
  return chipman_internal_term(a, d, plan.n_axes, plan.n_values) - chipman_leaf_term(a, d, true, cap) +
         chipman_leaf_term(a, d + 1, !data_.splittable_axes(plan.left).empty(), cap) +
         chipman_leaf_term(a, d + 1, !data_.splittable_axes(plan.right).empty(), cap);
}

double BackfitSampler::grow_ratio_core(const TreePartition& small, int leaf, const TreePartition& big,
                                       const GrowPlan& plan, const Vector& parent_value, const Vector& left,
                                       const Vector& right, const CellProposal& q_parent,
                                       const CellProposal& q_left, const CellProposal& q_right,
                                       const RowMatrix& G) const {
  const double ll = cell_loglik(plan.left, G, as_span(left)) + cell_loglik(plan.right, G, as_span(right)) -
                    cell_loglik(plan.parent, G, as_span(parent_value));
  const double lp = leaf_log_prior(left) + leaf_log_prior(right) - leaf_log_prior(parent_value);
  const double dt = tree_delta_grow(small, leaf, plan);
  const double prop = std::log(cfg_.moves.prune) - std::log(static_cast<double>(big.nog_nodes().size())) +
                      log_q(q_parent, parent_value) - std::log(cfg_.moves.grow) +
                      std::log(static_cast<double>(small.n_leaves())) + std::log(static_cast<double>(plan.n_axes)) +
                      std::log(static_cast<double>(plan.n_values)) - log_q(q_left, left) - log_q(q_right, right);
  return ll + lp + dt + prop;
}

double BackfitSampler::grow_log_ratio(int t, int leaf, SplitRule rule, const Vector& left, const Vector& right) const {
  const auto& comp = forest_.tree(t);
  const auto cs = cells(t);
  const int d = comp.tree.node(comp.tree.leaf_node(leaf)).depth;
  const auto& rows = cs[static_cast<std::size_t>(leaf)];
  const auto dr = data_.distinct_ranks(rows, rule.axis);
  const int r = data_.rank_of_value(rule.axis, rule.threshold);
  if (r < 0 || std::find(dr.begin(), dr.end(), r) == dr.end())
    throw std::invalid_argument("rule is not a candidate split for this leaf");
  const GrowPlan plan = plan_grow(d, rows, rule);
  if (!plan.possible) throw std::invalid_argument("grow is not possible");
  const RowMatrix G = other_fit(t);
  const TreePartition big = comp.tree.grow(leaf, rule);
  const Vector parent = comp.leaf_values.row(leaf).transpose();
  return grow_ratio_core(comp.tree, leaf, big, plan, parent, left, right, fit_cell(plan.parent, G),
                         fit_cell(plan.left, G), fit_cell(plan.right, G), G);
}

double BackfitSampler::prune_log_ratio(int t, int node_id, const Vector& merged) const {
  const auto& comp = forest_.tree(t);
  const auto& node = comp.tree.node(node_id);
  if (node.is_leaf() || !comp.tree.node(node.left).is_leaf() || !comp.tree.node(node.right).is_leaf())
    throw std::invalid_argument("prune needs a nog node");
  const auto cs = cells(t);
  const int kl = comp.tree.leaf_number(node.left);
  std::vector<int> parent;
  std::merge(cs[static_cast<std::size_t>(kl)].begin(), cs[static_cast<std::size_t>(kl)].end(),
             cs[static_cast<std::size_t>(kl + 1)].begin(), cs[static_cast<std::size_t>(kl + 1)].end(),
             std::back_inserter(parent));
  const TreePartition small = comp.tree.prune(node_id);
  const GrowPlan plan = plan_grow(node.depth, parent, node.rule);
  if (!plan.possible) throw std::logic_error("existing split is not a valid candidate");
  const RowMatrix G = other_fit(t);
  const Vector bl = comp.leaf_values.row(kl).transpose();
  const Vector br = comp.leaf_values.row(kl + 1).transpose();
  return -grow_ratio_core(small, small.leaf_number(node_id), comp.tree, plan, merged, bl, br,
                          fit_cell(plan.parent, G), fit_cell(plan.left, G), fit_cell(plan.right, G), G);
}

namespace {


bool accept(double log_ratio, std::mt19937_64& rng) {
  const double u = std::uniform_real_distribution<double>(0, 1)(rng);
  // NaN ratios (from inf - inf) reject.
  return std::log(u) < log_ratio;
}

RowMatrix insert_row(const RowMatrix& m, int at, const Vector& a, const Vector& b) {
  RowMatrix out(m.rows() + 1, m.cols());
  out.topRows(at) = m.topRows(at);
  out.row(at) = a.transpose();
  out.row(at + 1) = b.transpose();
  out.bottomRows(m.rows() - at - 1) = m.bottomRows(m.rows() - at - 1);
  return out;
}

RowMatrix remove_row(const RowMatrix& m, int at, const Vector& merged) {
  RowMatrix out(m.rows() - 1, m.cols());
  out.topRows(at) = m.topRows(at);
  out.row(at) = merged.transpose();
  out.bottomRows(m.rows() - at - 2) = m.bottomRows(m.rows() - at - 2);
  return out;
}

}  // namespace

void BackfitSampler::try_grow(int t, const RowMatrix& G, std::vector<std::vector<int>>& cs, std::mt19937_64& rng) {
  auto& comp = forest_.tree(t);
  ++diag_.grow.proposed;
  const int K = comp.tree.n_leaves();
  const int leaf = std::uniform_int_distribution<int>(0, K - 1)(rng);
  const auto& rows = cs[static_cast<std::size_t>(leaf)];
  const int d = comp.tree.node(comp.tree.leaf_node(leaf)).depth;
  if (d >= tree_spec_.max_depth) return;
  const auto axes = data_.splittable_axes(rows);
  if (axes.empty()) return;
  const int axis = pick(axes, rng);
  const int r = pick(data_.distinct_ranks(rows, axis), rng);
  const SplitRule rule{axis, data_.value_of_rank(axis, r)};
  GrowPlan plan = plan_grow(d, rows, rule);
  if (!plan.possible) return;
  TreePartition big = comp.tree.grow(leaf, rule);
  const auto ql = fit_cell(plan.left, G), qr = fit_cell(plan.right, G);
  const Vector bl = draw_q(ql, rng), br = draw_q(qr, rng);
  const Vector bp = comp.leaf_values.row(leaf).transpose();
  const double lr = grow_ratio_core(comp.tree, leaf, big, plan, bp, bl, br, fit_cell(plan.parent, G), ql, qr, G);
  if (!accept(lr, rng)) return;
  tree_log_prior_[static_cast<std::size_t>(t)] += tree_delta_grow(comp.tree, leaf, plan);
  comp.leaf_values = insert_row(comp.leaf_values, leaf, bl, br);
  comp.tree = std::move(big);
  cs[static_cast<std::size_t>(leaf)] = std::move(plan.left);
  cs.insert(cs.begin() + leaf + 1, std::move(plan.right));
  ++diag_.grow.accepted;
}

void BackfitSampler::try_prune(int t, const RowMatrix& G, std::vector<std::vector<int>>& cs, std::mt19937_64& rng) {
  auto& comp = forest_.tree(t);
  ++diag_.prune.proposed;
  const auto nogs = comp.tree.nog_nodes();
  if (nogs.empty()) return;
  const int id = pick(nogs, rng);
  const TreeNode node = comp.tree.node(id);
  const int kl = comp.tree.leaf_number(node.left);
  std::vector<int> parent;
  std::merge(cs[static_cast<std::size_t>(kl)].begin(), cs[static_cast<std::size_t>(kl)].end(),
             cs[static_cast<std::size_t>(kl + 1)].begin(), cs[static_cast<std::size_t>(kl + 1)].end(),
             std::back_inserter(parent));
  GrowPlan plan = plan_grow(node.depth, parent, node.rule);
  if (!plan.possible) throw std::logic_error("existing split is not a valid candidate");
  TreePartition small = comp.tree.prune(id);
  const int leaf = small.leaf_number(id);
  const auto qp = fit_cell(plan.parent, G);
  const Vector bp = draw_q(qp, rng);
  const Vector bl = comp.leaf_values.row(kl).transpose();
  const Vector br = comp.leaf_values.row(kl + 1).transpose();
  const double lr = -grow_ratio_core(small, leaf, comp.tree, plan, bp, bl, br, qp, fit_cell(plan.left, G),
                                     fit_cell(plan.right, G), G);
  if (!accept(lr, rng)) return;
  tree_log_prior_[static_cast<std::size_t>(t)] -= tree_delta_grow(small, leaf, plan);
  comp.leaf_values = remove_row(comp.leaf_values, kl, bp);
  comp.tree = std::move(small);
  cs[static_cast<std::size_t>(kl)] = std::move(plan.parent);
  cs.erase(cs.begin() + kl + 1);
  ++diag_.prune.accepted;
}

void BackfitSampler::try_change(int t, const RowMatrix& G, std::vector<std::vector<int>>& cs, std::mt19937_64& rng) {
  auto& comp = forest_.tree(t);
  ++diag_.change.proposed;
  const auto internal = comp.tree.internal_nodes();
  if (internal.empty()) return;
  const int id = pick(internal, rng);
  const TreeNode node = comp.tree.node(id);
  if (!comp.tree.node(node.left).is_leaf() || !comp.tree.node(node.right).is_leaf()) {
    change_internal(t, id, G, cs, rng);
    return;
  }
  const int kl = comp.tree.leaf_number(node.left);
  const auto& old_l = cs[static_cast<std::size_t>(kl)];
  const auto& old_r = cs[static_cast<std::size_t>(kl + 1)];
  std::vector<int> parent;
  std::merge(old_l.begin(), old_l.end(), old_r.begin(), old_r.end(), std::back_inserter(parent));
  const auto axes = data_.splittable_axes(parent);
  const int axis = pick(axes, rng);
  const int r = pick(data_.distinct_ranks(parent, axis), rng);
  const SplitRule rule{axis, data_.value_of_rank(axis, r)};
  GrowPlan plan = plan_grow(node.depth, parent, rule);
  if (!plan.possible) return;
  const int old_values = data_.count_distinct(parent, node.rule.axis);

  const auto qlo = fit_cell(old_l, G), qro = fit_cell(old_r, G);
  const auto qln = fit_cell(plan.left, G), qrn = fit_cell(plan.right, G);
  const Vector bln = draw_q(qln, rng), brn = draw_q(qrn, rng);
  const Vector blo = comp.leaf_values.row(kl).transpose();
  const Vector bro = comp.leaf_values.row(kl + 1).transpose();

  double dt = 0.0;
  if (tree_spec_.kind == TreePriorSpec::Kind::chipman) {
    const double a = tree_spec_.alpha;
    const int cap = tree_spec_.max_depth;
    const int d = node.depth;
    auto leaf_term = [&](const std::vector<int>& rows) {
      return chipman_leaf_term(a, d + 1, !data_.splittable_axes(rows).empty(), cap);
    };
    dt = chipman_internal_term(a, d, plan.n_axes, plan.n_values) -
         chipman_internal_term(a, d, plan.n_axes, old_values) + leaf_term(plan.left) + leaf_term(plan.right) -
         leaf_term(old_l) - leaf_term(old_r);
  }
  const double ll = cell_loglik(plan.left, G, as_span(bln)) + cell_loglik(plan.right, G, as_span(brn)) -
                    cell_loglik(old_l, G, as_span(blo)) - cell_loglik(old_r, G, as_span(bro));
  const double lp = leaf_log_prior(bln) + leaf_log_prior(brn) - leaf_log_prior(blo) - leaf_log_prior(bro);
  const double prop = log_q(qlo, blo) + log_q(qro, bro) - std::log(static_cast<double>(old_values)) -
                      log_q(qln, bln) - log_q(qrn, brn) + std::log(static_cast<double>(plan.n_values));
  if (!accept(ll + lp + dt + prop, rng)) return;
  tree_log_prior_[static_cast<std::size_t>(t)] += dt;
  comp.tree = comp.tree.change(id, rule);
  comp.leaf_values.row(kl) = bln.transpose();
  comp.leaf_values.row(kl + 1) = brn.transpose();
  cs[static_cast<std::size_t>(kl)] = std::move(plan.left);
  cs[static_cast<std::size_t>(kl + 1)] = std::move(plan.right);
  ++diag_.change.accepted;
}

// New rule at a node with internal descendants; every leaf keeps its value, so with the rule
// drawn from the node's own rows the proposal is symmetric.
void BackfitSampler::change_internal(int t, int id, const RowMatrix& G, std::vector<std::vector<int>>& cs,
                                     std::mt19937_64& rng) {
  auto& comp = forest_.tree(t);
  const TreeNode node = comp.tree.node(id);
  std::vector<int> rows;
  std::vector<bool> below(cs.size(), false);
  for (int k = 0; k < comp.tree.n_leaves(); ++k) {
    int n = comp.tree.leaf_node(k);
    while (n >= 0 && n != id) n = comp.tree.node(n).parent;
    if (n != id) continue;
    below[static_cast<std::size_t>(k)] = true;
    rows.insert(rows.end(), cs[static_cast<std::size_t>(k)].begin(), cs[static_cast<std::size_t>(k)].end());
  }
  std::sort(rows.begin(), rows.end());
  const auto axes = data_.splittable_axes(rows);
  const int axis = pick(axes, rng);
  const int r = pick(data_.distinct_ranks(rows, axis), rng);
  const SplitRule rule{axis, data_.value_of_rank(axis, r)};
  if (rule == node.rule) return;
  TreePartition proposed = comp.tree.change(id, rule);

  std::vector<std::vector<int>> next(cs.size());
  for (std::size_t k = 0; k < cs.size(); ++k)
    if (!below[k]) next[k] = cs[k];
  for (int i : rows) next[static_cast<std::size_t>(proposed.leaf_index(data_.X(), i))].push_back(i);
  for (const auto& c : next)
    if (static_cast<int>(c.size()) < tree_spec_.validity_constant) return;

  const double new_prior = log_prior_tree_process(tree_spec_, proposed, data_);
  if (!std::isfinite(new_prior)) return;
  const double dt = new_prior - tree_log_prior_[static_cast<std::size_t>(t)];
  double ll = 0.0;
  for (std::size_t k = 0; k < cs.size(); ++k) {
    if (!below[k]) continue;
    const Vector b = comp.leaf_values.row(static_cast<Eigen::Index>(k)).transpose();
    ll += cell_loglik(next[k], G, as_span(b)) - cell_loglik(cs[k], G, as_span(b));
  }
  if (!accept(ll + dt, rng)) return;
  tree_log_prior_[static_cast<std::size_t>(t)] = new_prior;
  comp.tree = std::move(proposed);
  cs = std::move(next);
  ++diag_.change.accepted;
}

void BackfitSampler::update_leaves(int t, const RowMatrix& G, const std::vector<std::vector<int>>& cs,
                                   std::mt19937_64& rng, bool burn_in) {
  if (leaf_prior_.is_point_mass()) return;
  auto& vals = forest_.tree(t).leaf_values;
  std::normal_distribution<double> nd(0, 1);
  for (std::size_t k = 0; k < cs.size(); ++k) {
    const auto& rows = cs[k];
    const auto q = fit_cell(rows, G);
    ++diag_.leaf.proposed;
    const bool gibbs = q.kind == CellProposal::Kind::grid ||
                       (q.exact && cfg_.leaf_update == LeafUpdate::automatic);
    if (gibbs) {
      vals.row(static_cast<Eigen::Index>(k)) = draw_q(q, rng).transpose();
      ++diag_.leaf.accepted;
      continue;
    }
    const Vector b = vals.row(static_cast<Eigen::Index>(k)).transpose();
    Vector z(D_);
    for (int j = 0; j < D_; ++j) z[j] = nd(rng);
    const Vector nb = b + std::exp(log_leaf_scale_) * (q.chol * z);
    const double lr = cell_loglik(rows, G, as_span(nb)) + leaf_log_prior(nb) - cell_loglik(rows, G, as_span(b)) -
                      leaf_log_prior(b);
    const bool ok = accept(lr, rng);
    if (ok) {
      vals.row(static_cast<Eigen::Index>(k)) = nb.transpose();
      ++diag_.leaf.accepted;
    }
    if (burn_in && cfg_.adapt) {
      ++rw_updates_;
      const double a = std::isnan(lr) ? 0.0 : std::min(1.0, std::exp(lr));
      log_leaf_scale_ += (a - 0.44) / std::pow(1.0 + static_cast<double>(rw_updates_), 0.6);
    }
  }
}

void BackfitSampler::sweep(std::mt19937_64& rng, bool burn_in) {
  if (forest_.n_trees() == 0) throw std::logic_error("sampler is not initialised");
  const double total = cfg_.moves.grow + cfg_.moves.prune + cfg_.moves.change;
  std::uniform_real_distribution<double> u(0, total);
  for (int t = 0; t < forest_.n_trees(); ++t) {
    const RowMatrix G = other_fit(t);
    auto cs = cells(t);
    if (cfg_.update_structure) {
      const double m = u(rng);
      if (m < cfg_.moves.grow) try_grow(t, G, cs, rng);
      else if (m < cfg_.moves.grow + cfg_.moves.prune) try_prune(t, G, cs, rng);
      else try_change(t, G, cs, rng);
    }
    update_leaves(t, G, cs, rng, burn_in);
    auto& lo = leaf_of_[static_cast<std::size_t>(t)];
    const auto& vals = forest_.tree(t).leaf_values;
    for (std::size_t k = 0; k < cs.size(); ++k)
      for (int r : cs[k]) {
        lo[static_cast<std::size_t>(r)] = static_cast<int>(k);
        fit_.row(r) = G.row(r) + vals.row(static_cast<Eigen::Index>(k));
      }
  }
  diag_.log_posterior.push_back(tracked_log_posterior());
  diag_.final_leaf_scale = leaf_scale();
}

namespace {

struct ChainResult {
  std::vector<Forest> forests;
  std::vector<int> iterations;
  ChainDiagnostics diag;
};

}  // namespace

PosteriorDraws run_chain(const SamplerConfig& cfg, const Likelihood& lik, const TreePriorSpec& tree_spec,
                         const LeafPrior& leaf_prior, const RowMatrix& X, const RowMatrix& Y,
                         const DrawCallback& on_draw) {
  cfg.validate();
  const CovariateIndex data(X);
  const bool direct = on_draw && cfg.chains == 1;
  const bool keep = cfg.store_forests || (on_draw && !direct);
  std::vector<ChainResult> results(static_cast<std::size_t>(cfg.chains));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(cfg.chains));

  auto work = [&](int c) {
    try {
      auto& res = results[static_cast<std::size_t>(c)];
      std::mt19937_64 rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(c)}));
      BackfitSampler s(lik, tree_spec, leaf_prior, data, Y, cfg);
      s.initialize(rng);
      for (int it = 0; it < cfg.n_iter; ++it) {
        s.sweep(rng, it < cfg.burn_in);
        if (it < cfg.burn_in || (it - cfg.burn_in + 1) % cfg.thin != 0) continue;
        if (direct) on_draw(s.forest(), c, it);
        if (keep) {
          res.forests.push_back(s.forest());
          res.iterations.push_back(it);
        }
      }
      res.diag = s.diagnostics();
    } catch (...) {
      errors[static_cast<std::size_t>(c)] = std::current_exception();
    }
  };

  if (cfg.chains == 1) {
    work(0);
  } else {
    std::vector<std::thread> threads;
    for (int c = 0; c < cfg.chains; ++c) threads.emplace_back(work, c);
    for (auto& th : threads) th.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  PosteriorDraws out;
  for (int c = 0; c < cfg.chains; ++c) {
    auto& res = results[static_cast<std::size_t>(c)];
    for (std::size_t i = 0; i < res.forests.size(); ++i) {
      if (on_draw && !direct) on_draw(res.forests[i], c, res.iterations[i]);
      if (cfg.store_forests) {
        out.forests.push_back(std::move(res.forests[i]));
        out.chain_of.push_back(c);
        out.iteration_of.push_back(res.iterations[i]);
      }
    }
    out.chains.push_back(std::move(res.diag));
  }
  return out;
}

}  // namespace gbart
