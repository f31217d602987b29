#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "gbart/forest.hpp"
#include "gbart/leafprior.hpp"
#include "gbart/likelihoods.hpp"
#include "gbart/tree.hpp"

namespace gbart {

struct MoveProbabilities {
  double grow = 0.4;
  double prune = 0.4;
  double change = 0.2;
};

enum class LeafUpdate {
  // Exact draws when the leaf conditional is available in closed form, otherwise random walk.
  automatic,
  random_walk,
};

struct SamplerConfig {
  int n_iter = 2000;
  int burn_in = 500;
  int thin = 5;
  MoveProbabilities moves;
  // Multiplier on the Laplace-approximation standard deviation for random-walk leaf steps.
  double leaf_proposal_scale = 1.0;
  std::uint64_t seed = 42;
  int chains = 1;
  int n_trees = 50;
  bool update_structure = true;
  // Tune the random-walk multiplier towards 44% acceptance during burn-in only.
  bool adapt = true;
  // Drop the likelihood; covariates are still used for splits and validity.
  bool prior_only = false;
  LeafUpdate leaf_update = LeafUpdate::automatic;
  bool store_forests = true;

  void validate() const;
  int stored_draws() const { return (n_iter - burn_in) / thin; }
};

struct MoveStats {
  long long proposed = 0;
  long long accepted = 0;
  double rate() const { return proposed ? static_cast<double>(accepted) / static_cast<double>(proposed) : 0.0; }
};

struct ChainDiagnostics {
  MoveStats grow, prune, change, leaf;
  // One entry per iteration, burn-in included.
  std::vector<double> log_posterior;
  double final_leaf_scale = 1.0;
};

struct PosteriorDraws {
  std::vector<Forest> forests;
  std::vector<int> chain_of;
  std::vector<int> iteration_of;
  std::vector<ChainDiagnostics> chains;
};

double log_likelihood(const Likelihood& lik, const Forest& forest, const RowMatrix& X, const RowMatrix& Y);

class BackfitSampler {
 public:
  BackfitSampler(const Likelihood& lik, TreePriorSpec tree_spec, LeafPrior leaf_prior,
                 const CovariateIndex& data, const RowMatrix& Y, SamplerConfig cfg);

  // Root-only trees with leaf values at the link-scale response anchor. Under the Chipman
  // prior a root-only tree has prior probability zero, so each tree instead starts from one
  // root split drawn from an approximate conditional posterior given the earlier trees, with
  // leaf values at the cell modes (uniform split and anchor values when prior-only).
  void initialize(std::mt19937_64& rng);
  void set_forest(Forest forest);
  // One backfitting pass over all trees.
  void sweep(std::mt19937_64& rng, bool burn_in);

  const Forest& forest() const { return forest_; }
  const ChainDiagnostics& diagnostics() const { return diag_; }
  double leaf_scale() const { return std::exp(log_leaf_scale_); }
  // Recomputed from scratch.
  double log_posterior() const;
  // Uses the incrementally maintained tree priors.
  double tracked_log_posterior() const;

  // Metropolis-Hastings log ratio for growing `leaf` of tree t with `rule` and child values,
  // and for pruning nog node `node_id` to `merged`. A grow and its inverse prune sum to zero.
  double grow_log_ratio(int t, int leaf, SplitRule rule, const Vector& left, const Vector& right) const;
  double prune_log_ratio(int t, int node_id, const Vector& merged) const;

 private:
  struct CellProposal {
    enum class Kind { gaussian, grid, point } kind = Kind::gaussian;
    Vector mean;
    RowMatrix chol;  // lower Cholesky factor of the covariance
    double log_det = 0.0;
    std::vector<double> grid_log_prob;
    bool exact = false;
  };
  struct GrowPlan {
    bool possible = false;
    std::vector<int> parent, left, right;
    int n_axes = 0;
    int n_values = 0;
  };

  RowMatrix other_fit(int t) const;
  std::vector<std::vector<int>> cells(int t) const;
  double cell_loglik(const std::vector<int>& rows, const RowMatrix& G, std::span<const double> beta) const;
  CellProposal fit_cell(const std::vector<int>& rows, const RowMatrix& G) const;
  double log_q(const CellProposal& q, const Vector& beta) const;
  Vector draw_q(const CellProposal& q, std::mt19937_64& rng) const;
  double leaf_log_prior(const Vector& beta) const { return leaf_prior_.log_density(as_span(beta)); }

  GrowPlan plan_grow(int depth, const std::vector<int>& rows, SplitRule rule) const;
  double tree_delta_grow(const TreePartition& small, int leaf, const GrowPlan& plan) const;
  double grow_ratio_core(const TreePartition& small, int leaf, const TreePartition& big, const GrowPlan& plan,
                         const Vector& parent_value, const Vector& left, const Vector& right,
                         const CellProposal& q_parent, const CellProposal& q_left,
                         const CellProposal& q_right, const RowMatrix& G) const;

  void try_grow(int t, const RowMatrix& G, std::vector<std::vector<int>>& cells, std::mt19937_64& rng);
  void try_prune(int t, const RowMatrix& G, std::vector<std::vector<int>>& cells, std::mt19937_64& rng);
  void try_change(int t, const RowMatrix& G, std::vector<std::vector<int>>& cells, std::mt19937_64& rng);
  void change_internal(int t, int id, const RowMatrix& G, std::vector<std::vector<int>>& cells,
                       std::mt19937_64& rng);
  void update_leaves(int t, const RowMatrix& G, const std::vector<std::vector<int>>& cells,
                     std::mt19937_64& rng, bool burn_in);
  Vector initial_leaf_value() const;
  bool initial_root_split(const RowMatrix& G, const std::vector<int>& all, const std::vector<int>& axes,
                          TreePartition& tree, RowMatrix& beta, std::mt19937_64& rng) const;

  Likelihood lik_;
  TreePriorSpec tree_spec_;
  LeafPrior leaf_prior_;
  const CovariateIndex& data_;
  const RowMatrix& Y_;
  SamplerConfig cfg_;
  int D_;
  double prior_mean_;
  double prior_var_;

  Forest forest_;
  RowMatrix fit_;
  std::vector<std::vector<int>> leaf_of_;
  std::vector<double> tree_log_prior_;
  ChainDiagnostics diag_;
  double log_leaf_scale_ = 0.0;
  long long rw_updates_ = 0;
};

using DrawCallback = std::function<void(const Forest&, int chain, int iteration)>;

// Runs cfg.chains chains (each on its own thread with a seed derived from cfg.seed) and merges
// their stored draws in chain order. The callback sees every stored draw in that order.
PosteriorDraws run_chain(const SamplerConfig& cfg, const Likelihood& lik, const TreePriorSpec& tree_spec,
                         const LeafPrior& leaf_prior, const RowMatrix& X, const RowMatrix& Y,
                         const DrawCallback& on_draw = {});

}  // namespace gbart
