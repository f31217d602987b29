#pragma once

#include <random>
#include <string>
#include <vector>

#include "gbart/numeric.hpp"

namespace gbart {

// Distribution of the step heights. Gaussian, Laplace and Beta factorise over coordinates;
// Dirichlet lives on the simplex; Grid is a finite 1-D distribution used for exact checks.
class LeafPrior {
 public:
  enum class Kind { gaussian, laplace, dirichlet, beta, grid };

  static LeafPrior gaussian(double scale, int dim = 1);
  static LeafPrior laplace(double scale, int dim = 1);
  static LeafPrior dirichlet(std::vector<double> concentration);
  static LeafPrior beta(double a, double b, int dim = 1);
  static LeafPrior grid(std::vector<double> values, std::vector<double> weights);
  // Gaussian with scale 3 / (k sqrt(n_trees)).
  static LeafPrior default_for(int n_trees, int dim, double k = 2.0);

  Kind kind() const { return kind_; }
  std::string name() const;
  int dim() const { return dim_; }
  double scale() const { return scale_; }
  bool is_point_mass() const { return kind_ == Kind::gaussian && scale_ == 0.0; }
  bool factorises() const { return kind_ != Kind::dirichlet; }
  const std::vector<double>& grid_values() const { return grid_values_; }
  const std::vector<double>& grid_log_weights() const { return grid_log_weights_; }
  const std::vector<double>& concentration() const { return conc_; }

  double log_density(std::span<const double> beta) const;
  // Per-coordinate density of a factorising prior.
  double log_marginal_density(double b) const;
  double marginal_mean() const;
  double marginal_variance() const;

  Vector sample(std::mt19937_64& rng) const;
  RowMatrix sample_leaf_values(int K, std::mt19937_64& rng) const;

  // P(||beta||_inf <= t), by quadrature for factorising priors and Monte Carlo otherwise.
  double sup_norm_cdf(double t) const;
  // P(||beta||_inf >= t), computed from the tail directly so small values keep precision.
  double sup_norm_tail(double t) const;
  // One-sided P(beta_1 >= t) of a coordinate.
  double coordinate_upper_tail(double t) const;

 private:
  LeafPrior() = default;
  // P(|b| <= t) and P(|b| >= t) for one coordinate by quadrature.
  double coordinate_abs_cdf(double t) const;
  double coordinate_abs_tail(double t) const;
  double mc_sup_norm_cdf(double t) const;

  Kind kind_ = Kind::gaussian;
  int dim_ = 1;
  double scale_ = 1.0;
  double a_ = 1.0, b_ = 1.0;
  std::vector<double> conc_;
  std::vector<double> grid_values_;
  std::vector<double> grid_log_weights_;
};

struct MonteCarloEstimate {
  double estimate = 0.0;
  double standard_error = 0.0;
};

MonteCarloEstimate monte_carlo_sup_norm_cdf(const LeafPrior& prior, double t, int draws,
                                            std::mt19937_64& rng);

struct TailCertificate {
  bool passes = false;
  // Smallest normalised ratio over the grid (lower) or largest (upper).
  double worst_ratio = 0.0;
  // Constant implied by the anchor point.
  double implied_constant = 0.0;
  std::vector<double> t;
  std::vector<double> probability;
  std::vector<double> ratio;
};

// Checks F(||beta||_inf <= t) >= c (e^{-c1 t^c2} t)^p on t_grid in (0, 1], with c fixed by
// the largest t. Passes iff every ratio is positive and, over the smaller half of the grid,
// no step towards smaller t lowers the ratio by more than 5%.
TailCertificate tail_lower_certificate(const LeafPrior& prior, double c1, double c2,
                                       std::vector<double> t_grid);

// Checks F(||beta||_inf >= t) <= c e^{-c3 t} on t_grid >= 1, with c fixed at the smallest t.
// Passes iff, over the larger half of the grid, no step raises the ratio by more than 5%.
TailCertificate tail_upper_certificate(const LeafPrior& prior, double c3, std::vector<double> t_grid);

LeafPrior make_leaf_prior(const std::string& name, int dim, double scale);

}  // namespace gbart
