#pragma once

#include <random>
#include <string>
#include <vector>

#include "gbart/numeric.hpp"

namespace gbart {

enum class LinkKind { identity, softplus, exp, logistic, softmax, probit };
enum class DominatingMeasure { lebesgue, counting, categorical };

struct LinkFunction {
  LinkKind kind = LinkKind::identity;

  std::string name() const;
  // Whether the induced g keeps ||grad log g|| polynomially bounded on growing boxes.
  bool is_assumption1_friendly() const { return kind != LinkKind::exp; }
  // Maps a D-vector to the likelihood's parameter (mean, rate or class probabilities).
  Vector forward(std::span<const double> f) const;
  // Scalar inverse where one exists; throws otherwise.
  double inverse(double v) const;

  static LinkFunction parse(const std::string& name);
};

// Density p(y | f) = h(y) g(f) exp(eta(f) . T(y)) for the builtin families.
class Likelihood {
 public:
  enum class Family { gaussian, multinomial, poisson };

  static Likelihood gaussian(double sigma);
  static Likelihood multinomial(int n_classes);
  static Likelihood poisson(LinkFunction link);

  const std::string& name() const { return name_; }
  Family family() const { return family_; }
  int response_dim() const { return response_dim_; }
  int natural_dim() const { return natural_dim_; }
  int stat_dim() const { return natural_dim_; }
  const LinkFunction& link() const { return link_; }
  DominatingMeasure dominating_measure() const { return measure_; }
  double sigma() const { return sigma_; }
  int n_classes() const { return natural_dim_ + 1; }

  // True when the natural parameter is f itself. Poisson with softplus is the exception.
  bool natural_map_is_identity() const;

  bool in_support(std::span<const double> y) const;
  double log_h(std::span<const double> y) const;
  double log_g(std::span<const double> f) const;
  Vector grad_log_g(std::span<const double> f) const;
  Vector suff_stat(std::span<const double> y) const;
  Vector natural_parameter(std::span<const double> f) const;

  double log_density(std::span<const double> y, std::span<const double> f) const;
  // d/df log p(y | f).
  Vector score(std::span<const double> y, std::span<const double> f) const;
  // Expected negative Hessian of log p(y | f) in f.
  RowMatrix fisher_information(std::span<const double> f) const;
  // Draw y ~ p(. | f).
  Vector sample(std::span<const double> f, std::mt19937_64& rng) const;
  // Response mean E[y | f] as a response_dim vector.
  Vector mean(std::span<const double> f) const;

  // Scalar helpers for D = 1 families.
  double log_density(double y, double f) const;
  // Unchecked fast paths for D = 1 families, used in the sampler's inner loops.
  double log_density1(double y, double f) const;
  double score1(double y, double f) const;
  double info1(double f) const;

 private:
  Likelihood() = default;
  void check_f(std::span<const double> f) const;

  std::string name_;
  Family family_ = Family::gaussian;
  int response_dim_ = 1;
  int natural_dim_ = 1;
  LinkFunction link_;
  DominatingMeasure measure_ = DominatingMeasure::lebesgue;
  double sigma_ = 1.0;
};

Likelihood builtin_gaussian(double sigma);
Likelihood builtin_multinomial(int n_classes);
Likelihood builtin_poisson(LinkFunction link);
Likelihood make_likelihood(const std::string& name, const std::string& link, double sigma,
                           int n_classes);

struct Assumption1Certificate {
  double bound = 0.0;
  bool passes = false;
};

// Max of ||grad log g||_inf over a grid^D lattice on [-c_beta, c_beta]^D.
Assumption1Certificate certify_assumption1(const Likelihood& lik, double c_beta, int grid);

// The two-component Gaussian bookkeeping: eta = (f, 1), T(y) = (2y/s^2, -y^2/s^2),
// g(f) = exp(-f^2/s^2). Kept so that form can be evaluated and compared.
struct ExpandedGaussianForm {
  double sigma = 1.0;
  Vector eta(double f) const;
  Vector suff_stat(double y) const;
  double log_g(double f) const;
  double grad_log_g(double f) const;
  // log g + eta . T without the carrier term.
  double log_kernel(double y, double f) const;
};

// Integral or sum of exp(log_density(., f)) over the response support (D = 1 families and
// multinomial). Used by normalization checks.
double total_mass(const Likelihood& lik, std::span<const double> f);

}  // namespace gbart
