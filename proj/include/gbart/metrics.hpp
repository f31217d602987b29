#pragma once

#include <string>

#include "gbart/likelihoods.hpp"
#include "gbart/tree.hpp"

namespace gbart {

// Pointwise divergences between P_a = p(. | f = a) and P_b. Hellinger is normalised so that
// h^2 = 1 - integral sqrt(p_a p_b) lies in [0, 1] (the unnormalised distance is sqrt(2) h).
double hellinger_sq(const Likelihood& lik, std::span<const double> a, std::span<const double> b);
// K(P_a, P_b) = E_a log(p_a / p_b)
double kl_divergence(const Likelihood& lik, std::span<const double> a, std::span<const double> b);
// V(P_a, P_b) = E_a (log(p_a / p_b))^2, not centred.
double v_divergence(const Likelihood& lik, std::span<const double> a, std::span<const double> b);

// Same quantities by integration over the response: adaptive Gauss-Kronrod for the Gaussian, a
// truncated sum for the Poisson (stopped once the tail bound is below 1e-12), exact sums for
// the multinomial.
double hellinger_sq_numeric(const Likelihood& lik, std::span<const double> a, std::span<const double> b);
double kl_divergence_numeric(const Likelihood& lik, std::span<const double> a, std::span<const double> b);
double v_divergence_numeric(const Likelihood& lik, std::span<const double> a, std::span<const double> b);

enum class DivergenceMethod { closed_form, quadrature };

std::string method_name(DivergenceMethod m);

struct DivergenceReport {
  double hellinger_n = 0.0;
  double kl_n = 0.0;
  double v_n = 0.0;
  DivergenceMethod method = DivergenceMethod::closed_form;
  // Largest pointwise gap between the closed form and quadrature when both were computed.
  double error_estimate = 0.0;
};

// F and F0 hold f and f0 at the n design points (n x D). H_n = mean_i h(P_f(X_i), P_f0(X_i));
// K_n and V_n average K(P_f0(X_i), P_f(X_i)) and V(P_f0(X_i), P_f(X_i)).
double hellinger_n(const Likelihood& lik, const RowMatrix& F, const RowMatrix& F0);
double kl_n(const Likelihood& lik, const RowMatrix& F, const RowMatrix& F0);
double v_n(const Likelihood& lik, const RowMatrix& F, const RowMatrix& F0);
DivergenceReport divergences(const Likelihood& lik, const RowMatrix& F, const RowMatrix& F0,
                             DivergenceMethod method = DivergenceMethod::closed_form);

// sqrt(mean_i ||F_i - F0_i||^2)
double averaged_l2(const RowMatrix& F, const RowMatrix& F0);

struct BoundCheck {
  double lhs = 0.0;
  double rhs_scaled = 0.0;
  double ratio = 0.0;
  double c_g = 0.0;
};

// For step functions f = beta and f0 = beta0 on the same tree: lhs = max(K_n, V_n, H_n) and
// rhs = C_g * sum_k ||beta_k - beta0_k||_1 with C_g the gradient bound of log g on the box
// covering both sets of leaf values.
BoundCheck lemma_a2_bound_check(const Likelihood& lik, const TreePartition& tree, const RowMatrix& beta,
                                const RowMatrix& beta0, const RowMatrix& X);

}  // namespace gbart
