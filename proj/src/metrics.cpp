#include "gbart/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace gbart {

namespace {

double rate_of(const Likelihood& lik, std::span<const double> f) { return lik.link().forward(f)[0]; }

void check_pair(const Likelihood& lik, std::span<const double> a, std::span<const double> b) {
  if (static_cast<int>(a.size()) != lik.natural_dim() || static_cast<int>(b.size()) != lik.natural_dim())
    throw std::invalid_argument("parameter has wrong dimension for " + lik.name());
}

enum class Which { hellinger, kl, v };

double numeric(const Likelihood& lik, std::span<const double> a, std::span<const double> b, Which which) {
  check_pair(lik, a, b);
  auto summand = [&](double lpa, double lpb) {
    switch (which) {
      case Which::hellinger: return 0.5 * std::pow(std::exp(0.5 * lpa) - std::exp(0.5 * lpb), 2);
      case Which::kl: return lpa == kNegInf ? 0.0 : std::exp(lpa) * (lpa - lpb);
      case Which::v: return lpa == kNegInf ? 0.0 : std::exp(lpa) * (lpa - lpb) * (lpa - lpb);
    }
    return 0.0;
  };
  double total = 0.0;
  switch (lik.family()) {
    case Likelihood::Family::gaussian: {
      const double lo = std::min(a[0], b[0]) - 40 * lik.sigma();
      const double hi = std::max(a[0], b[0]) + 40 * lik.sigma();
      total = integrate([&](double y) { return summand(lik.log_density(y, a[0]), lik.log_density(y, b[0])); }, lo,
                        hi, 1e-10);
      break;
    }
    case Likelihood::Family::poisson: {
      const double la = rate_of(lik, a), lb = rate_of(lik, b);
      if (!(la > 0 && lb > 0)) throw std::invalid_argument("Poisson summation needs positive rates");
      const double lmax = std::max(la, lb);
      const double slope = std::abs(std::log(la / lb));
      for (long long y = 0;; ++y) {
        const double yd = static_cast<double>(y);
        const double lpa = lik.log_density(yd, a[0]), lpb = lik.log_density(yd, b[0]);
        total += summand(lpa, lpb);
        if (yd > lmax + 1) {
          // Envelope of all three summands. The pmfs shrink by lmax / (y + 1) per step and the
          // log ratio grows by at most `slope`, so the envelope ratio is below r.
          const double lr = std::abs(lpa - lpb);
          const double env = std::exp(std::max(lpa, lpb)) * (1 + lr) * (1 + lr);
          const double r = lmax / (yd + 1) * (1 + slope) * (1 + slope);
          if (r < 1 && env * r / (1 - r) < 1e-12) break;
        }
        if (y > 100000000) throw std::runtime_error("Poisson sum did not converge");
      }
      break;
    }
    case Likelihood::Family::multinomial: {
      const int p = lik.response_dim();
      Vector y = Vector::Zero(p);
      for (int k = 0; k < p; ++k) {
        y.setZero();
        y[k] = 1.0;
        total += summand(lik.log_density(as_span(y), a), lik.log_density(as_span(y), b));
      }
      break;
    }
  }
  if (which == Which::hellinger) return std::clamp(total, 0.0, 1.0);
  return std::max(total, 0.0);
}

}  // namespace

double hellinger_sq(const Likelihood& lik, std::span<const double> a, std::span<const double> b) {
  check_pair(lik, a, b);
  switch (lik.family()) {
    case Likelihood::Family::gaussian: {
      const double d = a[0] - b[0], s = lik.sigma();
      return -std::expm1(-d * d / (8 * s * s));
    }
    case Likelihood::Family::poisson: {
      const double d = std::sqrt(rate_of(lik, a)) - std::sqrt(rate_of(lik, b));
      return -std::expm1(-0.5 * d * d);
    }
    case Likelihood::Family::multinomial: {
      const Vector p = lik.link().forward(a), q = lik.link().forward(b);
      return std::clamp(1.0 - (p.array() * q.array()).sqrt().sum(), 0.0, 1.0);
    }
  }
  return 0.0;
}

double kl_divergence(const Likelihood& lik, std::span<const double> a, std::span<const double> b) {
  check_pair(lik, a, b);
  switch (lik.family()) {
    case Likelihood::Family::gaussian: {
      const double d = a[0] - b[0], s = lik.sigma();
      return d * d / (2 * s * s);
    }
    case Likelihood::Family::poisson: {
      const double la = rate_of(lik, a), lb = rate_of(lik, b);
      if (la == 0) return lb;
      return std::max(0.0, la * std::log(la / lb) - (la - lb));
    }
    case Likelihood::Family::multinomial: {
      const Vector p = lik.link().forward(a), q = lik.link().forward(b);
      double s = 0.0;
      for (Eigen::Index k = 0; k < p.size(); ++k)
        if (p[k] > 0) s += p[k] * std::log(p[k] / q[k]);
      return std::max(s, 0.0);
    }
  }
  return 0.0;
}

double v_divergence(const Likelihood& lik, std::span<const double> a, std::span<const double> b) {
  check_pair(lik, a, b);
  switch (lik.family()) {
    case Likelihood::Family::gaussian: {
      // log ratio = K + (d / s) Z under P_a, so E = K^2 + d^2 / s^2 = K^2 + 2K.
      const double K = kl_divergence(lik, a, b);
      return K * K + 2 * K;
    }
    case Likelihood::Family::poisson: {
      const double la = rate_of(lik, a), lb = rate_of(lik, b);
      if (la == 0) return lb * lb;
      // log ratio = y c - d with c = log(la / lb), d = la - lb.
      const double c = std::log(la / lb), d = la - lb;
      return c * c * (la + la * la) - 2 * c * d * la + d * d;
    }
    case Likelihood::Family::multinomial: {
      const Vector p = lik.link().forward(a), q = lik.link().forward(b);
      double s = 0.0;
      for (Eigen::Index k = 0; k < p.size(); ++k)
        if (p[k] > 0) s += p[k] * std::pow(std::log(p[k] / q[k]), 2);
      return s;
    }
  }
  return 0.0;
}

double hellinger_sq_numeric(const Likelihood& lik, std::span<const double> a, std::span<const double> b) {
  return numeric(lik, a, b, Which::hellinger);
}

double kl_divergence_numeric(const Likelihood& lik, std::span<const double> a, std::span<const double> b) {
  return numeric(lik, a, b, Which::kl);
}

double v_divergence_numeric(const Likelihood& lik, std::span<const double> a, std::span<const double> b) {
  return numeric(lik, a, b, Which::v);
}

std::string method_name(DivergenceMethod m) {
  return m == DivergenceMethod::closed_form ? "closed_form" : "quadrature";
}

namespace {

void check_design(const Likelihood& lik, const RowMatrix& F, const RowMatrix& F0) {
  if (F.rows() != F0.rows() || F.cols() != F0.cols()) throw std::invalid_argument("F and F0 must have the same shape");
  if (F.cols() != lik.natural_dim()) throw std::invalid_argument("F has wrong dimension for " + lik.name());
  if (F.rows() < 1) throw std::invalid_argument("need at least one design point");
}

}  // namespace

double hellinger_n(const Likelihood& lik, const RowMatrix& F, const RowMatrix& F0) {
  check_design(lik, F, F0);
  double s = 0.0;
  for (Eigen::Index i = 0; i < F.rows(); ++i) s += std::sqrt(hellinger_sq(lik, row_span(F, i), row_span(F0, i)));
  return s / static_cast<double>(F.rows());
}

double kl_n(const Likelihood& lik, const RowMatrix& F, const RowMatrix& F0) {
  check_design(lik, F, F0);
  double s = 0.0;
  for (Eigen::Index i = 0; i < F.rows(); ++i) s += kl_divergence(lik, row_span(F0, i), row_span(F, i));
  return s / static_cast<double>(F.rows());
}

double v_n(const Likelihood& lik, const RowMatrix& F, const RowMatrix& F0) {
  check_design(lik, F, F0);
  double s = 0.0;
  for (Eigen::Index i = 0; i < F.rows(); ++i) s += v_divergence(lik, row_span(F0, i), row_span(F, i));
  return s / static_cast<double>(F.rows());
}

DivergenceReport divergences(const Likelihood& lik, const RowMatrix& F, const RowMatrix& F0, DivergenceMethod method) {
  check_design(lik, F, F0);
  DivergenceReport r;
  r.method = method;
  const double n = static_cast<double>(F.rows());
  for (Eigen::Index i = 0; i < F.rows(); ++i) {
    const auto f = row_span(F, i), f0 = row_span(F0, i);
    const double h2 = hellinger_sq(lik, f, f0), k = kl_divergence(lik, f0, f), v = v_divergence(lik, f0, f);
    if (method == DivergenceMethod::closed_form) {
      r.hellinger_n += std::sqrt(h2) / n;
      r.kl_n += k / n;
      r.v_n += v / n;
      continue;
    }
    const double h2q = hellinger_sq_numeric(lik, f, f0), kq = kl_divergence_numeric(lik, f0, f),
                 vq = v_divergence_numeric(lik, f0, f);
    r.hellinger_n += std::sqrt(h2q) / n;
    r.kl_n += kq / n;
    r.v_n += vq / n;
    r.error_estimate = std::max({r.error_estimate, std::abs(h2 - h2q), std::abs(k - kq), std::abs(v - vq)});
  }
  return r;
}

double averaged_l2(const RowMatrix& F, const RowMatrix& F0) {
  if (F.rows() != F0.rows() || F.cols() != F0.cols()) throw std::invalid_argument("F and F0 must have the same shape");
  if (F.rows() == 0) throw std::invalid_argument("need at least one design point");
  return std::sqrt((F - F0).squaredNorm() / static_cast<double>(F.rows()));
}

BoundCheck lemma_a2_bound_check(const Likelihood& lik, const TreePartition& tree, const RowMatrix& beta,
                                const RowMatrix& beta0, const RowMatrix& X) {
  if (beta.rows() != tree.n_leaves() || beta0.rows() != tree.n_leaves() || beta.cols() != lik.natural_dim() ||
      beta0.cols() != lik.natural_dim())
    throw std::invalid_argument("leaf values do not match the partition");
  const auto leaf = tree.leaf_assignment(X);
  RowMatrix F(X.rows(), beta.cols()), F0(X.rows(), beta.cols());
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    F.row(i) = beta.row(leaf[static_cast<std::size_t>(i)]);
    F0.row(i) = beta0.row(leaf[static_cast<std::size_t>(i)]);
  }
  const auto d = divergences(lik, F, F0);
  BoundCheck out;
  out.lhs = std::max({d.kl_n, d.v_n, d.hellinger_n});
  const double c_beta = std::max({beta.cwiseAbs().maxCoeff(), beta0.cwiseAbs().maxCoeff(), 1e-3});
  const int grid = lik.natural_dim() == 1 ? 201 : (lik.natural_dim() == 2 ? 101 : 21);
  out.c_g = std::max(certify_assumption1(lik, c_beta, grid).bound, 1.0);
  out.rhs_scaled = out.c_g * (beta - beta0).cwiseAbs().sum();
  out.ratio = out.rhs_scaled > 0 ? out.lhs / out.rhs_scaled : (out.lhs == 0 ? 0.0 : INFINITY);
  return out;
}

}  // namespace gbart
