#include "gbart/likelihoods.hpp"

#include <algorithm>
#include <stdexcept>

namespace gbart {

namespace {

void require_finite(std::span<const double> v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw std::invalid_argument(std::string(what) + " must be finite");
}

// Softmax over (f_1, ..., f_D, 0).
Vector anchored_softmax(std::span<const double> f) {
  const auto d = static_cast<Eigen::Index>(f.size());
  Vector p(d + 1);
  double hi = 0.0;
  for (double v : f) hi = std::max(hi, v);
  double s = std::exp(-hi);
  for (Eigen::Index k = 0; k < d; ++k) {
    p[k] = std::exp(f[k] - hi);
    s += p[k];
  }
  p[d] = std::exp(-hi);
  return p / s;
}

double log_normaliser_softmax(std::span<const double> f) {
  std::vector<double> z(f.begin(), f.end());
  z.push_back(0.0);
  return log_sum_exp(z);
}

}  // namespace

std::string LinkFunction::name() const {
  switch (kind) {
    case LinkKind::identity: return "identity";
    case LinkKind::softplus: return "softplus";
    case LinkKind::exp: return "exp";
    case LinkKind::logistic: return "logistic";
    case LinkKind::softmax: return "softmax";
    case LinkKind::probit: return "probit";
  }
  return "unknown";
}

LinkFunction LinkFunction::parse(const std::string& name) {
  if (name == "identity") return {LinkKind::identity};
  if (name == "softplus") return {LinkKind::softplus};
  if (name == "exp") return {LinkKind::exp};
  if (name == "logistic") return {LinkKind::logistic};
  if (name == "softmax") return {LinkKind::softmax};
  if (name == "probit") return {LinkKind::probit};
  throw std::invalid_argument("unknown link function: " + name);
}

Vector LinkFunction::forward(std::span<const double> f) const {
  if (kind == LinkKind::softmax) return anchored_softmax(f);
  Vector out(static_cast<Eigen::Index>(f.size()));
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double z = f[i];
    double v = z;
    switch (kind) {
      case LinkKind::identity: v = z; break;
      case LinkKind::softplus: v = softplus(z); break;
      case LinkKind::exp: v = std::exp(z); break;
      case LinkKind::logistic: v = sigmoid(z); break;
      case LinkKind::probit: v = normal_cdf(z); break;
      case LinkKind::softmax: break;
    }
    out[static_cast<Eigen::Index>(i)] = v;
  }
  return out;
}

double LinkFunction::inverse(double v) const {
  switch (kind) {
    case LinkKind::identity: return v;
    case LinkKind::softplus:
      if (!(v > 0)) throw std::invalid_argument("softplus inverse needs a positive value");
      return softplus_inverse(v);
    case LinkKind::exp:
      if (!(v > 0)) throw std::invalid_argument("log needs a positive value");
      return std::log(v);
    case LinkKind::logistic:
      if (!(v > 0 && v < 1)) throw std::invalid_argument("logit needs a value in (0,1)");
      return std::log(v / (1 - v));
    default: throw std::invalid_argument("link " + name() + " has no scalar inverse");
  }
}

Likelihood Likelihood::gaussian(double sigma) {
  if (!(sigma > 0) || !std::isfinite(sigma))
    throw std::invalid_argument("gaussian sigma must be positive");
  Likelihood l;
  l.name_ = "gaussian";
  l.family_ = Family::gaussian;
  l.link_ = {LinkKind::identity};
  l.measure_ = DominatingMeasure::lebesgue;
  l.sigma_ = sigma;
  return l;
}

Likelihood Likelihood::multinomial(int n_classes) {
  if (n_classes < 2) throw std::invalid_argument("multinomial needs at least 2 classes");
  Likelihood l;
  l.name_ = "multinomial";
  l.family_ = Family::multinomial;
  l.response_dim_ = n_classes;
  l.natural_dim_ = n_classes - 1;
  l.link_ = {LinkKind::softmax};
  l.measure_ = DominatingMeasure::categorical;
  return l;
}

Likelihood Likelihood::poisson(LinkFunction link) {
  if (link.kind != LinkKind::softplus && link.kind != LinkKind::exp)
    throw std::invalid_argument("poisson supports the softplus and exp links only");
  Likelihood l;
  l.name_ = "poisson";
  l.family_ = Family::poisson;
  l.link_ = link;
  l.measure_ = DominatingMeasure::counting;
  return l;
}

bool Likelihood::natural_map_is_identity() const {
  return !(family_ == Family::poisson && link_.kind == LinkKind::softplus);
}

void Likelihood::check_f(std::span<const double> f) const {
  if (static_cast<int>(f.size()) != natural_dim_)
    throw std::invalid_argument("f has wrong dimension for " + name_);
  require_finite(f, "f");
}

bool Likelihood::in_support(std::span<const double> y) const {
  if (static_cast<int>(y.size()) != response_dim_)
    throw std::invalid_argument("y has wrong dimension for " + name_);
  require_finite(y, "y");
  switch (family_) {
    case Family::gaussian: return true;
    case Family::poisson: return y[0] >= 0 && y[0] == std::floor(y[0]);
    case Family::multinomial: {
      int ones = 0;
      for (double v : y) {
        if (v == 1.0) ++ones;
        else if (v != 0.0) return false;
      }
      return ones == 1;
    }
  }
  return false;
}

double Likelihood::log_h(std::span<const double> y) const {
  if (!in_support(y)) return kNegInf;
  switch (family_) {
    case Family::gaussian:
      return -y[0] * y[0] / (2 * sigma_ * sigma_) - 0.5 * (kLogTwoPi + 2 * std::log(sigma_));
    case Family::poisson: return -std::lgamma(y[0] + 1.0);
    case Family::multinomial: return 0.0;
  }
  return kNegInf;
}

double Likelihood::log_g(std::span<const double> f) const {
  check_f(f);
  switch (family_) {
    case Family::gaussian: return -f[0] * f[0] / (2 * sigma_ * sigma_);
    case Family::multinomial: return -log_normaliser_softmax(f);
    case Family::poisson:
      return link_.kind == LinkKind::exp ? -std::exp(f[0]) : -softplus(f[0]);
  }
  return 0.0;
}

Vector Likelihood::grad_log_g(std::span<const double> f) const {
  check_f(f);
  Vector g(natural_dim_);
  switch (family_) {
    case Family::gaussian: g[0] = -f[0] / (sigma_ * sigma_); break;
    case Family::multinomial: g = -anchored_softmax(f).head(natural_dim_); break;
    case Family::poisson:
      g[0] = link_.kind == LinkKind::exp ? -std::exp(f[0]) : -sigmoid(f[0]);
      break;
  }
  return g;
}

Vector Likelihood::suff_stat(std::span<const double> y) const {
  if (static_cast<int>(y.size()) != response_dim_)
    throw std::invalid_argument("y has wrong dimension for " + name_);
  require_finite(y, "y");
  Vector t(natural_dim_);
  switch (family_) {
    case Family::gaussian: t[0] = y[0] / (sigma_ * sigma_); break;
    case Family::poisson: t[0] = y[0]; break;
    case Family::multinomial:
      for (int k = 0; k < natural_dim_; ++k) t[k] = y[k];
      break;
  }
  return t;
}

Vector Likelihood::natural_parameter(std::span<const double> f) const {
  check_f(f);
  Vector eta = Eigen::Map<const Vector>(f.data(), natural_dim_);
  if (!natural_map_is_identity()) eta[0] = log_softplus(f[0]);
  return eta;
}

double Likelihood::log_density(std::span<const double> y, std::span<const double> f) const {
  check_f(f);
  if (!in_support(y)) return kNegInf;
  switch (family_) {
    case Family::gaussian:
    case Family::poisson: return log_density1(y[0], f[0]);
    case Family::multinomial: {
      double dot = 0.0;
      for (int k = 0; k < natural_dim_; ++k) dot += y[k] * f[k];
      return dot - log_normaliser_softmax(f);
    }
  }
  return kNegInf;
}

double Likelihood::log_density(double y, double f) const {
  return log_density(std::span<const double>(&y, 1), std::span<const double>(&f, 1));
}

double Likelihood::log_density1(double y, double f) const {
  if (family_ == Family::gaussian) {
    const double r = (y - f) / sigma_;
    return -0.5 * r * r - std::log(sigma_) - 0.5 * kLogTwoPi;
  }
  // y log(lambda) is taken as 0 when y = 0 so lambda -> 0 stays finite.
  const double lg = -std::lgamma(y + 1.0);
  if (link_.kind == LinkKind::exp) return lg - std::exp(f) + (y > 0 ? y * f : 0.0);
  return lg - softplus(f) + (y > 0 ? y * log_softplus(f) : 0.0);
}

double Likelihood::score1(double y, double f) const {
  if (family_ == Family::gaussian) return (y - f) / (sigma_ * sigma_);
  if (link_.kind == LinkKind::exp) return y - std::exp(f);
  const double d = sigmoid(f);
  return (y > 0 ? y * d / softplus(f) : 0.0) - d;
}

double Likelihood::info1(double f) const {
  if (family_ == Family::gaussian) return 1.0 / (sigma_ * sigma_);
  if (link_.kind == LinkKind::exp) return std::exp(f);
  const double d = sigmoid(f);
  return d * d / softplus(f);
}

Vector Likelihood::score(std::span<const double> y, std::span<const double> f) const {
  check_f(f);
  if (family_ == Family::poisson && link_.kind == LinkKind::softplus) {
    Vector s(1);
    const double lam = softplus(f[0]);
    const double d = sigmoid(f[0]);
    s[0] = (y[0] > 0 ? y[0] * d / lam : 0.0) - d;
    return s;
  }
  return suff_stat(y) + grad_log_g(f);
}

RowMatrix Likelihood::fisher_information(std::span<const double> f) const {
  check_f(f);
  RowMatrix info = RowMatrix::Zero(natural_dim_, natural_dim_);
  switch (family_) {
    case Family::gaussian: info(0, 0) = 1.0 / (sigma_ * sigma_); break;
    case Family::poisson:
      if (link_.kind == LinkKind::exp) {
        info(0, 0) = std::exp(f[0]);
      } else {
        const double d = sigmoid(f[0]);
        info(0, 0) = d * d / softplus(f[0]);
      }
      break;
    case Family::multinomial: {
      const Vector p = anchored_softmax(f).head(natural_dim_);
      info = -p * p.transpose();
      for (int k = 0; k < natural_dim_; ++k) info(k, k) += p[k];
      break;
    }
  }
  return info;
}

Vector Likelihood::mean(std::span<const double> f) const {
  check_f(f);
  switch (family_) {
    case Family::gaussian: return Vector::Constant(1, f[0]);
    case Family::poisson: return link_.forward(f);
    case Family::multinomial: return anchored_softmax(f);
  }
  return {};
}

Vector Likelihood::sample(std::span<const double> f, std::mt19937_64& rng) const {
  check_f(f);
  Vector y = Vector::Zero(response_dim_);
  switch (family_) {
    case Family::gaussian: y[0] = std::normal_distribution<double>(f[0], sigma_)(rng); break;
    case Family::poisson: {
      const double lam = link_.forward(f)[0];
      y[0] = lam > 0 ? static_cast<double>(std::poisson_distribution<long long>(lam)(rng)) : 0.0;
      break;
    }
    case Family::multinomial: {
      const Vector p = anchored_softmax(f);
      const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
      double c = 0.0;
      int k = response_dim_ - 1;
      for (int j = 0; j < response_dim_; ++j) {
        c += p[j];
        if (u < c) {
          k = j;
          break;
        }
      }
      y[k] = 1.0;
      break;
    }
  }
  return y;
}

Likelihood builtin_gaussian(double sigma) { return Likelihood::gaussian(sigma); }
Likelihood builtin_multinomial(int n_classes) { return Likelihood::multinomial(n_classes); }
Likelihood builtin_poisson(LinkFunction link) { return Likelihood::poisson(link); }

Likelihood make_likelihood(const std::string& name, const std::string& link, double sigma,
                           int n_classes) {
  if (name == "gaussian") return builtin_gaussian(sigma);
  if (name == "multinomial") return builtin_multinomial(n_classes);
  if (name == "poisson") return builtin_poisson(LinkFunction::parse(link.empty() ? "softplus" : link));
  throw std::invalid_argument("unknown likelihood: " + name);
}

Assumption1Certificate certify_assumption1(const Likelihood& lik, double c_beta, int grid) {
  if (grid < 10) throw std::invalid_argument("certify_assumption1 needs grid >= 10");
  if (!(c_beta > 0)) throw std::invalid_argument("c_beta must be positive");
  const int d = lik.natural_dim();
  double total = 1.0;
  for (int k = 0; k < d; ++k) total *= grid;
  if (total > 1e7) throw std::invalid_argument("certify_assumption1 grid too large for this dimension");
  const auto n_points = static_cast<long long>(total);
  std::vector<double> f(static_cast<std::size_t>(d));
  double bound = 0.0;
  for (long long idx = 0; idx < n_points; ++idx) {
    long long r = idx;
    for (int k = 0; k < d; ++k) {
      const int j = static_cast<int>(r % grid);
      r /= grid;
      f[static_cast<std::size_t>(k)] = -c_beta + 2.0 * c_beta * j / (grid - 1);
    }
    const double m = lik.grad_log_g(f).cwiseAbs().maxCoeff();
    bound = std::max(bound, m);
  }
  return {bound, std::isfinite(bound)};
}

Vector ExpandedGaussianForm::eta(double f) const { return Eigen::Vector2d(f, 1.0); }

Vector ExpandedGaussianForm::suff_stat(double y) const {
  const double s2 = sigma * sigma;
  return Eigen::Vector2d(2 * y / s2, -y * y / s2);
}

double ExpandedGaussianForm::log_g(double f) const { return -f * f / (sigma * sigma); }

double ExpandedGaussianForm::grad_log_g(double f) const { return -2 * f / (sigma * sigma); }

double ExpandedGaussianForm::log_kernel(double y, double f) const {
  return log_g(f) + eta(f).dot(suff_stat(y));
}

double total_mass(const Likelihood& lik, std::span<const double> f) {
  switch (lik.family()) {
    case Likelihood::Family::gaussian: {
      const double s = lik.sigma();
      auto dens = [&](double y) { return std::exp(lik.log_density(y, f[0])); };
      return integrate(dens, f[0] - 30 * s, f[0] + 30 * s);
    }
    case Likelihood::Family::poisson: {
      const double lam = lik.mean(f)[0];
      double sum = 0.0;
      for (long long y = 0;; ++y) {
        const double p = std::exp(lik.log_density(static_cast<double>(y), f[0]));
        sum += p;
        // Past the mode the remaining mass is below p * (lam / (y + 1)) / (1 - lam / (y + 1)).
        const double r = lam / static_cast<double>(y + 2);
        if (static_cast<double>(y) > lam && r < 1 && p * r / (1 - r) < 1e-12) break;
        if (y > 100000) break;
      }
      return sum;
    }
    case Likelihood::Family::multinomial: {
      double sum = 0.0;
      Vector y = Vector::Zero(lik.response_dim());
      for (int k = 0; k < lik.response_dim(); ++k) {
        y.setZero();
        y[k] = 1.0;
        sum += std::exp(lik.log_density(as_span(y), f));
      }
      return sum;
    }
  }
  return 0.0;
}

}  // namespace gbart
