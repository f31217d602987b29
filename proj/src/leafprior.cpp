#include "gbart/leafprior.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace gbart {

namespace {

constexpr int kDirichletMcDraws = 200000;
constexpr std::uint64_t kDirichletMcSeed = 0x5eed'd1c7ULL;

double beta_log_norm(double a, double b) { return std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b); }

}  // namespace

LeafPrior LeafPrior::gaussian(double scale, int dim) {
  if (!(scale >= 0) || !std::isfinite(scale)) throw std::invalid_argument("gaussian leaf scale must be >= 0");
  if (dim < 1) throw std::invalid_argument("leaf prior dim must be >= 1");
  LeafPrior p;
  p.kind_ = Kind::gaussian;
  p.scale_ = scale;
  p.dim_ = dim;
  return p;
}

LeafPrior LeafPrior::laplace(double scale, int dim) {
  if (!(scale > 0) || !std::isfinite(scale)) throw std::invalid_argument("laplace leaf scale must be > 0");
  if (dim < 1) throw std::invalid_argument("leaf prior dim must be >= 1");
  LeafPrior p;
  p.kind_ = Kind::laplace;
  p.scale_ = scale;
  p.dim_ = dim;
  return p;
}

LeafPrior LeafPrior::dirichlet(std::vector<double> concentration) {
  if (concentration.size() < 2) throw std::invalid_argument("dirichlet needs at least 2 components");
  for (double a : concentration)
    if (!(a > 0)) throw std::invalid_argument("dirichlet concentrations must be positive");
  LeafPrior p;
  p.kind_ = Kind::dirichlet;
  p.dim_ = static_cast<int>(concentration.size());
  p.conc_ = std::move(concentration);
  return p;
}

LeafPrior LeafPrior::beta(double a, double b, int dim) {
  if (!(a > 0 && b > 0)) throw std::invalid_argument("beta parameters must be positive");
  if (dim < 1) throw std::invalid_argument("leaf prior dim must be >= 1");
  LeafPrior p;
  p.kind_ = Kind::beta;
  p.a_ = a;
  p.b_ = b;
  p.dim_ = dim;
  return p;
}

LeafPrior LeafPrior::grid(std::vector<double> values, std::vector<double> weights) {
  if (values.empty() || values.size() != weights.size())
    throw std::invalid_argument("grid prior needs matching nonempty values and weights");
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (!(total > 0)) throw std::invalid_argument("grid weights must have positive sum");
  LeafPrior p;
  p.kind_ = Kind::grid;
  p.dim_ = 1;
  p.grid_values_ = std::move(values);
  for (double w : weights) {
    if (w < 0) throw std::invalid_argument("grid weights must be nonnegative");
    p.grid_log_weights_.push_back(std::log(w / total));
  }
  return p;
}

LeafPrior LeafPrior::default_for(int n_trees, int dim, double k) {
  if (n_trees < 1) throw std::invalid_argument("n_trees must be >= 1");
  return gaussian(3.0 / (k * std::sqrt(static_cast<double>(n_trees))), dim);
}

std::string LeafPrior::name() const {
  switch (kind_) {
    case Kind::gaussian: return "gaussian";
    case Kind::laplace: return "laplace";
    case Kind::dirichlet: return "dirichlet";
    case Kind::beta: return "beta";
    case Kind::grid: return "grid";
  }
  return "unknown";
}

double LeafPrior::log_marginal_density(double b) const {
  switch (kind_) {
    case Kind::gaussian:
      if (scale_ == 0) return b == 0 ? 0.0 : kNegInf;
      return -0.5 * (b / scale_) * (b / scale_) - std::log(scale_) - 0.5 * kLogTwoPi;
    case Kind::laplace: return -std::abs(b) / scale_ - std::log(2 * scale_);
    case Kind::beta:
      if (b <= 0 || b >= 1) return kNegInf;
      return beta_log_norm(a_, b_) + (a_ - 1) * std::log(b) + (b_ - 1) * std::log1p(-b);
    case Kind::grid:
      for (std::size_t i = 0; i < grid_values_.size(); ++i)
        if (grid_values_[i] == b) return grid_log_weights_[i];
      return kNegInf;
    case Kind::dirichlet: throw std::logic_error("dirichlet has no per-coordinate density");
  }
  return kNegInf;
}

double LeafPrior::log_density(std::span<const double> beta) const {
  if (static_cast<int>(beta.size()) != dim_) throw std::invalid_argument("leaf value has wrong dimension");
  for (double v : beta)
    if (!std::isfinite(v)) throw std::invalid_argument("leaf value must be finite");
  if (kind_ == Kind::dirichlet) {
    double s = 0.0, lp = 0.0, a0 = 0.0;
    for (std::size_t i = 0; i < beta.size(); ++i) {
      if (!(beta[i] > 0)) return kNegInf;
      s += beta[i];
      a0 += conc_[i];
      lp += (conc_[i] - 1) * std::log(beta[i]) - std::lgamma(conc_[i]);
    }
    if (std::abs(s - 1.0) > 1e-9) return kNegInf;
    return lp + std::lgamma(a0);
  }
  double lp = 0.0;
  for (double v : beta) lp += log_marginal_density(v);
  return lp;
}

double LeafPrior::marginal_mean() const {
  switch (kind_) {
    case Kind::gaussian:
    case Kind::laplace: return 0.0;
    case Kind::beta: return a_ / (a_ + b_);
    case Kind::grid: {
      double m = 0.0;
      for (std::size_t i = 0; i < grid_values_.size(); ++i) m += std::exp(grid_log_weights_[i]) * grid_values_[i];
      return m;
    }
    case Kind::dirichlet: return 1.0 / dim_;
  }
  return 0.0;
}

double LeafPrior::marginal_variance() const {
  switch (kind_) {
    case Kind::gaussian: return scale_ * scale_;
    case Kind::laplace: return 2 * scale_ * scale_;
    case Kind::beta: return a_ * b_ / ((a_ + b_) * (a_ + b_) * (a_ + b_ + 1));
    case Kind::grid: {
      const double m = marginal_mean();
      double v = 0.0;
      for (std::size_t i = 0; i < grid_values_.size(); ++i)
        v += std::exp(grid_log_weights_[i]) * (grid_values_[i] - m) * (grid_values_[i] - m);
      return v;
    }
    case Kind::dirichlet: {
      const double a0 = std::accumulate(conc_.begin(), conc_.end(), 0.0);
      const double a = conc_[0];
      return a * (a0 - a) / (a0 * a0 * (a0 + 1));
    }
  }
  return 0.0;
}

Vector LeafPrior::sample(std::mt19937_64& rng) const {
  Vector out(dim_);
  switch (kind_) {
    case Kind::gaussian: {
      std::normal_distribution<double> nd(0.0, 1.0);
      for (int j = 0; j < dim_; ++j) out[j] = scale_ == 0 ? 0.0 : scale_ * nd(rng);
      break;
    }
    case Kind::laplace: {
      std::exponential_distribution<double> ed(1.0);
      std::uniform_real_distribution<double> u(0, 1);
      for (int j = 0; j < dim_; ++j) out[j] = (u(rng) < 0.5 ? -1 : 1) * scale_ * ed(rng);
      break;
    }
    case Kind::beta: {
      std::gamma_distribution<double> ga(a_, 1.0), gb(b_, 1.0);
      for (int j = 0; j < dim_; ++j) {
        const double x = ga(rng), y = gb(rng);
        out[j] = x / (x + y);
      }
      break;
    }
    case Kind::dirichlet: {
      double s = 0.0;
      for (int j = 0; j < dim_; ++j) {
        out[j] = std::gamma_distribution<double>(conc_[static_cast<std::size_t>(j)], 1.0)(rng);
        s += out[j];
      }
      out /= s;
      break;
    }
    case Kind::grid: {
      std::vector<double> w;
      for (double lw : grid_log_weights_) w.push_back(std::exp(lw));
      std::discrete_distribution<std::size_t> dd(w.begin(), w.end());
      out[0] = grid_values_[dd(rng)];
      break;
    }
  }
  return out;
}

RowMatrix LeafPrior::sample_leaf_values(int K, std::mt19937_64& rng) const {
  if (K < 1) throw std::invalid_argument("sample_leaf_values needs K >= 1");
  RowMatrix out(K, dim_);
  for (int k = 0; k < K; ++k) out.row(k) = sample(rng).transpose();
  return out;
}

double LeafPrior::coordinate_abs_cdf(double t) const {
  if (t < 0) return 0.0;
  auto dens = [this](double b) { return std::exp(log_marginal_density(b)); };
  switch (kind_) {
    case Kind::gaussian:
      if (scale_ == 0) return 1.0;
      return std::min(1.0, 2.0 * integrate(dens, 0.0, t));
    // Symmetric about the kink at 0.
    case Kind::laplace: return std::min(1.0, 2.0 * integrate(dens, 0.0, t));
    case Kind::beta: return std::min(1.0, integrate(dens, 0.0, std::min(t, 1.0)));
    case Kind::grid: {
      double s = 0.0;
      for (std::size_t i = 0; i < grid_values_.size(); ++i)
        if (std::abs(grid_values_[i]) <= t) s += std::exp(grid_log_weights_[i]);
      return s;
    }
    case Kind::dirichlet: break;
  }
  throw std::logic_error("coordinate cdf needs a factorising prior");
}

double LeafPrior::coordinate_upper_tail(double t) const {
  auto dens = [this](double b) { return std::exp(log_marginal_density(b)); };
  switch (kind_) {
    case Kind::gaussian:
    case Kind::laplace: {
      if (scale_ == 0) return t <= 0 ? 1.0 : 0.0;
      if (t < 0) return 1.0 - coordinate_upper_tail(-t);
      const double ft = dens(t);
      if (ft == 0) return 0.0;
      const double width = (kind_ == Kind::gaussian ? 40.0 : 80.0) * scale_;
      return integrate(dens, t, t + width, 1e-10);
    }
    case Kind::beta:
      if (t >= 1) return 0.0;
      return integrate(dens, std::max(t, 0.0), 1.0);
    case Kind::grid: {
      double s = 0.0;
      for (std::size_t i = 0; i < grid_values_.size(); ++i)
        if (grid_values_[i] >= t) s += std::exp(grid_log_weights_[i]);
      return s;
    }
    case Kind::dirichlet: break;
  }
  throw std::logic_error("coordinate tail needs a factorising prior");
}

double LeafPrior::coordinate_abs_tail(double t) const {
  switch (kind_) {
    case Kind::gaussian:
    case Kind::laplace:
      // Symmetric about zero.
      return std::min(1.0, 2.0 * coordinate_upper_tail(t));
    case Kind::beta: return coordinate_upper_tail(t);
    case Kind::grid: {
      double s = 0.0;
      for (std::size_t i = 0; i < grid_values_.size(); ++i)
        if (std::abs(grid_values_[i]) >= t) s += std::exp(grid_log_weights_[i]);
      return s;
    }
    case Kind::dirichlet: break;
  }
  throw std::logic_error("coordinate tail needs a factorising prior");
}

double LeafPrior::mc_sup_norm_cdf(double t) const {
  std::mt19937_64 rng(kDirichletMcSeed);
  return monte_carlo_sup_norm_cdf(*this, t, kDirichletMcDraws, rng).estimate;
}

double LeafPrior::sup_norm_cdf(double t) const {
  if (!factorises()) return mc_sup_norm_cdf(t);
  return std::pow(coordinate_abs_cdf(t), dim_);
}

double LeafPrior::sup_norm_tail(double t) const {
  if (!factorises()) return 1.0 - mc_sup_norm_cdf(t);
  const double p = coordinate_abs_tail(t);
  if (p >= 1.0) return 1.0;
  return -std::expm1(dim_ * std::log1p(-p));
}

MonteCarloEstimate monte_carlo_sup_norm_cdf(const LeafPrior& prior, double t, int draws,
                                            std::mt19937_64& rng) {
  if (draws < 1) throw std::invalid_argument("draws must be >= 1");
  long long hits = 0;
  for (int i = 0; i < draws; ++i) hits += prior.sample(rng).cwiseAbs().maxCoeff() <= t;
  const double p = static_cast<double>(hits) / draws;
  return {p, std::sqrt(std::max(p * (1 - p), 1e-300) / draws)};
}

TailCertificate tail_lower_certificate(const LeafPrior& prior, double c1, double c2,
                                       std::vector<double> t_grid) {
  if (t_grid.empty()) throw std::invalid_argument("t_grid must be nonempty");
  if (!(c1 > 0) || !(c2 > 0 && c2 <= 2)) throw std::invalid_argument("need c1 > 0 and c2 in (0, 2]");
  std::sort(t_grid.begin(), t_grid.end());
  TailCertificate c;
  c.t = t_grid;
  const int p = prior.dim();
  std::vector<double> raw;
  for (double t : t_grid) {
    const double F = prior.sup_norm_cdf(t);
    const double bound = std::pow(std::exp(-c1 * std::pow(t, c2)) * t, p);
    c.probability.push_back(F);
    raw.push_back(F / bound);
  }
  c.implied_constant = raw.back();
  bool ok = std::isfinite(c.implied_constant) && c.implied_constant > 0;
  for (double r : raw) {
    const double v = ok ? r / c.implied_constant : 0.0;
    c.ratio.push_back(v);
    if (!(v > 0) || !std::isfinite(v)) ok = false;
  }
  const std::size_t m = c.ratio.size();
  const std::size_t half = std::max<std::size_t>(1, m / 2);
  for (std::size_t i = 0; ok && i < half && i + 1 < m; ++i)
    if (c.ratio[i] < 0.95 * c.ratio[i + 1]) ok = false;
  c.passes = ok;
  c.worst_ratio = c.ratio.empty() ? 0.0 : *std::min_element(c.ratio.begin(), c.ratio.end());
  return c;
}

TailCertificate tail_upper_certificate(const LeafPrior& prior, double c3, std::vector<double> t_grid) {
  if (t_grid.empty()) throw std::invalid_argument("t_grid must be nonempty");
  if (!(c3 > 0)) throw std::invalid_argument("need c3 > 0");
  std::sort(t_grid.begin(), t_grid.end());
  TailCertificate c;
  c.t = t_grid;
  for (double t : t_grid) c.probability.push_back(prior.sup_norm_tail(t));
  const double anchor = c.probability.front() * std::exp(c3 * t_grid.front());
  c.implied_constant = anchor;
  if (anchor == 0.0) {
    c.ratio.assign(t_grid.size(), 0.0);
    c.passes = true;
    c.worst_ratio = 0.0;
    return c;
  }
  for (std::size_t i = 0; i < t_grid.size(); ++i)
    c.ratio.push_back(c.probability[i] * std::exp(c3 * t_grid[i]) / anchor);
  const std::size_t m = c.ratio.size();
  const std::size_t half = std::max<std::size_t>(1, m / 2);
  bool ok = true;
  for (std::size_t i = m > half ? m - 1 - half : 0; i + 1 < m; ++i)
    if (c.ratio[i + 1] > 1.05 * c.ratio[i]) ok = false;
  for (double r : c.ratio)
    if (!std::isfinite(r)) ok = false;
  c.passes = ok;
  c.worst_ratio = *std::max_element(c.ratio.begin(), c.ratio.end());
  return c;
}

LeafPrior make_leaf_prior(const std::string& name, int dim, double scale) {
  if (name == "gaussian") return LeafPrior::gaussian(scale, dim);
  if (name == "laplace") return LeafPrior::laplace(scale, dim);
  if (name == "beta22") return LeafPrior::beta(2.0, 2.0, dim);
  if (name == "dirichlet") return LeafPrior::dirichlet(std::vector<double>(static_cast<std::size_t>(dim), 2.0));
  throw std::invalid_argument("unknown leaf prior: " + name);
}

}  // namespace gbart
