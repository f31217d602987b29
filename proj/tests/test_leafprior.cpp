#include <cmath>
#include <random>

#include "doctest.h"
#include "gbart/leafprior.hpp"
#include "oracles.hpp"

using namespace gbart;

namespace {

const std::vector<double> kSmallT{1e-4, 1e-3, 1e-2, 1e-1, 1.0};
const std::vector<double> kLargeT{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};

}  // namespace

TEST_CASE("gaussian and laplace satisfy both tail conditions") {
  const auto g = LeafPrior::gaussian(1.0);
  const auto l = LeafPrior::laplace(1.0);
  const auto gl = tail_lower_certificate(g, 0.5, 2.0, kSmallT);
  CHECK(gl.passes);
  CHECK(gl.worst_ratio > 0.5);
  CHECK(tail_lower_certificate(l, 1.0, 1.0, kSmallT).passes);
  CHECK(tail_upper_certificate(g, 1.0, kLargeT).passes);
  CHECK(tail_upper_certificate(l, 1.0, kLargeT).passes);
  // Two dimensions: exponent p in the bound.
  CHECK(tail_lower_certificate(LeafPrior::gaussian(1.0, 2), 0.5, 2.0, kSmallT).passes);
  CHECK(tail_lower_certificate(LeafPrior::laplace(1.0, 2), 1.0, 1.0, kSmallT).passes);
  CHECK(tail_upper_certificate(LeafPrior::laplace(1.0, 2), 1.0, kLargeT).passes);
}

TEST_CASE("beta(2,2) fails the lower tail condition") {
  const auto b = LeafPrior::beta(2.0, 2.0);
  const std::vector<double> t{1e-4, 1e-3, 1e-2, 1e-1};
  const auto c = tail_lower_certificate(b, 1.0, 1.0, t);
  CHECK_FALSE(c.passes);
  // CDF oracle: F(t) = 3t^2 - 2t^3.
  for (std::size_t i = 0; i < t.size(); ++i)
    CHECK(c.probability[i] == doctest::Approx(3 * t[i] * t[i] - 2 * t[i] * t[i] * t[i]).epsilon(1e-8));
  // Ratio vanishes monotonically as t shrinks.
  for (std::size_t i = 0; i + 1 < c.ratio.size(); ++i) CHECK(c.ratio[i] < c.ratio[i + 1]);
  CHECK(c.worst_ratio < 0.01);
}

TEST_CASE("laplace exceeding its exponential rate fails the upper condition") {
  CHECK_FALSE(tail_upper_certificate(LeafPrior::laplace(1.0), 2.0, kLargeT).passes);
}

TEST_CASE("tail values") {
  const auto l = LeafPrior::laplace(1.0);
  CHECK(l.coordinate_upper_tail(1.0) == doctest::Approx(std::exp(-1.0) / 2).epsilon(1e-9));
  CHECK(l.coordinate_upper_tail(1.0) == doctest::Approx(0.1839).epsilon(1e-3));
  CHECK(l.sup_norm_tail(3.0) == doctest::Approx(std::exp(-3.0)).epsilon(1e-9));
  const auto g = LeafPrior::gaussian(1.0);
  CHECK(g.sup_norm_tail(2.0) == doctest::Approx(2 * (1 - oracle::normal_cdf(2.0))).epsilon(1e-9));
  CHECK(g.sup_norm_tail(2.0) == doctest::Approx(0.0455).epsilon(1e-2));
  CHECK(g.sup_norm_tail(8.0) == doctest::Approx(std::erfc(8.0 / std::sqrt(2.0))).epsilon(1e-7));
  CHECK(g.sup_norm_cdf(1.0) == doctest::Approx(std::erf(1.0 / std::sqrt(2.0))).epsilon(1e-10));
  const auto g2 = LeafPrior::gaussian(2.0, 3);
  const double p1 = std::erf(1.5 / (2.0 * std::sqrt(2.0)));
  CHECK(g2.sup_norm_cdf(1.5) == doctest::Approx(p1 * p1 * p1).epsilon(1e-10));
  // The constant is fixed by the t = 1 anchor.
  const auto cert = tail_upper_certificate(g, 1.0, kLargeT);
  CHECK(cert.implied_constant == doctest::Approx(2 * (1 - oracle::normal_cdf(1.0)) * std::exp(1.0)).epsilon(1e-8));
}

TEST_CASE("point mass") {
  const auto z = LeafPrior::gaussian(0.0);
  std::mt19937_64 rng(1);
  CHECK(z.sample_leaf_values(5, rng).isZero());
  const auto c = tail_upper_certificate(z, 1.0, kLargeT);
  CHECK(c.passes);
  CHECK(c.worst_ratio == 0.0);
  CHECK(z.is_point_mass());
}

TEST_CASE("gaussian sample moments") {
  const auto g = LeafPrior::gaussian(1.0);
  std::mt19937_64 rng(42);
  const auto v = g.sample_leaf_values(100000, rng);
  std::vector<double> xs(v.data(), v.data() + v.size());
  const double m = oracle::mean(xs);
  const double s2 = oracle::variance(xs);
  CHECK(std::abs(m) < 3 / std::sqrt(1e5));
  // Var of the sample variance of normals: 2 sigma^4 / (n - 1).
  CHECK(std::abs(s2 - 1.0) < 3 * std::sqrt(2.0 / (1e5 - 1)));
}

TEST_CASE("dirichlet") {
  const auto d = LeafPrior::dirichlet({2.0, 2.0});
  std::mt19937_64 rng(3);
  for (int i = 0; i < 1000; ++i) {
    const auto s = d.sample(rng);
    CHECK(s.sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK((s.array() > 0).all());
  }
  const auto d3 = LeafPrior::dirichlet({1.5, 1.5, 1.5});
  const std::vector<double> a{0.2, 0.5, 0.3}, b{0.5, 0.3, 0.2};
  CHECK(std::abs(d3.log_density(a) - d3.log_density(b)) < 1e-12);
  // Dirichlet(1,1,1) is uniform on the simplex with density Gamma(3) = 2.
  const auto u = LeafPrior::dirichlet({1.0, 1.0, 1.0});
  CHECK(u.log_density(a) == doctest::Approx(std::log(2.0)));
  const std::vector<double> off{0.2, 0.2, 0.2};
  CHECK(u.log_density(off) == -INFINITY);
  // Monte Carlo sup-norm CDF for Dirichlet(1,1): max(b, 1-b) <= t has probability 2t - 1.
  const auto d2 = LeafPrior::dirichlet({1.0, 1.0});
  CHECK(std::abs(d2.sup_norm_cdf(0.8) - 0.6) < 4 * std::sqrt(0.24 / 200000));
}

TEST_CASE("monte carlo and quadrature CDFs agree") {
  std::mt19937_64 rng(17);
  for (const auto& prior : {LeafPrior::gaussian(1.0), LeafPrior::laplace(0.7, 2), LeafPrior::beta(2, 2)}) {
    for (double t : {0.05, 0.3, 0.9}) {
      const auto mc = monte_carlo_sup_norm_cdf(prior, t, 50000, rng);
      CHECK(std::abs(mc.estimate - prior.sup_norm_cdf(t)) < 3 * mc.standard_error + 1e-12);
    }
  }
}

TEST_CASE("densities integrate to one") {
  for (const auto& prior : {LeafPrior::gaussian(0.8), LeafPrior::laplace(1.3), LeafPrior::beta(2, 2)}) {
    auto f = [&](double b) { return std::exp(prior.log_marginal_density(b)); };
    const double lo = prior.kind() == LeafPrior::Kind::beta ? 0.0 : -40.0;
    const double hi = prior.kind() == LeafPrior::Kind::beta ? 1.0 : 40.0;
    CHECK(integrate(f, lo, hi, 1e-12) == doctest::Approx(1.0).epsilon(1e-6));
  }
  // Two dimensions: product of marginal integrals via nested quadrature.
  const auto l2 = LeafPrior::laplace(1.0, 2);
  auto inner = [&](double x) {
    return integrate(
        [&](double y) {
          const std::vector<double> b{x, y};
          return std::exp(l2.log_density(b));
        },
        -30, 30, 1e-10);
  };
  CHECK(integrate(inner, -30, 30, 1e-8) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("grid prior") {
  const auto g = LeafPrior::grid({-1, 0, 1}, {1, 2, 1});
  const double z = 0.0, h = 0.5;
  CHECK(g.log_density(std::span<const double>(&z, 1)) == doctest::Approx(std::log(0.5)));
  CHECK(g.log_density(std::span<const double>(&h, 1)) == -INFINITY);
  CHECK(g.marginal_variance() == doctest::Approx(0.5));
}

TEST_CASE("default leaf prior and argument checks") {
  const auto d = LeafPrior::default_for(9, 1);
  CHECK(d.scale() == doctest::Approx(0.5));
  CHECK_THROWS_AS(LeafPrior::gaussian(-1), std::invalid_argument);
  CHECK_THROWS_AS(LeafPrior::laplace(0), std::invalid_argument);
  CHECK_THROWS_AS(LeafPrior::dirichlet({1.0}), std::invalid_argument);
  CHECK_THROWS_AS(tail_lower_certificate(d, 1, 1, {}), std::invalid_argument);
  CHECK_THROWS_AS(make_leaf_prior("cauchy", 1, 1), std::invalid_argument);
}
