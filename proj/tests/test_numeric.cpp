#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"
#include "gbart/numeric.hpp"

using namespace gbart;

TEST_CASE("softplus and its inverse") {
  for (double x : {-50.0, -30.5, -5.0, -1e-3, 0.0, 0.7, 12.0, 40.0, 700.0}) {
    const double naive = std::log(1.0 + std::exp(x));
    if (x < 30) CHECK(softplus(x) == doctest::Approx(naive).epsilon(1e-12));
    CHECK(softplus_inverse(softplus(x)) == doctest::Approx(x).epsilon(1e-10));
    CHECK(log_softplus(x) == doctest::Approx(std::log(softplus(x))).epsilon(1e-12));
  }
  CHECK(std::isfinite(softplus(1000.0)));
  CHECK(softplus(-800.0) >= 0.0);
  CHECK(log_softplus(-800.0) == doctest::Approx(-800.0));
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(sigmoid(-800.0) >= 0.0);
  CHECK(sigmoid(3.0) + sigmoid(-3.0) == doctest::Approx(1.0));
}

TEST_CASE("log-sum-exp") {
  const std::vector<double> v{1.0, 2.0, 3.0};
  CHECK(log_sum_exp(v) == doctest::Approx(std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0))));
  const std::vector<double> big{1000.0, 1000.0};
  CHECK(log_sum_exp(big) == doctest::Approx(1000.0 + std::log(2.0)));
  const std::vector<double> empty_mass{kNegInf, kNegInf};
  CHECK(log_sum_exp(empty_mass) == kNegInf);
}

TEST_CASE("quadrature") {
  CHECK(integrate([](double x) { return x * x; }, 0, 3) == doctest::Approx(9.0).epsilon(1e-12));
  const double gauss = integrate([](double x) { return std::exp(-0.5 * x * x); }, -12, 12);
  CHECK(std::abs(gauss - std::sqrt(2 * M_PI)) < 1e-9);
  CHECK(integrate([](double x) { return std::sin(x); }, 0, M_PI) == doctest::Approx(2.0).epsilon(1e-10));
}

TEST_CASE("normal cdf") {
  CHECK(normal_cdf(0.0) == 0.5);
  CHECK(normal_cdf(1.959963984540054) == doctest::Approx(0.975).epsilon(1e-12));
  CHECK(normal_cdf(-1.0) + normal_cdf(1.0) == doctest::Approx(1.0));
}

TEST_CASE("derived seeds") {
  CHECK(derive_seed(1, {0, 2}) == derive_seed(1, {0, 2}));
  std::set<std::uint64_t> seen;
  for (std::uint64_t base : {1, 2})
    for (std::uint64_t a = 0; a < 4; ++a)
      for (std::uint64_t b = 0; b < 4; ++b) seen.insert(derive_seed(base, {a, b}));
  CHECK(seen.size() == 32);
  CHECK(derive_seed(1, {1, 2}) != derive_seed(1, {2, 1}));
  CHECK(derive_seed(1, {0}) != derive_seed(1, {0, 0}));
  CHECK(mix64(0) != 0);
}
