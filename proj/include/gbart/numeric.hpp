#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <span>

#include <Eigen/Dense>

namespace gbart {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr double kLogTwoPi = 1.8378770664093454835606594728112;

inline std::span<const double> row_span(const RowMatrix& m, Eigen::Index i) {
  return {m.data() + i * m.cols(), static_cast<std::size_t>(m.cols())};
}
inline std::span<double> row_span(RowMatrix& m, Eigen::Index i) {
  return {m.data() + i * m.cols(), static_cast<std::size_t>(m.cols())};
}

inline std::span<const double> as_span(const Vector& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

// log(1 + e^x) without overflow.
inline double softplus(double x) {
  if (x > 0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// log(softplus(x)); accurate for very negative x where softplus(x) ~ e^x.
inline double log_softplus(double x) {
  if (x < -30.0) return x - 0.5 * std::exp(x);
  return std::log(softplus(x));
}

// Inverse of softplus for v > 0.
inline double softplus_inverse(double v) {
  if (v > 30.0) return v + std::log1p(-std::exp(-v));
  return std::log(std::expm1(v));
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double log_sum_exp(std::span<const double> values);

// Adaptive Gauss-Kronrod quadrature of f on [a, b] (Boost.Math), relative tolerance `tol`.
double integrate(const std::function<double(double)>& f, double a, double b, double tol = 1e-10);

// SplitMix64 finaliser; used to derive independent stream seeds.
std::uint64_t mix64(std::uint64_t x);

// Derive a child seed from a base seed and a list of integer tags.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags);

}  // namespace gbart
