#pragma once

#include <limits>
#include <random>
#include <string>
#include <vector>

#include "gbart/likelihoods.hpp"
#include "gbart/numeric.hpp"

namespace gbart {

enum class TruthKind { step, monotone, hoelder };

std::string truth_kind_name(TruthKind k);
TruthKind parse_truth_kind(const std::string& s);

// Half-open box [lo, hi) with a constant value; the upper face is closed at 1.
struct StepCell {
  std::vector<double> lo, hi;
  Vector height;
  bool contains(std::span<const double> x) const;
};

// a * sigmoid(steepness * (x[axis] - center)), a >= 0.
struct MonotoneRamp {
  int axis = 0;
  double amplitude = 1.0;
  double center = 0.5;
  double steepness = 10.0;
};

// coefficient * ||x - center||^nu
struct HoelderBump {
  std::vector<double> center;
  double coefficient = 1.0;
};

class TruthFunction {
 public:
  // Cells must tile [0,1]^q.
  static TruthFunction step(int q, std::vector<StepCell> cells);
  static TruthFunction constant(int q, double value);
  // offset + sum_j slope_j x_j + sum of ramps, nondecreasing in every coordinate.
  static TruthFunction monotone(int q, double offset, std::vector<double> slopes, std::vector<MonotoneRamp> ramps);
  static TruthFunction hoelder(int q, double nu, double offset, std::vector<HoelderBump> bumps);

  TruthKind kind() const { return kind_; }
  int q() const { return q_; }
  int dim() const { return dim_; }

  Vector evaluate(std::span<const double> x) const;
  double evaluate1(std::span<const double> x) const;
  // n x dim
  RowMatrix evaluate_all(const RowMatrix& X) const;

  const std::vector<StepCell>& cells() const { return cells_; }
  double offset() const { return offset_; }
  const std::vector<double>& slopes() const { return slopes_; }
  const std::vector<MonotoneRamp>& ramps() const { return ramps_; }
  double nu() const { return nu_; }
  const std::vector<HoelderBump>& bumps() const { return bumps_; }
  // Sum of |coefficients|; |f(x) - f(y)| <= L ||x - y||^nu.
  double hoelder_constant() const;

  // Evaluations are clamped to [-clip, clip].
  double clip() const { return clip_; }
  TruthFunction clipped(double bound) const;
  // Upper bound on sup |f| over [0,1]^q before clipping (exact for step and monotone).
  double sup_norm_bound() const;

 private:
  TruthFunction() = default;

  TruthKind kind_ = TruthKind::step;
  int q_ = 1;
  int dim_ = 1;
  std::vector<StepCell> cells_;
  double offset_ = 0.0;
  std::vector<double> slopes_;
  std::vector<MonotoneRamp> ramps_;
  double nu_ = 1.0;
  std::vector<HoelderBump> bumps_;
  double clip_ = std::numeric_limits<double>::infinity();
};

// Smallest number of leaves of an axis-parallel binary tree that reproduces the step truth
// exactly, by dynamic programming over boxes spanned by the cell boundaries.
int step_complexity(const TruthFunction& truth);

// Level-set approximation by a step truth with sup error at most eps. For q = 1 the range is
// cut into ceil(span / eps) bands and each band's preimage interval becomes a cell; for q > 1
// boxes are halved along cycling axes until the range over each box is at most eps.
TruthFunction monotone_kd_approximation(const TruthFunction& truth, double eps);

enum class CellDiameter {
  // Diagonal of the bounding box of the observations in the cell.
  data_bounding_box,
  // Diagonal of the geometric k-d cell inside [0,1]^q.
  geometric,
};

struct Assumption2Result {
  double lhs = 0.0;
  double rhs = 0.0;
  bool passes = false;
  int n_cells = 0;
};

// Balanced median-split k-d tree of depth q*s (2^(q*s) cells) with axes cycling; passes iff
// max_k diam(cell_k) < M * sum_k mass_k * diam(cell_k).
Assumption2Result check_assumption2(const RowMatrix& X, int s, double M,
                                    CellDiameter diameter = CellDiameter::data_bounding_box);

enum class Regime { step, monotone, hoelder };

std::string regime_name(Regime r);
Regime parse_regime(const std::string& s);

struct RateParams {
  int K_f0 = 1;
  int q = 1;
  double nu = 1.0;
};

// step: n^(-1/2) sqrt(K log^(2 gamma)(n / K)); monotone: n^(-1/(2+q)) sqrt(log n);
// hoelder: n^(-nu/(2 nu + q)) sqrt(log n).
double theoretical_rate(Regime regime, int n, const RateParams& params, double gamma = 1.0);

// Generators. Step cells come from recursive random axis-parallel splits with thresholds in
// [0.25, 0.75] of the parent side, so the generating partition is itself a tree.
TruthFunction random_step_truth(int q, const std::vector<double>& heights, std::mt19937_64& rng);
// 2^q-cell grid split at 0.5 on every axis (checkerboard for q = 2).
TruthFunction grid_step_truth(int q, const std::vector<double>& heights);
// Ramps with random centres and steepness, rescaled so f(0) = lo and f(1) = hi.
TruthFunction random_monotone_truth(int q, double lo, double hi, int n_ramps, std::mt19937_64& rng);
// Bumps with random centres and signs, rescaled so the Hoelder constant is `constant`.
TruthFunction random_hoelder_truth(int q, double nu, double constant, int n_bumps, std::mt19937_64& rng);

struct ClipResult {
  TruthFunction truth;
  bool clipped = false;
  double bound = 0.0;
};

// Enforces ||f0||_inf <= factor * sqrt(log n).
ClipResult enforce_sup_norm(const TruthFunction& truth, int n, double factor = 2.0);

struct SyntheticData {
  RowMatrix X;
  RowMatrix Y;
  // Truth at the rows of X.
  RowMatrix F0;
};

// Uniform i.i.d. covariates on [0,1]^q and responses drawn from the likelihood at f0(x).
SyntheticData synthesize(const TruthFunction& truth, const Likelihood& lik, int n, std::mt19937_64& rng);

}  // namespace gbart
