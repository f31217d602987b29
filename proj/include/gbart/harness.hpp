#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gbart/io.hpp"
#include "gbart/metrics.hpp"
#include "gbart/sampler.hpp"
#include "gbart/truth.hpp"

namespace gbart {

struct ExperimentConfig {
  Regime regime = Regime::step;
  std::string likelihood = "gaussian";
  std::string link = "identity";
  double sigma = 1.0;
  std::vector<int> n_grid{200, 500, 1000, 2000};
  int replicates = 5;
  int q = 2;
  std::uint64_t seed = 1;

  // Truth generation. Step truths use K0 cells with heights spread evenly over
  // [-height, height] on the link scale (Gaussian) or rates spread over [rate_lo, rate_hi]
  // (Poisson). Monotone truths rise from -height to height; Hoelder truths have the given
  // constant and exponent.
  int K0 = 4;
  double height = 1.5;
  double rate_lo = 0.5;
  double rate_hi = 4.0;
  double nu = 1.0;
  double hoelder_constant = 2.0;
  int n_components = 3;
  double gamma = 1.0;

  SamplerConfig sampler = default_sampler();
  TreePriorSpec tree_prior;
  // "default" is the Gaussian with scale 3 / (leaf_k sqrt(n_trees)).
  std::string leaf_prior = "default";
  double leaf_scale = 1.0;
  double leaf_k = 2.0;

  // Draws count as exceeding when H_n > exceedance_multiplier * c * eps_n, with c fitted so
  // that c * eps_n matches the median H_n at the largest n.
  double exceedance_multiplier = 2.0;
  double parsimony_c = 4.0;
  int assumption2_s = 1;
  double assumption2_M = 4.0;
  bool write_draws = true;
  // 0 = hardware concurrency.
  int threads = 0;

  static SamplerConfig default_sampler();
  void validate() const;
  Likelihood make_likelihood() const;
  LeafPrior make_leaf_prior() const;

  static ExperimentConfig from_entries(const ConfigEntries& entries);
  // Canonical key = value listing of every field, stable across runs.
  std::string canonical_text() const;
};

struct ReplicateResult {
  int n = 0;
  int replicate = 0;
  int K_f0 = 0;
  double epsilon_n = 0.0;
  double mean_H = 0.0;
  double median_H = 0.0;
  double exceed_fraction = 0.0;
  // Total leaves summed over trees and distinct refined cells, per stored draw.
  std::vector<int> total_leaves;
  std::vector<int> refined_cells;
  std::vector<double> H;
  double accept_grow = 0.0, accept_prune = 0.0, accept_change = 0.0, accept_leaf = 0.0;
  Assumption2Result assumption2;
  bool truth_clipped = false;
  double sup_norm = 0.0;
  PosteriorDraws draws;
  RowMatrix X;
  TruthFunction truth = TruthFunction::constant(1, 0.0);
};

struct SlopeFit {
  double slope = 0.0;
  double standard_error = 0.0;
  double intercept = 0.0;
  int points = 0;
};

// OLS of log y on log x. Needs at least 4 distinct x values.
SlopeFit fit_log_slope(const std::vector<double>& x, const std::vector<double>& y);

struct GridSummary {
  int n = 0;
  // Mean over replicates of the per-replicate posterior median H_n, and its standard error.
  double median_H = 0.0;
  double standard_error = 0.0;
  double epsilon_n = 0.0;
};

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<ReplicateResult> rows;  // n-major, replicate-minor
  std::vector<GridSummary> grid;
  // Fitted on log median H_n of every (n, replicate) row.
  SlopeFit slope;
  double rate_constant = 0.0;
  // Grid medians nonincreasing in n up to one standard error of each difference.
  bool monotone = false;
};

ExperimentReport run_experiment(const ExperimentConfig& cfg);

// The truth run_experiment uses for replicate `rep`, before sup-norm clipping.
TruthFunction experiment_truth(const ExperimentConfig& cfg, const Likelihood& lik, int rep);
// Covariates and responses for (n, rep).
SyntheticData experiment_data(const ExperimentConfig& cfg, const Likelihood& lik, const TruthFunction& truth,
                              int n, int rep);

// Theory rate for the experiment's regime at n, with K_f0 from the truth.
double experiment_rate(const ExperimentConfig& cfg, int n, int K_f0);

// Fraction of stored forests whose refined cell count over X exceeds c * K_f0.
double parsimony_report(const PosteriorDraws& draws, const RowMatrix& X, int K_f0, double c = 4.0);

struct LinkComparison {
  ExperimentReport softplus;
  ExperimentReport exp;
  // softplus slope minus exp slope, with a percentile bootstrap interval over replicates.
  double difference = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  int bootstrap = 0;
};

LinkComparison link_comparison(ExperimentConfig cfg, int bootstrap = 1000);

// report.csv, summary.csv, slopes.csv, draws/*.jsonl (when enabled) and manifest.json.
// `inputs` maps names to file contents that are hashed into the manifest.
void write_report(const ExperimentReport& report, const std::string& dir,
                  const std::vector<std::pair<std::string, std::string>>& inputs = {});
std::string report_csv(const ExperimentReport& report);
std::string slopes_csv(const ExperimentReport& report);
std::string summary_csv(const ExperimentReport& report);

}  // namespace gbart
