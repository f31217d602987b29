#include "gbart/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <fmt/format.h>

namespace gbart {

namespace {

int to_int(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  int out = 0;
  try {
    out = std::stoi(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size()) throw std::invalid_argument(fmt::format("{}: expected an integer, got '{}'", key, v));
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  std::uint64_t out = 0;
  try {
    out = std::stoull(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size() || v[0] == '-')
    throw std::invalid_argument(fmt::format("{}: expected a nonnegative integer, got '{}'", key, v));
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double out = 0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != v.size()) throw std::invalid_argument(fmt::format("{}: expected a number, got '{}'", key, v));
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument(fmt::format("{}: expected true or false, got '{}'", key, v));
}

std::vector<int> to_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto b = item.find_first_not_of(" \t"), e = item.find_last_not_of(" \t");
    if (b == std::string::npos) throw std::invalid_argument(key + ": empty list entry");
    out.push_back(to_int(key, item.substr(b, e - b + 1)));
  }
  return out;
}

double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

template <class T>
double quantile_of(std::vector<T> v, double p) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const double pos = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return static_cast<double>(v[lo]) + (pos - static_cast<double>(lo)) * static_cast<double>(v[hi] - v[lo]);
}

template <class T>
double mean_of(const std::vector<T>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (const auto& x : v) s += static_cast<double>(x);
  return s / static_cast<double>(v.size());
}

// Heights or rates spread evenly, on the natural-parameter scale.
std::vector<double> step_heights(const ExperimentConfig& cfg, const Likelihood& lik) {
  std::vector<double> h;
  for (int k = 0; k < cfg.K0; ++k) {
    const double u = cfg.K0 == 1 ? 0.5 : static_cast<double>(k) / (cfg.K0 - 1);
    if (lik.family() == Likelihood::Family::poisson)
      h.push_back(lik.link().inverse(cfg.rate_lo + u * (cfg.rate_hi - cfg.rate_lo)));
    else
      h.push_back(-cfg.height + 2 * u * cfg.height);
  }
  return h;
}

TruthFunction make_truth(const ExperimentConfig& cfg, const Likelihood& lik, std::mt19937_64& rng) {
  switch (cfg.regime) {
    case Regime::step: return random_step_truth(cfg.q, step_heights(cfg, lik), rng);
    case Regime::monotone: {
      double lo = -cfg.height, hi = cfg.height;
      if (lik.family() == Likelihood::Family::poisson) {
        lo = lik.link().inverse(cfg.rate_lo);
        hi = lik.link().inverse(cfg.rate_hi);
      }
      return random_monotone_truth(cfg.q, lo, hi, cfg.n_components, rng);
    }
    case Regime::hoelder: return random_hoelder_truth(cfg.q, cfg.nu, cfg.hoelder_constant, cfg.n_components, rng);
  }
  throw std::logic_error("unknown regime");
}

json draw_header(const ExperimentConfig& cfg, const Likelihood& lik, const ReplicateResult& r) {
  std::vector<std::string> names;
  for (int j = 1; j <= cfg.q; ++j) names.push_back("x" + std::to_string(j));
  return json{{"format", "gbart-draws"},
              {"likelihood", likelihood_to_json(lik)},
              {"scaling", MinMaxScaling::identity(cfg.q).to_json()},
              {"covariates", names},
              {"responses", std::vector<std::string>{"y"}},
              {"n", r.n},
              {"replicate", r.replicate},
              {"truth", truth_to_json(r.truth)}};
}

ReplicateResult run_one(const ExperimentConfig& cfg, const Likelihood& lik, const LeafPrior& leaf_prior,
                        const TruthFunction& base_truth, int K_f0, int n, int rep) {
  ReplicateResult r;
  r.n = n;
  r.replicate = rep;
  r.K_f0 = K_f0;
  r.epsilon_n = experiment_rate(cfg, n, K_f0);
  const auto clip = enforce_sup_norm(base_truth, n);
  r.truth = clip.truth;
  r.truth_clipped = clip.clipped;
  r.sup_norm = std::min(base_truth.sup_norm_bound(), clip.bound);

  const SyntheticData data = experiment_data(cfg, lik, r.truth, n, rep);
  r.X = data.X;
  r.assumption2 = check_assumption2(data.X, cfg.assumption2_s, cfg.assumption2_M);

  SamplerConfig sc = cfg.sampler;
  sc.seed = derive_seed(cfg.seed, {2, static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(rep)});
  sc.store_forests = true;
  try {
    r.draws = run_chain(sc, lik, cfg.tree_prior, leaf_prior, data.X, data.Y, [&](const Forest& f, int, int) {
      r.H.push_back(hellinger_n(lik, f.evaluate_all(data.X), data.F0));
      int total = 0;
      for (const auto& c : f.trees()) total += c.tree.n_leaves();
      r.total_leaves.push_back(total);
      r.refined_cells.push_back(refined_cell_count(f, data.X));
    });
  } catch (const std::exception& e) {
    throw std::runtime_error(fmt::format("sampler failed at n = {}, replicate {}: {}", n, rep, e.what()));
  }
  r.mean_H = mean_of(r.H);
  r.median_H = median_of(r.H);
  MoveStats g, p, c, l;
  for (const auto& d : r.draws.chains) {
    g.proposed += d.grow.proposed, g.accepted += d.grow.accepted;
    p.proposed += d.prune.proposed, p.accepted += d.prune.accepted;
    c.proposed += d.change.proposed, c.accepted += d.change.accepted;
    l.proposed += d.leaf.proposed, l.accepted += d.leaf.accepted;
  }
  r.accept_grow = g.rate();
  r.accept_prune = p.rate();
  r.accept_change = c.rate();
  r.accept_leaf = l.rate();
  return r;
}

SlopeFit slope_of_rows(const std::vector<const ReplicateResult*>& rows) {
  std::vector<double> x, y;
  for (const auto* r : rows) {
    x.push_back(r->n);
    y.push_back(r->median_H);
  }
  return fit_log_slope(x, y);
}

}  // namespace

SamplerConfig ExperimentConfig::default_sampler() {
  SamplerConfig s;
  s.n_iter = 1500;
  s.burn_in = 500;
  s.thin = 5;
  s.n_trees = 10;
  return s;
}

void ExperimentConfig::validate() const {
  if (n_grid.empty()) throw std::invalid_argument("n_grid is empty");
  for (std::size_t i = 0; i < n_grid.size(); ++i) {
    if (n_grid[i] < 2) throw std::invalid_argument("n_grid entries must be at least 2");
    if (i > 0 && n_grid[i] <= n_grid[i - 1]) throw std::invalid_argument("n_grid must be strictly increasing");
  }
  if (replicates < 1) throw std::invalid_argument("replicates must be at least 1");
  if (q < 1) throw std::invalid_argument("q must be positive");
  if (likelihood != "gaussian" && likelihood != "poisson")
    throw std::invalid_argument("experiments support the gaussian and poisson likelihoods");
  if (regime == Regime::step && K0 < 1) throw std::invalid_argument("K0 must be positive");
  if (!(height > 0)) throw std::invalid_argument("height must be positive");
  if (!(rate_lo > 0 && rate_hi >= rate_lo)) throw std::invalid_argument("need 0 < rate_lo <= rate_hi");
  if (!(nu > 0 && nu <= 1)) throw std::invalid_argument("nu must lie in (0, 1]");
  if (!(exceedance_multiplier > 0) || !(parsimony_c > 0)) throw std::invalid_argument("multipliers must be positive");
  if (assumption2_s < 0 || !(assumption2_M > 0)) throw std::invalid_argument("invalid assumption-2 settings");
  if (threads < 0) throw std::invalid_argument("threads must be nonnegative");
  sampler.validate();
  tree_prior.validate();
  make_likelihood();
  make_leaf_prior();
}

Likelihood ExperimentConfig::make_likelihood() const {
  if (likelihood == "gaussian" && link != "identity") throw std::invalid_argument("the gaussian likelihood uses the identity link");
  return gbart::make_likelihood(likelihood, link, sigma, 2);
}

LeafPrior ExperimentConfig::make_leaf_prior() const {
  if (leaf_prior == "default") return LeafPrior::default_for(sampler.n_trees, 1, leaf_k);
  if (leaf_prior != "gaussian" && leaf_prior != "laplace")
    throw std::invalid_argument("experiment leaf prior must be default, gaussian or laplace");
  return gbart::make_leaf_prior(leaf_prior, 1, leaf_scale);
}

ExperimentConfig ExperimentConfig::from_entries(const ConfigEntries& entries) {
  ExperimentConfig c;
  bool link_set = false;
  for (const auto& [k, v] : entries) {
    if (k == "regime") c.regime = parse_regime(v);
    else if (k == "likelihood") c.likelihood = v;
    else if (k == "link") c.link = v, link_set = true;
    else if (k == "sigma") c.sigma = to_double(k, v);
    else if (k == "n_grid") c.n_grid = to_int_list(k, v);
    else if (k == "replicates") c.replicates = to_int(k, v);
    else if (k == "q") c.q = to_int(k, v);
    else if (k == "seed") c.seed = to_u64(k, v);
    else if (k == "K0") c.K0 = to_int(k, v);
    else if (k == "height") c.height = to_double(k, v);
    else if (k == "rate_lo") c.rate_lo = to_double(k, v);
    else if (k == "rate_hi") c.rate_hi = to_double(k, v);
    else if (k == "nu") c.nu = to_double(k, v);
    else if (k == "hoelder_constant") c.hoelder_constant = to_double(k, v);
    else if (k == "n_components") c.n_components = to_int(k, v);
    else if (k == "gamma") c.gamma = to_double(k, v);
    else if (k == "n_trees") c.sampler.n_trees = to_int(k, v);
    else if (k == "iters") c.sampler.n_iter = to_int(k, v);
    else if (k == "burnin") c.sampler.burn_in = to_int(k, v);
    else if (k == "thin") c.sampler.thin = to_int(k, v);
    else if (k == "chains") c.sampler.chains = to_int(k, v);
    else if (k == "move_grow") c.sampler.moves.grow = to_double(k, v);
    else if (k == "move_prune") c.sampler.moves.prune = to_double(k, v);
    else if (k == "move_change") c.sampler.moves.change = to_double(k, v);
    else if (k == "leaf_proposal_scale") c.sampler.leaf_proposal_scale = to_double(k, v);
    else if (k == "adapt") c.sampler.adapt = to_bool(k, v);
    else if (k == "leaf_update") {
      if (v == "automatic") c.sampler.leaf_update = LeafUpdate::automatic;
      else if (v == "random_walk") c.sampler.leaf_update = LeafUpdate::random_walk;
      else throw std::invalid_argument("leaf_update must be automatic or random_walk");
    } else if (k == "tree_prior") c.tree_prior.kind = TreePriorSpec::parse_kind(v);
    else if (k == "alpha") c.tree_prior.alpha = to_double(k, v);
    else if (k == "lambda") c.tree_prior.lambda = to_double(k, v);
    else if (k == "validity_constant") c.tree_prior.validity_constant = to_int(k, v);
    else if (k == "max_depth") c.tree_prior.max_depth = to_int(k, v);
    else if (k == "leaf_prior") c.leaf_prior = v;
    else if (k == "leaf_scale") c.leaf_scale = to_double(k, v);
    else if (k == "leaf_k") c.leaf_k = to_double(k, v);
    else if (k == "exceedance_multiplier") c.exceedance_multiplier = to_double(k, v);
    else if (k == "parsimony_c") c.parsimony_c = to_double(k, v);
    else if (k == "assumption2_s") c.assumption2_s = to_int(k, v);
    else if (k == "assumption2_M") c.assumption2_M = to_double(k, v);
    else if (k == "write_draws") c.write_draws = to_bool(k, v);
    else if (k == "threads") c.threads = to_int(k, v);
    else throw std::invalid_argument("unknown config key: " + k);
  }
  if (!link_set && c.likelihood == "poisson") c.link = "softplus";
  c.validate();
  return c;
}

std::string ExperimentConfig::canonical_text() const {
  std::string grid;
  for (std::size_t i = 0; i < n_grid.size(); ++i) grid += (i ? "," : "") + std::to_string(n_grid[i]);
  const auto& s = sampler;
  std::string out;
  auto line = [&](const char* k, const std::string& v) { out += fmt::format("{} = {}\n", k, v); };
  auto num = [&](const char* k, double v) { line(k, format_double(v)); };
  line("regime", regime_name(regime));
  line("likelihood", likelihood);
  line("link", link);
  num("sigma", sigma);
  line("n_grid", grid);
  line("replicates", std::to_string(replicates));
  line("q", std::to_string(q));
  line("seed", std::to_string(seed));
  line("K0", std::to_string(K0));
  num("height", height);
  num("rate_lo", rate_lo);
  num("rate_hi", rate_hi);
  num("nu", nu);
  num("hoelder_constant", hoelder_constant);
  line("n_components", std::to_string(n_components));
  num("gamma", gamma);
  line("n_trees", std::to_string(s.n_trees));
  line("iters", std::to_string(s.n_iter));
  line("burnin", std::to_string(s.burn_in));
  line("thin", std::to_string(s.thin));
  line("chains", std::to_string(s.chains));
  num("move_grow", s.moves.grow);
  num("move_prune", s.moves.prune);
  num("move_change", s.moves.change);
  num("leaf_proposal_scale", s.leaf_proposal_scale);
  line("adapt", s.adapt ? "true" : "false");
  line("leaf_update", s.leaf_update == LeafUpdate::automatic ? "automatic" : "random_walk");
  line("tree_prior", tree_prior.kind == TreePriorSpec::Kind::chipman ? "chipman" : "denison");
  num("alpha", tree_prior.alpha);
  num("lambda", tree_prior.lambda);
  line("validity_constant", std::to_string(tree_prior.validity_constant));
  line("max_depth", std::to_string(tree_prior.max_depth));
  line("leaf_prior", leaf_prior);
  num("leaf_scale", leaf_scale);
  num("leaf_k", leaf_k);
  num("exceedance_multiplier", exceedance_multiplier);
  num("parsimony_c", parsimony_c);
  line("assumption2_s", std::to_string(assumption2_s));
  num("assumption2_M", assumption2_M);
  line("write_draws", write_draws ? "true" : "false");
  return out;
}

SlopeFit fit_log_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("slope fit: x and y differ in length");
  std::vector<double> distinct = x;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() < 4) throw std::invalid_argument("slope fit needs at least 4 distinct sample sizes");
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0 && y[i] > 0)) throw std::invalid_argument("slope fit needs positive values");
    lx.push_back(std::log(x[i]));
    ly.push_back(std::log(y[i]));
  }
  const double m = static_cast<double>(lx.size());
  const double mx = mean_of(lx), my = mean_of(ly);
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  SlopeFit f;
  f.points = static_cast<int>(lx.size());
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double rss = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) rss += std::pow(ly[i] - f.intercept - f.slope * lx[i], 2);
  f.standard_error = std::sqrt(rss / (m - 2) / sxx);
  return f;
}

TruthFunction experiment_truth(const ExperimentConfig& cfg, const Likelihood& lik, int rep) {
  std::mt19937_64 rng(derive_seed(cfg.seed, {0, static_cast<std::uint64_t>(rep)}));
  return make_truth(cfg, lik, rng);
}

SyntheticData experiment_data(const ExperimentConfig& cfg, const Likelihood& lik, const TruthFunction& truth,
                              int n, int rep) {
  std::mt19937_64 rng(derive_seed(cfg.seed, {1, static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(rep)}));
  return synthesize(truth, lik, n, rng);
}

double experiment_rate(const ExperimentConfig& cfg, int n, int K_f0) {
  return theoretical_rate(cfg.regime, n, RateParams{K_f0, cfg.q, cfg.nu}, cfg.gamma);
}

ExperimentReport run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const Likelihood lik = cfg.make_likelihood();
  const LeafPrior leaf_prior = cfg.make_leaf_prior();

  // One truth per replicate, shared across the grid so that only n changes along a row.
  std::vector<TruthFunction> truths;
  std::vector<int> K;
  for (int rep = 0; rep < cfg.replicates; ++rep) {
    truths.push_back(experiment_truth(cfg, lik, rep));
    K.push_back(cfg.regime == Regime::step ? step_complexity(truths.back()) : 1);
  }

  ExperimentReport report;
  report.config = cfg;
  const int jobs = static_cast<int>(cfg.n_grid.size()) * cfg.replicates;
  report.rows.resize(static_cast<std::size_t>(jobs));
  // Largest n first so the long jobs do not trail.
  std::vector<int> order(static_cast<std::size_t>(jobs));
  std::iota(order.begin(), order.end(), 0);
  std::reverse(order.begin(), order.end());
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (int k; (k = next.fetch_add(1)) < jobs;) {
      const int job = order[static_cast<std::size_t>(k)];
      const int ni = job / cfg.replicates, rep = job % cfg.replicates;
      try {
        report.rows[static_cast<std::size_t>(job)] =
            run_one(cfg, lik, leaf_prior, truths[static_cast<std::size_t>(rep)], K[static_cast<std::size_t>(rep)],
                    cfg.n_grid[static_cast<std::size_t>(ni)], rep);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  int n_threads = cfg.threads > 0 ? cfg.threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  n_threads = std::min(n_threads, jobs);
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);

  for (std::size_t ni = 0; ni < cfg.n_grid.size(); ++ni) {
    GridSummary g;
    g.n = cfg.n_grid[ni];
    std::vector<double> med;
    for (int rep = 0; rep < cfg.replicates; ++rep)
      med.push_back(report.rows[ni * static_cast<std::size_t>(cfg.replicates) + static_cast<std::size_t>(rep)].median_H);
    g.median_H = mean_of(med);
    if (med.size() > 1) {
      double ss = 0;
      for (double v : med) ss += (v - g.median_H) * (v - g.median_H);
      g.standard_error = std::sqrt(ss / static_cast<double>(med.size() - 1) / static_cast<double>(med.size()));
    }
    g.epsilon_n = report.rows[ni * static_cast<std::size_t>(cfg.replicates)].epsilon_n;
    report.grid.push_back(g);
  }
  report.monotone = true;
  for (std::size_t i = 1; i < report.grid.size(); ++i) {
    const auto &a = report.grid[i - 1], &b = report.grid[i];
    if (b.median_H > a.median_H + std::hypot(a.standard_error, b.standard_error)) report.monotone = false;
  }
  const auto& last = report.grid.back();
  report.rate_constant = last.epsilon_n > 0 ? last.median_H / last.epsilon_n : 0.0;
  for (auto& r : report.rows) {
    const double threshold = cfg.exceedance_multiplier * report.rate_constant * r.epsilon_n;
    const auto over = std::count_if(r.H.begin(), r.H.end(), [&](double h) { return h > threshold; });
    r.exceed_fraction = r.H.empty() ? 0.0 : static_cast<double>(over) / static_cast<double>(r.H.size());
  }
  if (cfg.n_grid.size() >= 4) {
    std::vector<const ReplicateResult*> all;
    for (const auto& r : report.rows) all.push_back(&r);
    report.slope = slope_of_rows(all);
  }
  return report;
}

double parsimony_report(const PosteriorDraws& draws, const RowMatrix& X, int K_f0, double c) {
  if (draws.forests.empty()) return 0.0;
  long long over = 0;
  for (const auto& f : draws.forests)
    if (refined_cell_count(f, X) > c * K_f0) ++over;
  return static_cast<double>(over) / static_cast<double>(draws.forests.size());
}

LinkComparison link_comparison(ExperimentConfig cfg, int bootstrap) {
  if (cfg.regime != Regime::step) throw std::invalid_argument("link comparison uses the step regime");
  if (cfg.n_grid.size() < 4) throw std::invalid_argument("link comparison needs at least 4 sample sizes");
  cfg.likelihood = "poisson";
  LinkComparison out;
  cfg.link = "softplus";
  out.softplus = run_experiment(cfg);
  cfg.link = "exp";
  out.exp = run_experiment(cfg);
  out.difference = out.softplus.slope.slope - out.exp.slope.slope;
  out.bootstrap = bootstrap;

  // Replicates are resampled jointly for both links; both share truth and covariates.
  std::mt19937_64 rng(derive_seed(cfg.seed, {3}));
  std::uniform_int_distribution<int> pick(0, cfg.replicates - 1);
  std::vector<double> diffs;
  for (int b = 0; b < bootstrap; ++b) {
    std::vector<const ReplicateResult*> a, e;
    for (std::size_t ni = 0; ni < cfg.n_grid.size(); ++ni)
      for (int r = 0; r < cfg.replicates; ++r) {
        const std::size_t idx = ni * static_cast<std::size_t>(cfg.replicates) + static_cast<std::size_t>(pick(rng));
        a.push_back(&out.softplus.rows[idx]);
        e.push_back(&out.exp.rows[idx]);
      }
    diffs.push_back(slope_of_rows(a).slope - slope_of_rows(e).slope);
  }
  out.lower = quantile_of(diffs, 0.025);
  out.upper = quantile_of(diffs, 0.975);
  return out;
}

std::string report_csv(const ExperimentReport& report) {
  std::string out =
      "n,replicate,K_f0,epsilon_n,mean_H,median_H,exceed_fraction,draws,total_leaves_mean,total_leaves_median,"
      "total_leaves_q90,total_leaves_max,refined_cells_mean,refined_cells_median,refined_cells_max,accept_grow,"
      "accept_prune,accept_change,accept_leaf,assumption2_lhs,assumption2_rhs,assumption2_passes,truth_clipped,"
      "sup_norm\n";
  for (const auto& r : report.rows) {
    const double max_leaves = r.total_leaves.empty() ? 0 : *std::max_element(r.total_leaves.begin(), r.total_leaves.end());
    const double max_cells = r.refined_cells.empty() ? 0 : *std::max_element(r.refined_cells.begin(), r.refined_cells.end());
    std::vector<double> fields{mean_of(r.total_leaves),
                               quantile_of(r.total_leaves, 0.5),
                               quantile_of(r.total_leaves, 0.9),
                               max_leaves,
                               mean_of(r.refined_cells),
                               quantile_of(r.refined_cells, 0.5),
                               max_cells,
                               r.accept_grow,
                               r.accept_prune,
                               r.accept_change,
                               r.accept_leaf,
                               r.assumption2.lhs,
                               r.assumption2.rhs};
    out += fmt::format("{},{},{},{},{},{},{},{}", r.n, r.replicate, r.K_f0, format_double(r.epsilon_n),
                       format_double(r.mean_H), format_double(r.median_H), format_double(r.exceed_fraction),
                       r.H.size());
    for (double v : fields) out += "," + format_double(v);
    out += fmt::format(",{},{},{}\n", r.assumption2.passes ? 1 : 0, r.truth_clipped ? 1 : 0, format_double(r.sup_norm));
  }
  return out;
}

std::string slopes_csv(const ExperimentReport& report) {
  const auto& s = report.slope;
  return "quantity,slope,standard_error,intercept,points,rate_constant,monotone\n" +
         fmt::format("log_median_H,{},{},{},{},{},{}\n", format_double(s.slope), format_double(s.standard_error),
                     format_double(s.intercept), s.points, format_double(report.rate_constant),
                     report.monotone ? 1 : 0);
}

std::string summary_csv(const ExperimentReport& report) {
  std::string out = "n,median_H,standard_error,epsilon_n,scaled_epsilon_n\n";
  for (const auto& g : report.grid)
    out += fmt::format("{},{},{},{},{}\n", g.n, format_double(g.median_H), format_double(g.standard_error),
                       format_double(g.epsilon_n), format_double(report.rate_constant * g.epsilon_n));
  return out;
}

void write_report(const ExperimentReport& report, const std::string& dir,
                  const std::vector<std::pair<std::string, std::string>>& inputs) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::map<std::string, std::string> outputs;
  auto emit = [&](const std::string& name, const std::string& content) {
    write_file((fs::path(dir) / name).string(), content);
    outputs[name] = git_blob_sha1(content);
  };
  emit("report.csv", report_csv(report));
  emit("slopes.csv", slopes_csv(report));
  emit("summary.csv", summary_csv(report));
  if (report.config.write_draws) {
    fs::create_directories(fs::path(dir) / "draws");
    const Likelihood lik = report.config.make_likelihood();
    for (const auto& r : report.rows) {
      std::ostringstream ss;
      DrawWriter w(ss, draw_header(report.config, lik, r));
      for (std::size_t i = 0; i < r.draws.forests.size(); ++i)
        w.write(r.draws.forests[i], r.draws.chain_of[i], r.draws.iteration_of[i]);
      emit(fmt::format("draws/n{}_rep{}.jsonl", r.n, r.replicate), ss.str());
    }
  }
  const std::string canonical = report.config.canonical_text();
  json in = json::object();
  for (const auto& [name, content] : inputs) in[name] = git_blob_sha1(content);
  json manifest{{"config_hash", sha1_hex(canonical)},
                {"config", canonical},
                {"inputs", in},
                {"outputs", outputs},
                {"slope", report.slope.slope},
                {"slope_standard_error", report.slope.standard_error}};
  write_file((fs::path(dir) / "manifest.json").string(), manifest.dump(2) + "\n");
}

}  // namespace gbart
