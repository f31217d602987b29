#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "gbart/harness.hpp"

using namespace gbart;

namespace {

struct FitOptions {
  std::string data, likelihood = "gaussian", link, out = "draws.jsonl";
  std::string tree_prior = "chipman", leaf_prior = "default";
  double sigma = 1.0, alpha = 0.25, lambda = 10.0, leaf_scale = 1.0, leaf_k = 2.0;
  int trees = 50, iters = 2000, burnin = 500, thin = 5, chains = 1, classes = 0;
  std::uint64_t seed = 42;
  bool prescaled = false;
};

// A single label column becomes one-hot rows for the multinomial.
RowMatrix one_hot(const RowMatrix& y, int classes) {
  int p = classes;
  if (p == 0)
    for (Eigen::Index i = 0; i < y.rows(); ++i) p = std::max(p, static_cast<int>(y(i, 0)) + 1);
  RowMatrix out = RowMatrix::Zero(y.rows(), p);
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    const double v = y(i, 0);
    if (v != std::floor(v) || v < 0 || v >= p) throw std::invalid_argument(fmt::format("bad class label {}", v));
    out(i, static_cast<Eigen::Index>(v)) = 1.0;
  }
  return out;
}

int run_fit(const FitOptions& o) {
  const Dataset d = split_dataset(read_csv_file(o.data));
  RowMatrix Y = d.Y;
  std::vector<std::string> responses = d.response_names;
  int classes = 2;
  if (o.likelihood == "multinomial") {
    if (Y.cols() == 1) {
      Y = one_hot(Y, o.classes);
      responses.clear();
      for (int k = 1; k <= Y.cols(); ++k) responses.push_back("y" + std::to_string(k));
    }
    classes = static_cast<int>(Y.cols());
  }
  std::string link = o.link;
  if (link.empty()) link = o.likelihood == "gaussian" ? "identity" : o.likelihood == "poisson" ? "softplus" : "softmax";
  const Likelihood lik = make_likelihood(o.likelihood, link, o.sigma, classes);
  if (Y.cols() != lik.response_dim())
    throw std::invalid_argument(fmt::format("{} expects {} response columns", lik.name(), lik.response_dim()));

  const MinMaxScaling scaling = o.prescaled ? MinMaxScaling::identity(static_cast<int>(d.X.cols())) : MinMaxScaling::fit(d.X);
  const RowMatrix X = scaling.apply(d.X);

  SamplerConfig cfg;
  cfg.n_trees = o.trees;
  cfg.n_iter = o.iters;
  cfg.burn_in = o.burnin;
  cfg.thin = o.thin;
  cfg.seed = o.seed;
  cfg.chains = o.chains;
  TreePriorSpec spec;
  spec.kind = TreePriorSpec::parse_kind(o.tree_prior);
  spec.alpha = o.alpha;
  spec.lambda = o.lambda;
  const LeafPrior leaf = o.leaf_prior == "default" ? LeafPrior::default_for(o.trees, lik.natural_dim(), o.leaf_k)
                                                   : make_leaf_prior(o.leaf_prior, lik.natural_dim(), o.leaf_scale);

  const PosteriorDraws draws = run_chain(cfg, lik, spec, leaf, X, Y);

  json acceptance = json::array();
  for (const auto& c : draws.chains)
    acceptance.push_back(json{{"grow", c.grow.rate()}, {"prune", c.prune.rate()}, {"change", c.change.rate()},
                              {"leaf", c.leaf.rate()}});
  const json header{{"format", "gbart-draws"},
                    {"likelihood", likelihood_to_json(lik)},
                    {"scaling", scaling.to_json()},
                    {"covariates", d.covariate_names},
                    {"responses", responses},
                    {"n", X.rows()},
                    {"sampler",
                     {{"trees", o.trees}, {"iters", o.iters}, {"burnin", o.burnin}, {"thin", o.thin},
                      {"seed", o.seed}, {"chains", o.chains}, {"tree_prior", o.tree_prior}, {"alpha", o.alpha},
                      {"lambda", o.lambda}, {"leaf_prior", leaf.name()}, {"leaf_scale", leaf.scale()}}},
                    {"acceptance", acceptance}};
  std::ofstream out(o.out);
  if (!out) throw std::runtime_error("cannot write " + o.out);
  DrawWriter w(out, header);
  for (std::size_t i = 0; i < draws.forests.size(); ++i) w.write(draws.forests[i], draws.chain_of[i], draws.iteration_of[i]);
  std::cerr << fmt::format("{} draws written to {}\n", draws.forests.size(), o.out);
  return 0;
}

int run_predict(const std::string& draws_path, const std::string& data, const std::string& out_path) {
  const DrawFile df = read_draws_file(draws_path);
  const Likelihood lik = likelihood_from_json(df.header.at("likelihood"));
  const auto scaling = MinMaxScaling::from_json(df.header.at("scaling"));
  const auto names = df.header.at("covariates").get<std::vector<std::string>>();
  const Table t = read_csv_file(data);
  RowMatrix raw(t.values.rows(), static_cast<Eigen::Index>(names.size()));
  for (std::size_t j = 0; j < names.size(); ++j) {
    const int c = t.column(names[j]);
    if (c < 0) throw std::invalid_argument("missing covariate column " + names[j]);
    raw.col(static_cast<Eigen::Index>(j)) = t.values.col(c);
  }
  const RowMatrix X = scaling.apply(raw);
  if (df.draws.empty()) throw std::invalid_argument("draw file holds no forests");

  const int D = lik.natural_dim(), P = lik.response_dim();
  const auto n = X.rows();
  const auto S = df.draws.size();
  std::vector<RowMatrix> F;
  for (const auto& d : df.draws) F.push_back(d.forest.evaluate_all(X));

  Table out;
  for (int j = 0; j < D; ++j)
    for (const char* s : {"mean", "q025", "q975"}) out.header.push_back(fmt::format("f{}_{}", j + 1, s));
  for (int k = 0; k < P; ++k) out.header.push_back(P == 1 ? "y_mean" : fmt::format("y{}_mean", k + 1));
  out.values.resize(n, static_cast<Eigen::Index>(out.header.size()));
  std::vector<double> v(S);
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index col = 0;
    for (int j = 0; j < D; ++j) {
      for (std::size_t s = 0; s < S; ++s) v[s] = F[s](i, j);
      std::sort(v.begin(), v.end());
      auto q = [&](double p) {
        const double pos = p * static_cast<double>(S - 1);
        const auto lo = static_cast<std::size_t>(pos);
        const std::size_t hi = std::min(lo + 1, S - 1);
        return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
      };
      double m = 0;
      for (double x : v) m += x / static_cast<double>(S);
      out.values(i, col++) = m;
      out.values(i, col++) = q(0.025);
      out.values(i, col++) = q(0.975);
    }
    Vector ym = Vector::Zero(P);
    for (std::size_t s = 0; s < S; ++s) ym += lik.mean(row_span(F[s], i)) / static_cast<double>(S);
    for (int k = 0; k < P; ++k) out.values(i, col++) = ym[k];
  }
  std::ofstream o(out_path);
  if (!o) throw std::runtime_error("cannot write " + out_path);
  write_csv(o, out);
  return 0;
}

int run_synth(const std::string& regime, int n, int q, std::uint64_t seed, const std::string& likelihood,
              std::string link, double sigma, int K0, double nu, const std::string& out_path) {
  ExperimentConfig cfg;
  cfg.regime = parse_regime(regime);
  cfg.q = q;
  cfg.K0 = K0;
  cfg.nu = nu;
  cfg.likelihood = likelihood;
  if (link.empty()) link = likelihood == "poisson" ? "softplus" : "identity";
  cfg.link = link;
  cfg.sigma = sigma;
  cfg.n_grid = {std::max(n, 2)};
  cfg.seed = seed;
  cfg.validate();
  const Likelihood lik = cfg.make_likelihood();
  // Same streams as replicate 0 of an experiment with this seed.
  const auto clip = enforce_sup_norm(experiment_truth(cfg, lik, 0), n);
  const TruthFunction& truth = clip.truth;
  const SyntheticData data = experiment_data(cfg, lik, truth, n, 0);

  Table t;
  for (int j = 1; j <= q; ++j) t.header.push_back("x" + std::to_string(j));
  t.header.push_back("y");
  t.values.resize(n, q + 1);
  t.values.leftCols(q) = data.X;
  t.values.col(q) = data.Y.col(0);
  std::ofstream o(out_path);
  if (!o) throw std::runtime_error("cannot write " + out_path);
  write_csv(o, t);
  const auto a2 = check_assumption2(data.X, 1, 4.0);
  json side{{"regime", regime},
            {"n", n},
            {"q", q},
            {"seed", seed},
            {"likelihood", likelihood_to_json(lik)},
            {"truth", truth_to_json(truth)},
            {"clipped", clip.clipped},
            {"assumption2", {{"s", 1}, {"M", 4.0}, {"lhs", a2.lhs}, {"rhs", a2.rhs}, {"passes", a2.passes}}}};
  if (cfg.regime == Regime::step) side["K_f0"] = step_complexity(truth);
  write_file(out_path + ".json", side.dump(2) + "\n");
  return 0;
}

int run_verify_prior(const std::string& dist, int p, double scale, double c1, double c2, double c3,
                     const std::string& out_path) {
  const LeafPrior prior = make_leaf_prior(dist == "beta22" ? "beta22" : dist, p, scale);
  if (c1 <= 0) c1 = dist == "gaussian" ? 0.5 : 1.0;
  if (c2 <= 0) c2 = dist == "gaussian" ? 2.0 : 1.0;
  const auto lower = tail_lower_certificate(prior, c1, c2, {1e-1, 1e-2, 1e-3, 1e-4});
  std::string csv = "certificate,t,probability,ratio,passes,worst_ratio,implied_constant\n";
  auto rows = [&](const char* name, const TailCertificate& c) {
    for (std::size_t i = 0; i < c.t.size(); ++i)
      csv += fmt::format("{},{},{},{},{},{},{}\n", name, format_double(c.t[i]), format_double(c.probability[i]),
                         format_double(c.ratio[i]), c.passes ? 1 : 0, format_double(c.worst_ratio),
                         format_double(c.implied_constant));
  };
  rows("lower", lower);
  // Beta(2,2) lives on [0,1], so the upper tail condition is vacuous there.
  if (dist != "beta22") rows("upper", tail_upper_certificate(prior, c3, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10}));
  if (out_path.empty() || out_path == "-") {
    std::cout << csv;
  } else {
    write_file(out_path, csv);
  }
  return 0;
}

int run_experiment_cmd(const std::string& config_path, const std::string& out_dir, int threads) {
  const std::string text = read_file(config_path);
  std::istringstream in(text);
  ExperimentConfig cfg = ExperimentConfig::from_entries(parse_config(in));
  if (threads > 0) cfg.threads = threads;
  const auto report = run_experiment(cfg);
  write_report(report, out_dir, {{std::filesystem::path(config_path).filename().string(), text}});
  std::cerr << fmt::format("slope {:.4f} (se {:.4f}) over {} rows; report in {}\n", report.slope.slope,
                           report.slope.standard_error, report.rows.size(), out_dir);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Generalized Bayesian additive regression trees"};
  app.require_subcommand(1);

  FitOptions fo;
  auto* fit = app.add_subcommand("fit", "Sample the posterior and write forests as JSON lines");
  fit->add_option("--data", fo.data, "Training CSV with header; response y or y1..yp")->required()->check(CLI::ExistingFile);
  fit->add_option("--likelihood", fo.likelihood)->check(CLI::IsMember({"gaussian", "poisson", "multinomial"}));
  fit->add_option("--link", fo.link, "identity, softplus, exp or softmax (default per likelihood)");
  fit->add_option("--sigma", fo.sigma, "Gaussian noise scale");
  fit->add_option("--classes", fo.classes, "Class count for a label column (default: max label + 1)");
  fit->add_option("--trees", fo.trees);
  fit->add_option("--iters", fo.iters);
  fit->add_option("--burnin", fo.burnin);
  fit->add_option("--thin", fo.thin);
  fit->add_option("--chains", fo.chains);
  fit->add_option("--seed", fo.seed);
  fit->add_option("--tree-prior", fo.tree_prior)->check(CLI::IsMember({"chipman", "denison"}));
  fit->add_option("--alpha", fo.alpha);
  fit->add_option("--lambda", fo.lambda);
  fit->add_option("--leaf-prior", fo.leaf_prior)->check(CLI::IsMember({"default", "gaussian", "laplace"}));
  fit->add_option("--leaf-scale", fo.leaf_scale);
  fit->add_option("--leaf-k", fo.leaf_k);
  fit->add_flag("--prescaled", fo.prescaled, "Covariates already lie in [0,1]; skip min-max scaling");
  fit->add_option("--out", fo.out);

  std::string pdraws, pdata, pout = "predictions.csv";
  auto* predict = app.add_subcommand("predict", "Evaluate stored forests on new covariates");
  predict->add_option("--draws", pdraws)->required()->check(CLI::ExistingFile);
  predict->add_option("--data", pdata)->required()->check(CLI::ExistingFile);
  predict->add_option("--out", pout);

  std::string sregime = "step", slik = "gaussian", slink, sout = "data.csv";
  int sn = 500, sq = 2, sK0 = 4;
  double ssigma = 1.0, snu = 1.0;
  std::uint64_t sseed = 1;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset and a truth sidecar JSON");
  synth->add_option("--regime", sregime)->check(CLI::IsMember({"step", "monotone", "hoelder"}));
  synth->add_option("--n", sn)->check(CLI::PositiveNumber);
  synth->add_option("--q", sq)->check(CLI::PositiveNumber);
  synth->add_option("--seed", sseed);
  synth->add_option("--likelihood", slik)->check(CLI::IsMember({"gaussian", "poisson"}));
  synth->add_option("--link", slink);
  synth->add_option("--sigma", ssigma);
  synth->add_option("--K0", sK0);
  synth->add_option("--nu", snu);
  synth->add_option("--out", sout);

  std::string vdist = "gaussian", vout;
  int vp = 1;
  double vscale = 1.0, vc1 = 0, vc2 = 0, vc3 = 1.0;
  auto* verify = app.add_subcommand("verify-prior", "Tail-condition certificate table for a leaf prior");
  verify->add_option("--dist", vdist)->check(CLI::IsMember({"gaussian", "laplace", "beta22"}));
  verify->add_option("--p", vp)->check(CLI::PositiveNumber);
  verify->add_option("--scale", vscale);
  verify->add_option("--c1", vc1);
  verify->add_option("--c2", vc2);
  verify->add_option("--c3", vc3);
  verify->add_option("--out", vout, "CSV path (default stdout)");

  std::string econfig, eout = "report";
  int ethreads = 0;
  auto* experiment = app.add_subcommand("experiment", "Run a posterior concentration experiment");
  experiment->add_option("--config", econfig)->required()->check(CLI::ExistingFile);
  experiment->add_option("--out", eout);
  experiment->add_option("--threads", ethreads);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*fit) return run_fit(fo);
    if (*predict) return run_predict(pdraws, pdata, pout);
    if (*synth) return run_synth(sregime, sn, sq, sseed, slik, slink, ssigma, sK0, snu, sout);
    if (*verify) return run_verify_prior(vdist, vp, vscale, vc1, vc2, vc3, vout);
    if (*experiment) return run_experiment_cmd(econfig, eout, ethreads);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
