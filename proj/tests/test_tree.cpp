#include <cmath>
#include <functional>
#include <map>
#include <random>

#include "doctest.h"
#include "gbart/tree.hpp"
#include "oracles.hpp"

using namespace gbart;

namespace {

RowMatrix uniform_design(int n, int q, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  RowMatrix X(n, q);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < q; ++j) X(i, j) = u(rng);
  return X;
}

// Boxes of every leaf, derived by walking ancestors.
std::vector<std::vector<std::pair<double, double>>> leaf_boxes(const TreePartition& t, int q) {
  std::vector<std::vector<std::pair<double, double>>> boxes;
  for (int k = 0; k < t.n_leaves(); ++k) {
    std::vector<std::pair<double, double>> box(static_cast<std::size_t>(q), {-1e300, 1e300});
    int id = t.leaf_node(k);
    while (t.node(id).parent >= 0) {
      const int p = t.node(id).parent;
      const auto& r = t.node(p).rule;
      auto& b = box[static_cast<std::size_t>(r.axis)];
      if (t.node(p).left == id) b.second = std::min(b.second, r.threshold);
      else b.first = std::max(b.first, r.threshold);
      id = p;
    }
    boxes.push_back(box);
  }
  return boxes;
}

}  // namespace

TEST_CASE("leaf lookup") {
  TreePartition root;
  const std::vector<double> x{0.3, 0.9};
  CHECK(root.leaf_index(x) == 0);
  CHECK(root.n_leaves() == 1);
  const auto t = root.grow(0, {0, 0.5});
  CHECK(t.leaf_index(x) == 0);
  const std::vector<double> x2{0.7, 0.1};
  CHECK(t.leaf_index(x2) == 1);
  CHECK(t.n_leaves() == t.internal_nodes().size() + 1);
}

TEST_CASE("balanced k-d tree separates a 2x2 grid") {
  RowMatrix X(4, 2);
  X << 0.25, 0.25, 0.25, 0.75, 0.75, 0.25, 0.75, 0.75;
  auto t = TreePartition().grow(0, {0, 0.5});
  t = t.grow(0, {1, 0.5});
  t = t.grow(2, {1, 0.5});
  const auto a = t.leaf_assignment(X);
  std::vector<int> sorted = a;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == std::vector<int>{0, 1, 2, 3});
  // Brute-force containment check against the leaf boxes.
  const auto boxes = leaf_boxes(t, 2);
  for (int i = 0; i < 4; ++i) {
    const auto& b = boxes[static_cast<std::size_t>(a[static_cast<std::size_t>(i)])];
    for (int j = 0; j < 2; ++j)
      CHECK((X(i, j) >= b[static_cast<std::size_t>(j)].first && X(i, j) < b[static_cast<std::size_t>(j)].second));
  }
}

TEST_CASE("grow, prune and change keep leaf numbering") {
  auto t = TreePartition().grow(0, {0, 0.5});
  t = t.grow(1, {0, 0.75});  // leaves: [<.5], [.5,.75), [>=.75]
  CHECK(t.n_leaves() == 3);
  const std::vector<double> a{0.6}, b{0.8}, c{0.1};
  CHECK(t.leaf_index(c) == 0);
  CHECK(t.leaf_index(a) == 1);
  CHECK(t.leaf_index(b) == 2);
  t = t.grow(0, {0, 0.25});
  CHECK(t.leaf_index(c) == 0);
  CHECK(t.leaf_index(a) == 2);
  CHECK(t.leaf_index(b) == 3);
  const auto nogs = t.nog_nodes();
  CHECK(nogs.size() == 2);
  const auto p = t.prune(nogs[0]);
  CHECK(p.n_leaves() == 3);
  CHECK(p.leaf_index(b) == 2);
  CHECK_THROWS_AS(t.prune(0), std::invalid_argument);
  const auto ch = t.change(nogs[1], {0, 0.9});
  CHECK(ch.leaf_index(b) == 2);
  // Prune then regrow the same rule gives the same tree back.
  const int id = nogs[1];
  const int leaf = p.n_leaves() - 1;
  CHECK(p.nog_nodes().size() == 1);
  (void)id;
  CHECK(p.grow(0, {0, 0.25}) == t);
  (void)leaf;
}

TEST_CASE("partition property for sampled trees") {
  const CovariateIndex data(uniform_design(200, 3, 1));
  TreePriorSpec spec;
  spec.alpha = 0.45;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0, 1);
  for (int rep = 0; rep < 30; ++rep) {
    const auto t = sample_tree_chipman(spec, data, rng);
    CHECK(t.n_leaves() >= 2);
    CHECK(is_valid(t, data.X(), spec.validity_constant));
    const auto boxes = leaf_boxes(t, 3);
    for (int i = 0; i < 1000 / 30; ++i) {
      const std::vector<double> x{u(rng), u(rng), u(rng)};
      int claims = 0;
      for (const auto& b : boxes) {
        bool in = true;
        for (int j = 0; j < 3; ++j)
          in = in && x[static_cast<std::size_t>(j)] >= b[static_cast<std::size_t>(j)].first &&
               x[static_cast<std::size_t>(j)] < b[static_cast<std::size_t>(j)].second;
        claims += in;
      }
      CHECK(claims == 1);
    }
  }
}

TEST_CASE("chipman split probabilities and log prior") {
  CHECK(chipman_split_probability(0.25, 2) == doctest::Approx(0.0625));
  CHECK(chipman_split_probability(0.25, 0) == 1.0);

  RowMatrix X(3, 1);
  X << 0.1, 0.5, 0.9;
  const CovariateIndex data(X);
  TreePriorSpec spec;
  spec.alpha = 0.3;
  TreePartition root;
  CHECK(log_prior_tree(spec, root, data) == -INFINITY);
  // Split at the middle value: the left child holds one point and cannot split further.
  const auto t = root.grow(0, {0, 0.5});
  CHECK(log_prior_tree(spec, t, data) == doctest::Approx(std::log(0.7) - std::log(3.0)));

  // With two points on each side both children can split: 2 log(1 - alpha) - log n.
  RowMatrix X4(4, 1);
  X4 << 0.1, 0.3, 0.6, 0.9;
  const CovariateIndex d4(X4);
  const auto t4 = root.grow(0, {0, 0.6});
  CHECK(log_prior_tree(spec, t4, d4) == doctest::Approx(2 * std::log(0.7) - std::log(4.0)));
  // A threshold that is not an observed value has zero prior probability.
  CHECK(log_prior_tree(spec, root.grow(0, {0, 0.55}), d4) == -INFINITY);
  // Empty cell: invalid.
  CHECK_THROWS_AS(log_prior_tree(spec, root.grow(0, {0, 0.1}), d4), std::invalid_argument);
}

TEST_CASE("chipman prior sums to one over enumerated trees") {
  RowMatrix X(3, 1);
  X << 0.2, 0.4, 0.8;
  const CovariateIndex data(X);
  for (double alpha : {0.1, 0.3, 0.49}) {
    for (int cap : {2, 4, 8}) {
      TreePriorSpec spec;
      spec.alpha = alpha;
      spec.max_depth = cap;
      double total = 0.0;
      for (const auto& t : oracle::enumerate_trees(data, cap)) total += std::exp(log_prior_tree_process(spec, t, data));
      CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  // Two covariates with a tie.
  RowMatrix X2(3, 2);
  X2 << 0.2, 0.5, 0.4, 0.5, 0.8, 0.1;
  const CovariateIndex d2(X2);
  TreePriorSpec spec;
  spec.alpha = 0.4;
  spec.max_depth = 5;
  double total = 0.0;
  for (const auto& t : oracle::enumerate_trees(d2, 5)) total += std::exp(log_prior_tree_process(spec, t, d2));
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("chipman sampler matches the branching-process mean leaf count") {
  const CovariateIndex data(uniform_design(2000, 2, 9));
  TreePriorSpec spec;
  spec.alpha = 0.4;
  std::mt19937_64 rng(21);
  const int draws = 10000;
  std::vector<double> k;
  for (int i = 0; i < draws; ++i) k.push_back(sample_tree_chipman(spec, data, rng).n_leaves());
  const auto pk = oracle::gw_leaf_count(0.4, 12, 200);
  double mean = 0.0;
  for (std::size_t j = 1; j < pk.size(); ++j) mean += static_cast<double>(j) * pk[j];
  const double se = std::sqrt(oracle::variance(k) / draws);
  CHECK(std::abs(oracle::mean(k) - mean) < 3 * se);
}

TEST_CASE("denison prior formulas") {
  CHECK(std::exp(denison_log_pk(1.0, 1)) == doctest::Approx(1.0 / (std::exp(1.0) - 1.0)));
  CHECK(std::exp(denison_log_pk(1.0, 1)) == doctest::Approx(0.5820).epsilon(1e-4));
  CHECK(std::exp(denison_log_count(2, 5, 2)) == doctest::Approx(10.0));
  double s = 0.0;
  for (int K = 1; K < 80; ++K) s += std::exp(denison_log_pk(10.0, K));
  CHECK(s == doctest::Approx(1.0).epsilon(1e-12));

  RowMatrix X(10, 2);
  for (int i = 0; i < 10; ++i) {
    X(i, 0) = (i + 0.5) / 10;
    X(i, 1) = ((i * 3) % 10 + 0.5) / 10;
  }
  const CovariateIndex data(X);
  TreePriorSpec spec;
  spec.kind = TreePriorSpec::Kind::denison;
  spec.lambda = 2.0;
  auto t = TreePartition().grow(0, {0, 0.55}).grow(0, {1, 0.35});
  REQUIRE(t.n_leaves() == 3);
  const double expected = std::log(8.0 / (6.0 * (std::exp(2.0) - 1.0))) - std::log(360.0);
  CHECK(log_prior_tree(spec, t, data) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(log_prior_tree(spec, TreePartition(), data) == doctest::Approx(denison_log_pk(2.0, 1)));
}

TEST_CASE("denison sampler") {
  const CovariateIndex data(uniform_design(100, 2, 3));
  TreePriorSpec spec;
  spec.kind = TreePriorSpec::Kind::denison;
  spec.lambda = 1.0;
  std::mt19937_64 rng(5);
  int ones = 0;
  const int draws = 4000;
  for (int i = 0; i < draws; ++i) {
    const auto t = sample_tree_denison(spec, data, rng);
    CHECK(is_valid(t, data.X(), 1));
    ones += t.n_leaves() == 1;
  }
  // Leaf-count bias from rejection is small at lambda = 1.
  const double p = 1.0 / (std::exp(1.0) - 1.0);
  CHECK(std::abs(ones / double(draws) - p) < 4 * std::sqrt(p * (1 - p) / draws) + 0.01);
}

TEST_CASE("validity") {
  RowMatrix X(10, 1);
  for (int i = 0; i < 10; ++i) X(i, 0) = (i + 0.5) / 10;
  CHECK(is_valid(TreePartition(), X, 1));
  CHECK_FALSE(is_valid(TreePartition().grow(0, {0, 0.01}), X, 1));
  CHECK(is_valid(TreePartition().grow(0, {0, 0.55}), X, 5));
  CHECK_FALSE(is_valid(TreePartition().grow(0, {0, 0.45}), X, 5));
}

TEST_CASE("duplicate covariates and unsplittable axes") {
  RowMatrix X(4, 2);
  X << 0.3, 0.5, 0.3, 0.1, 0.3, 0.9, 0.3, 0.4;
  const CovariateIndex data(X);
  std::vector<int> rows{0, 1, 2, 3};
  CHECK(data.splittable_axes(rows) == std::vector<int>{1});
  CHECK(data.count_distinct(rows, 0) == 1);
  TreePriorSpec spec;
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) {
    const auto t = sample_tree_chipman(spec, data, rng);
    for (int id : t.internal_nodes()) CHECK(t.node(id).rule.axis == 1);
  }
  RowMatrix Xc(3, 1);
  Xc << 0.4, 0.4, 0.4;
  const CovariateIndex dc(Xc);
  // No splittable axis: the root is a leaf with probability one.
  CHECK(log_prior_tree(spec, TreePartition(), dc) == 0.0);
  CHECK(sample_tree_chipman(spec, dc, rng).n_leaves() == 1);
}

TEST_CASE("spec validation") {
  TreePriorSpec s;
  s.alpha = 0.5;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s.alpha = 0.0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = TreePriorSpec{};
  s.validity_constant = 0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  CHECK_THROWS_AS(TreePriorSpec::parse_kind("cgm"), std::invalid_argument);
}

TEST_CASE("rejection cap") {
  RowMatrix X(2, 1);
  X << 0.2, 0.7;
  const CovariateIndex data(X);
  TreePriorSpec spec;
  spec.validity_constant = 2;
  std::mt19937_64 rng(1);
  // The root must split but any split leaves a cell with fewer than two points.
  CHECK_THROWS_AS(sample_tree_chipman(spec, data, rng), std::runtime_error);
}
