#include <cstring>
#include <random>
#include <sstream>

#include "doctest.h"
#include "gbart/io.hpp"

using namespace gbart;

namespace {

TreePartition random_tree(std::mt19937_64& rng, int q, int splits) {
  std::uniform_real_distribution<double> u(0, 1);
  TreePartition t;
  for (int s = 0; s < splits; ++s)
    t = t.grow(std::uniform_int_distribution<int>(0, t.n_leaves() - 1)(rng),
               {std::uniform_int_distribution<int>(0, q - 1)(rng), u(rng)});
  return t;
}

}  // namespace

TEST_CASE("tree JSON shape") {
  const TreePartition t = TreePartition().grow(0, {1, 0.5});
  const json j = tree_to_json(t);
  CHECK(j.dump() == R"({"axis":1,"left":{"leaf":0},"right":{"leaf":1},"threshold":0.5})");
  CHECK(tree_to_json(TreePartition()).dump() == R"({"leaf":0})");
}

TEST_CASE("tree and forest round-trip exactly") {
  std::mt19937_64 rng(11);
  for (int rep = 0; rep < 50; ++rep) {
    const auto t = random_tree(rng, 3, rep % 9);
    const auto back = tree_from_json(json::parse(tree_to_json(t).dump()));
    CHECK(back == t);
    for (int k = 0; k < t.n_nodes(); ++k) {
      const double a = t.node(k).rule.threshold, b = back.node(k).rule.threshold;
      CHECK(std::memcmp(&a, &b, sizeof a) == 0);
    }
  }
  Forest f(2);
  std::normal_distribution<double> z;
  for (int k = 0; k < 4; ++k) {
    auto t = random_tree(rng, 2, k + 1);
    RowMatrix v(t.n_leaves(), 2);
    for (int i = 0; i < v.rows(); ++i) v.row(i) << z(rng) / 3, z(rng) * 1e-7;
    f.add(t, v);
  }
  const Forest g = forest_from_json(json::parse(forest_to_json(f).dump()));
  REQUIRE(g.n_trees() == 4);
  RowMatrix X(200, 2);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 200; ++i) X.row(i) << u(rng), u(rng);
  CHECK((f.evaluate_all(X).array() == g.evaluate_all(X).array()).all());
  CHECK_THROWS(tree_from_json(json::parse(R"({"axis":0,"threshold":0.5,"left":{"leaf":1},"right":{"leaf":0}})")));
}

TEST_CASE("likelihood round-trip") {
  for (const auto& lik : {Likelihood::gaussian(0.3), Likelihood::poisson({LinkKind::exp}),
                          Likelihood::poisson({LinkKind::softplus}), Likelihood::multinomial(4)}) {
    const auto back = likelihood_from_json(json::parse(likelihood_to_json(lik).dump()));
    CHECK(back.name() == lik.name());
    CHECK(back.natural_dim() == lik.natural_dim());
    CHECK(back.sigma() == lik.sigma());
    CHECK(back.link().kind == lik.link().kind);
  }
}

TEST_CASE("truth round-trip") {
  std::mt19937_64 rng(5);
  const std::vector<TruthFunction> truths{
      random_step_truth(2, {-1.5, -0.5, 0.5, 1.5}, rng), random_monotone_truth(1, -1, 1, 3, rng),
      random_hoelder_truth(2, 0.5, 2.0, 3, rng), random_hoelder_truth(1, 1.0, 2.0, 2, rng).clipped(0.3)};
  std::uniform_real_distribution<double> u(0, 1);
  for (const auto& t : truths) {
    const auto back = truth_from_json(json::parse(truth_to_json(t).dump()));
    CHECK(back.kind() == t.kind());
    CHECK(back.q() == t.q());
    for (int i = 0; i < 500; ++i) {
      std::vector<double> x(static_cast<std::size_t>(t.q()));
      for (auto& v : x) v = u(rng);
      CHECK(back.evaluate1(x) == t.evaluate1(x));
    }
  }
}

TEST_CASE("CSV reading and dataset split") {
  std::istringstream in("x1, x2 ,y\n0.5,1e-3,2\n\n-1,+4,0\r\n");
  const Table t = read_csv(in);
  CHECK(t.header == std::vector<std::string>{"x1", "x2", "y"});
  REQUIRE(t.values.rows() == 2);
  CHECK(t.values(1, 1) == 4.0);
  const Dataset d = split_dataset(t);
  CHECK(d.covariate_names == std::vector<std::string>{"x1", "x2"});
  CHECK(d.Y(0, 0) == 2.0);

  std::istringstream multi("y1,a,y2,y3\n1,0.1,0,0\n0,0.2,0,1\n");
  const Dataset m = split_dataset(read_csv(multi));
  CHECK(m.response_names == std::vector<std::string>{"y1", "y2", "y3"});
  CHECK(m.X.cols() == 1);
  CHECK(m.Y(1, 2) == 1.0);

  std::istringstream ragged("a,y\n1\n");
  CHECK_THROWS_AS(read_csv(ragged), std::invalid_argument);
  std::istringstream bad("a,y\n1,zz\n");
  CHECK_THROWS_AS(read_csv(bad), std::invalid_argument);
  std::istringstream dup("a,a\n1,2\n");
  CHECK_THROWS_AS(read_csv(dup), std::invalid_argument);
  std::istringstream none("a,b\n1,2\n");
  CHECK_THROWS_AS(split_dataset(read_csv(none)), std::invalid_argument);
  std::istringstream none2("a,b\n1,2\n");
  CHECK(split_dataset(read_csv(none2), false).Y.cols() == 0);

  Table w{{"a", "y"}, RowMatrix(1, 2)};
  w.values << 0.1, 1.0 / 3;
  std::ostringstream out;
  write_csv(out, w);
  std::istringstream again(out.str());
  CHECK(read_csv(again).values(0, 1) == 1.0 / 3);
}

TEST_CASE("min-max scaling") {
  RowMatrix X(3, 2);
  X << 2, 7, 4, 7, 3, 7;
  const auto s = MinMaxScaling::fit(X);
  const RowMatrix Z = s.apply(X);
  CHECK(Z(0, 0) == 0.0);
  CHECK(Z(1, 0) == 1.0);
  CHECK(Z(2, 0) == 0.5);
  CHECK(Z(0, 1) == 0.5);
  RowMatrix out(1, 2);
  out << 10, 0;
  CHECK(s.apply(out)(0, 0) == 1.0);
  const auto back = MinMaxScaling::from_json(json::parse(s.to_json().dump()));
  CHECK(back.min == s.min);
  CHECK(back.max == s.max);
}

TEST_CASE("config grammar") {
  std::istringstream in("# comment\nregime = step\n\n n_grid=200, 500 # trailing\nempty =\n");
  const auto c = parse_config(in);
  REQUIRE(c.size() == 3);
  CHECK(c[0] == std::pair<std::string, std::string>{"regime", "step"});
  CHECK(c[1].second == "200, 500");
  CHECK(c[2].second.empty());
  std::istringstream dup("a = 1\na = 2\n");
  CHECK_THROWS_AS(parse_config(dup), std::invalid_argument);
  std::istringstream noeq("just words\n");
  CHECK_THROWS_AS(parse_config(noeq), std::invalid_argument);
}

TEST_CASE("content hashes") {
  // Reference values from `git hash-object` and the SHA-1 test vectors.
  CHECK(sha1_hex("abc") == "a9993e364706816aba3e25717850c26c9cd0d89d");
  CHECK(git_blob_sha1("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  CHECK(git_blob_sha1("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
}

TEST_CASE("double formatting round-trips") {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> z;
  for (int i = 0; i < 1000; ++i) {
    const double v = z(rng) * std::pow(10.0, i % 40 - 20);
    CHECK(std::stod(format_double(v)) == v);
  }
  CHECK(format_double(0.5) == "0.5");
}

TEST_CASE("draw files") {
  std::mt19937_64 rng(3);
  std::ostringstream out;
  {
    DrawWriter w(out, json{{"likelihood", "gaussian"}});
    for (int i = 0; i < 3; ++i) {
      Forest f(1);
      const auto t = random_tree(rng, 2, i);
      f.add(t, RowMatrix::Constant(t.n_leaves(), 1, 0.1 * i));
      w.write(f, 0, 10 * i);
    }
  }
  std::istringstream in(out.str());
  const auto d = read_draws(in);
  CHECK(d.header.at("likelihood") == "gaussian");
  REQUIRE(d.draws.size() == 3);
  CHECK(d.draws[2].iteration == 20);
  CHECK(d.draws[2].forest.tree(0).tree.n_leaves() == 3);
  std::istringstream empty("");
  CHECK_THROWS(read_draws(empty));
}
