#include "gbart/io.hpp"

#include <openssl/evp.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

namespace gbart {

namespace {

json tree_node_json(const TreePartition& tree, int id) {
  const auto& n = tree.node(id);
  if (n.is_leaf()) return json{{"leaf", tree.leaf_number(id)}};
  return json{{"axis", n.rule.axis},
              {"threshold", n.rule.threshold},
              {"left", tree_node_json(tree, n.left)},
              {"right", tree_node_json(tree, n.right)}};
}

int read_tree_node(const json& j, int parent, std::vector<TreeNode>& nodes, int& next_leaf) {
  const int id = static_cast<int>(nodes.size());
  nodes.push_back(TreeNode{parent, -1, -1, 0, {}});
  if (j.contains("leaf")) {
    if (j.at("leaf").get<int>() != next_leaf) throw std::invalid_argument("tree JSON leaves out of order");
    ++next_leaf;
    return id;
  }
  nodes[static_cast<std::size_t>(id)].rule = SplitRule{j.at("axis").get<int>(), j.at("threshold").get<double>()};
  const int l = read_tree_node(j.at("left"), id, nodes, next_leaf);
  nodes[static_cast<std::size_t>(id)].left = l;
  const int r = read_tree_node(j.at("right"), id, nodes, next_leaf);
  nodes[static_cast<std::size_t>(id)].right = r;
  return id;
}

json matrix_json(const RowMatrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(std::move(r));
  }
  return rows;
}

RowMatrix matrix_from_json(const json& j, int cols) {
  RowMatrix m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (static_cast<int>(j[i].size()) != cols) throw std::invalid_argument("matrix row has wrong length");
    for (int c = 0; c < cols; ++c) m(static_cast<Eigen::Index>(i), c) = j[i][static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

json vector_json(const Vector& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Vector vector_from_json(const json& j) {
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, int line) {
  double v = 0.0;
  const char* b = s.data();
  const char* e = s.data() + s.size();
  if (!s.empty() && *b == '+') ++b;
  const auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || ptr != e) throw std::invalid_argument(fmt::format("line {}: not a number: '{}'", line, s));
  return v;
}

}  // namespace

json tree_to_json(const TreePartition& tree) { return tree_node_json(tree, 0); }

TreePartition tree_from_json(const json& j) {
  std::vector<TreeNode> nodes;
  int next_leaf = 0;
  read_tree_node(j, -1, nodes, next_leaf);
  return TreePartition::from_nodes(std::move(nodes));
}

json forest_to_json(const Forest& forest) {
  json trees = json::array();
  for (const auto& c : forest.trees())
    trees.push_back(json{{"tree", tree_to_json(c.tree)}, {"leaf_values", matrix_json(c.leaf_values)}});
  return json{{"dim", forest.dim()}, {"trees", std::move(trees)}};
}

Forest forest_from_json(const json& j) {
  Forest f(j.at("dim").get<int>());
  for (const auto& t : j.at("trees")) f.add(tree_from_json(t.at("tree")), matrix_from_json(t.at("leaf_values"), f.dim()));
  return f;
}

json likelihood_to_json(const Likelihood& lik) {
  const char* family = lik.family() == Likelihood::Family::gaussian  ? "gaussian"
                       : lik.family() == Likelihood::Family::poisson ? "poisson"
                                                                     : "multinomial";
  return json{{"family", family}, {"link", lik.link().name()}, {"sigma", lik.sigma()}, {"n_classes", lik.n_classes()}};
}

Likelihood likelihood_from_json(const json& j) {
  return make_likelihood(j.at("family").get<std::string>(), j.at("link").get<std::string>(),
                         j.at("sigma").get<double>(), j.at("n_classes").get<int>());
}

json truth_to_json(const TruthFunction& truth) {
  json j{{"kind", truth_kind_name(truth.kind())}, {"q", truth.q()}, {"dim", truth.dim()}};
  j["clip"] = std::isfinite(truth.clip()) ? json(truth.clip()) : json(nullptr);
  switch (truth.kind()) {
    case TruthKind::step: {
      json cells = json::array();
      for (const auto& c : truth.cells())
        cells.push_back(json{{"lo", c.lo}, {"hi", c.hi}, {"height", vector_json(c.height)}});
      j["cells"] = std::move(cells);
      break;
    }
    case TruthKind::monotone: {
      j["offset"] = truth.offset();
      j["slopes"] = truth.slopes();
      json ramps = json::array();
      for (const auto& r : truth.ramps())
        ramps.push_back(
            json{{"axis", r.axis}, {"amplitude", r.amplitude}, {"center", r.center}, {"steepness", r.steepness}});
      j["ramps"] = std::move(ramps);
      break;
    }
    case TruthKind::hoelder: {
      j["nu"] = truth.nu();
      j["offset"] = truth.offset();
      json bumps = json::array();
      for (const auto& b : truth.bumps()) bumps.push_back(json{{"center", b.center}, {"coefficient", b.coefficient}});
      j["bumps"] = std::move(bumps);
      j["hoelder_constant"] = truth.hoelder_constant();
      break;
    }
  }
  return j;
}

TruthFunction truth_from_json(const json& j) {
  const auto kind = parse_truth_kind(j.at("kind").get<std::string>());
  const int q = j.at("q").get<int>();
  TruthFunction t = TruthFunction::constant(q, 0.0);
  switch (kind) {
    case TruthKind::step: {
      std::vector<StepCell> cells;
      for (const auto& c : j.at("cells"))
        cells.push_back(StepCell{c.at("lo").get<std::vector<double>>(), c.at("hi").get<std::vector<double>>(),
                                 vector_from_json(c.at("height"))});
      t = TruthFunction::step(q, std::move(cells));
      break;
    }
    case TruthKind::monotone: {
      std::vector<MonotoneRamp> ramps;
      for (const auto& r : j.at("ramps"))
        ramps.push_back(MonotoneRamp{r.at("axis").get<int>(), r.at("amplitude").get<double>(),
                                     r.at("center").get<double>(), r.at("steepness").get<double>()});
      t = TruthFunction::monotone(q, j.at("offset").get<double>(), j.at("slopes").get<std::vector<double>>(),
                                  std::move(ramps));
      break;
    }
    case TruthKind::hoelder: {
      std::vector<HoelderBump> bumps;
      for (const auto& b : j.at("bumps"))
        bumps.push_back(HoelderBump{b.at("center").get<std::vector<double>>(), b.at("coefficient").get<double>()});
      t = TruthFunction::hoelder(q, j.at("nu").get<double>(), j.at("offset").get<double>(), std::move(bumps));
      break;
    }
  }
  if (j.contains("clip") && !j.at("clip").is_null()) t = t.clipped(j.at("clip").get<double>());
  return t;
}

MinMaxScaling MinMaxScaling::fit(const RowMatrix& X) {
  if (X.rows() == 0) throw std::invalid_argument("cannot fit scaling on empty data");
  MinMaxScaling s;
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    s.min.push_back(X.col(j).minCoeff());
    s.max.push_back(X.col(j).maxCoeff());
  }
  return s;
}

MinMaxScaling MinMaxScaling::identity(int q) {
  MinMaxScaling s;
  s.min.assign(static_cast<std::size_t>(q), 0.0);
  s.max.assign(static_cast<std::size_t>(q), 1.0);
  return s;
}

RowMatrix MinMaxScaling::apply(const RowMatrix& X) const {
  if (static_cast<std::size_t>(X.cols()) != min.size()) throw std::invalid_argument("scaling has wrong column count");
  RowMatrix out(X.rows(), X.cols());
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    const double lo = min[static_cast<std::size_t>(j)], hi = max[static_cast<std::size_t>(j)];
    for (Eigen::Index i = 0; i < X.rows(); ++i)
      out(i, j) = hi > lo ? std::clamp((X(i, j) - lo) / (hi - lo), 0.0, 1.0) : 0.5;
  }
  return out;
}

json MinMaxScaling::to_json() const { return json{{"min", min}, {"max", max}}; }

MinMaxScaling MinMaxScaling::from_json(const json& j) {
  MinMaxScaling s;
  s.min = j.at("min").get<std::vector<double>>();
  s.max = j.at("max").get<std::vector<double>>();
  if (s.min.size() != s.max.size()) throw std::invalid_argument("scaling min and max differ in length");
  return s;
}

int Table::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return static_cast<int>(i);
  return -1;
}

Table read_csv(std::istream& in) {
  Table t;
  std::string line;
  int line_no = 0;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split_commas(line);
    if (t.header.empty()) {
      t.header = std::move(cells);
      std::set<std::string> seen;
      for (const auto& h : t.header)
        if (h.empty() || !seen.insert(h).second) throw std::invalid_argument("CSV header has empty or repeated names");
      continue;
    }
    if (cells.size() != t.header.size())
      throw std::invalid_argument(fmt::format("line {}: expected {} fields, got {}", line_no, t.header.size(), cells.size()));
    std::vector<double> r;
    for (const auto& c : cells) r.push_back(parse_double(c, line_no));
    rows.push_back(std::move(r));
  }
  if (t.header.empty()) throw std::invalid_argument("CSV has no header");
  t.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(t.header.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < t.header.size(); ++j)
      t.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return t;
}

Table read_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_csv(in);
}

void write_csv(std::ostream& out, const Table& table) {
  for (std::size_t j = 0; j < table.header.size(); ++j) out << (j ? "," : "") << table.header[j];
  out << '\n';
  for (Eigen::Index i = 0; i < table.values.rows(); ++i) {
    for (Eigen::Index j = 0; j < table.values.cols(); ++j) out << (j ? "," : "") << format_double(table.values(i, j));
    out << '\n';
  }
}

Dataset split_dataset(const Table& table, bool require_response) {
  Dataset d;
  std::vector<int> ycols, xcols;
  if (table.column("y") >= 0) {
    ycols.push_back(table.column("y"));
    if (table.column("y1") >= 0) throw std::invalid_argument("use either y or y1..yp, not both");
  } else {
    for (int k = 1; table.column("y" + std::to_string(k)) >= 0; ++k) ycols.push_back(table.column("y" + std::to_string(k)));
  }
  if (require_response && ycols.empty()) throw std::invalid_argument("no response column (y or y1..yp)");
  for (int j = 0; j < static_cast<int>(table.header.size()); ++j)
    if (std::find(ycols.begin(), ycols.end(), j) == ycols.end()) xcols.push_back(j);
  if (xcols.empty()) throw std::invalid_argument("no covariate columns");
  d.X.resize(table.values.rows(), static_cast<Eigen::Index>(xcols.size()));
  d.Y.resize(table.values.rows(), static_cast<Eigen::Index>(ycols.size()));
  for (std::size_t k = 0; k < xcols.size(); ++k) {
    d.covariate_names.push_back(table.header[static_cast<std::size_t>(xcols[k])]);
    d.X.col(static_cast<Eigen::Index>(k)) = table.values.col(xcols[k]);
  }
  for (std::size_t k = 0; k < ycols.size(); ++k) {
    d.response_names.push_back(table.header[static_cast<std::size_t>(ycols[k])]);
    d.Y.col(static_cast<Eigen::Index>(k)) = table.values.col(ycols[k]);
  }
  return d;
}

ConfigEntries parse_config(std::istream& in) {
  ConfigEntries out;
  std::set<std::string> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument(fmt::format("config line {}: expected key = value", line_no));
    std::string key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key.empty()) throw std::invalid_argument(fmt::format("config line {}: empty key", line_no));
    if (!seen.insert(key).second) throw std::invalid_argument(fmt::format("config line {}: duplicate key {}", line_no, key));
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

ConfigEntries parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return parse_config(in);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << content;
}

std::string sha1_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha1(), nullptr) != 1)
    throw std::runtime_error("SHA-1 digest failed");
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", md[i]);
  return hex;
}

std::string git_blob_sha1(const std::string& bytes) {
  std::string blob = "blob " + std::to_string(bytes.size());
  blob.push_back('\0');
  return sha1_hex(blob + bytes);
}

std::string format_double(double v) { return fmt::format("{}", v); }

DrawWriter::DrawWriter(std::ostream& out, const json& header) : out_(out) { out_ << header.dump() << '\n'; }

void DrawWriter::write(const Forest& forest, int chain, int iteration) {
  out_ << json{{"chain", chain}, {"iteration", iteration}, {"forest", forest_to_json(forest)}}.dump() << '\n';
}

DrawFile read_draws(std::istream& in) {
  DrawFile f;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const json j = json::parse(line);
    if (first) {
      f.header = j;
      first = false;
      continue;
    }
    f.draws.push_back(DrawRecord{j.at("chain").get<int>(), j.at("iteration").get<int>(), forest_from_json(j.at("forest"))});
  }
  if (first) throw std::invalid_argument("draw file is empty");
  return f;
}

DrawFile read_draws_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_draws(in);
}

}  // namespace gbart
