#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "gbart/forest.hpp"
#include "gbart/truth.hpp"

namespace gbart {

using json = nlohmann::json;

// Nested {"axis", "threshold", "left", "right"} for internal nodes and {"leaf": k} for leaves.
// Thresholds round-trip exactly.
json tree_to_json(const TreePartition& tree);
TreePartition tree_from_json(const json& j);

// {"dim": D, "trees": [{"tree": ..., "leaf_values": [[...], ...]}, ...]}
json forest_to_json(const Forest& forest);
Forest forest_from_json(const json& j);

// {"family", "link", "sigma", "n_classes"}
json likelihood_to_json(const Likelihood& lik);
Likelihood likelihood_from_json(const json& j);

json truth_to_json(const TruthFunction& truth);
TruthFunction truth_from_json(const json& j);

// Per-column affine map onto [0,1]. Constant columns map to 0.5; values outside the fitted
// range are clamped.
struct MinMaxScaling {
  std::vector<double> min, max;

  static MinMaxScaling fit(const RowMatrix& X);
  static MinMaxScaling identity(int q);
  RowMatrix apply(const RowMatrix& X) const;
  json to_json() const;
  static MinMaxScaling from_json(const json& j);
};

struct Table {
  std::vector<std::string> header;
  RowMatrix values;

  int column(const std::string& name) const;  // -1 if absent
};

Table read_csv(std::istream& in);
Table read_csv_file(const std::string& path);
void write_csv(std::ostream& out, const Table& table);

// Splits a table into covariates and responses: the response is the column "y" or the
// columns "y1".."yp"; everything else is a covariate, in file order.
struct Dataset {
  std::vector<std::string> covariate_names;
  std::vector<std::string> response_names;
  RowMatrix X;
  RowMatrix Y;
};

Dataset split_dataset(const Table& table, bool require_response = true);

// key = value per line; '#' starts a comment; blank lines ignored; duplicate keys rejected.
// Keys keep file order.
using ConfigEntries = std::vector<std::pair<std::string, std::string>>;
ConfigEntries parse_config(std::istream& in);
ConfigEntries parse_config_file(const std::string& path);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

std::string sha1_hex(const std::string& bytes);
// Hash git assigns to a blob with this content: sha1("blob <size>\0" + content).
std::string git_blob_sha1(const std::string& bytes);

// Exact decimal form of a double, used wherever reports must be bit-reproducible.
std::string format_double(double v);

// Draw files: the first line is a header record, each further line {"chain", "iteration",
// "forest"}.
struct DrawRecord {
  int chain = 0;
  int iteration = 0;
  Forest forest;
};

class DrawWriter {
 public:
  DrawWriter(std::ostream& out, const json& header);
  void write(const Forest& forest, int chain, int iteration);

 private:
  std::ostream& out_;
};

struct DrawFile {
  json header;
  std::vector<DrawRecord> draws;
};

DrawFile read_draws(std::istream& in);
DrawFile read_draws_file(const std::string& path);

}  // namespace gbart
