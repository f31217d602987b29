#include "gbart/truth.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <stdexcept>

namespace gbart {

std::string truth_kind_name(TruthKind k) {
  switch (k) {
    case TruthKind::step: return "step";
    case TruthKind::monotone: return "monotone";
    case TruthKind::hoelder: return "hoelder";
  }
  return "?";
}

TruthKind parse_truth_kind(const std::string& s) {
  if (s == "step") return TruthKind::step;
  if (s == "monotone") return TruthKind::monotone;
  if (s == "hoelder" || s == "holder") return TruthKind::hoelder;
  throw std::invalid_argument("unknown truth kind: " + s);
}

std::string regime_name(Regime r) { return truth_kind_name(static_cast<TruthKind>(r)); }

Regime parse_regime(const std::string& s) { return static_cast<Regime>(parse_truth_kind(s)); }

bool StepCell::contains(std::span<const double> x) const {
  for (std::size_t j = 0; j < lo.size(); ++j) {
    if (x[j] < lo[j]) return false;
    if (!(x[j] < hi[j] || (hi[j] == 1.0 && x[j] <= 1.0))) return false;
  }
  return true;
}

namespace {

double box_volume(const std::vector<double>& lo, const std::vector<double>& hi) {
  double v = 1.0;
  for (std::size_t j = 0; j < lo.size(); ++j) v *= hi[j] - lo[j];
  return v;
}

bool boxes_overlap(const StepCell& a, const StepCell& b) {
  for (std::size_t j = 0; j < a.lo.size(); ++j)
    if (a.hi[j] <= b.lo[j] || b.hi[j] <= a.lo[j]) return false;
  return true;
}

}  // namespace

TruthFunction TruthFunction::step(int q, std::vector<StepCell> cells) {
  if (q < 1) throw std::invalid_argument("q must be positive");
  if (cells.empty()) throw std::invalid_argument("step truth needs at least one cell");
  const auto dim = cells.front().height.size();
  if (dim < 1) throw std::invalid_argument("step heights must be nonempty");
  double vol = 0.0;
  for (const auto& c : cells) {
    if (static_cast<int>(c.lo.size()) != q || static_cast<int>(c.hi.size()) != q)
      throw std::invalid_argument("cell bounds must have q coordinates");
    if (c.height.size() != dim) throw std::invalid_argument("cell heights must share a dimension");
    for (int j = 0; j < q; ++j)
      if (!(0.0 <= c.lo[static_cast<std::size_t>(j)] && c.lo[static_cast<std::size_t>(j)] < c.hi[static_cast<std::size_t>(j)] &&
            c.hi[static_cast<std::size_t>(j)] <= 1.0))
        throw std::invalid_argument("cells must be nonempty boxes inside [0,1]^q");
    vol += box_volume(c.lo, c.hi);
  }
  for (std::size_t a = 0; a < cells.size(); ++a)
    for (std::size_t b = a + 1; b < cells.size(); ++b)
      if (boxes_overlap(cells[a], cells[b])) throw std::invalid_argument("step cells overlap");
  if (std::abs(vol - 1.0) > 1e-9) throw std::invalid_argument("step cells do not cover [0,1]^q");
  TruthFunction t;
  t.kind_ = TruthKind::step;
  t.q_ = q;
  t.dim_ = static_cast<int>(dim);
  t.cells_ = std::move(cells);
  return t;
}

TruthFunction TruthFunction::constant(int q, double value) {
  StepCell c{std::vector<double>(static_cast<std::size_t>(q), 0.0), std::vector<double>(static_cast<std::size_t>(q), 1.0),
             Vector::Constant(1, value)};
  return step(q, {c});
}

TruthFunction TruthFunction::monotone(int q, double offset, std::vector<double> slopes, std::vector<MonotoneRamp> ramps) {
  if (q < 1) throw std::invalid_argument("q must be positive");
  if (slopes.empty()) slopes.assign(static_cast<std::size_t>(q), 0.0);
  if (static_cast<int>(slopes.size()) != q) throw std::invalid_argument("need one slope per axis");
  for (double s : slopes)
    if (!(s >= 0)) throw std::invalid_argument("monotone slopes must be nonnegative");
  for (const auto& r : ramps)
    if (r.axis < 0 || r.axis >= q || !(r.amplitude >= 0) || !(r.steepness > 0))
      throw std::invalid_argument("invalid monotone ramp");
  TruthFunction t;
  t.kind_ = TruthKind::monotone;
  t.q_ = q;
  t.offset_ = offset;
  t.slopes_ = std::move(slopes);
  t.ramps_ = std::move(ramps);
  return t;
}

TruthFunction TruthFunction::hoelder(int q, double nu, double offset, std::vector<HoelderBump> bumps) {
  if (q < 1) throw std::invalid_argument("q must be positive");
  if (!(nu > 0 && nu <= 1)) throw std::invalid_argument("Hoelder exponent must lie in (0, 1]");
  for (const auto& b : bumps)
    if (static_cast<int>(b.center.size()) != q) throw std::invalid_argument("bump centre must have q coordinates");
  TruthFunction t;
  t.kind_ = TruthKind::hoelder;
  t.q_ = q;
  t.nu_ = nu;
  t.offset_ = offset;
  t.bumps_ = std::move(bumps);
  return t;
}

double TruthFunction::hoelder_constant() const {
  double L = 0.0;
  for (const auto& b : bumps_) L += std::abs(b.coefficient);
  return L;
}

Vector TruthFunction::evaluate(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != q_) throw std::invalid_argument("x has wrong dimension");
  if (kind_ == TruthKind::step) {
    for (const auto& c : cells_)
      if (c.contains(x)) return c.height;
    throw std::invalid_argument("x is outside [0,1]^q");
  }
  Vector out(1);
  out[0] = evaluate1(x);
  return out;
}

double TruthFunction::evaluate1(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != q_) throw std::invalid_argument("x has wrong dimension");
  double v = offset_;
  switch (kind_) {
    case TruthKind::step:
      if (dim_ != 1) throw std::invalid_argument("evaluate1 needs a scalar truth");
      return evaluate(x)[0];
    case TruthKind::monotone:
      for (int j = 0; j < q_; ++j) v += slopes_[static_cast<std::size_t>(j)] * x[static_cast<std::size_t>(j)];
      for (const auto& r : ramps_) v += r.amplitude * sigmoid(r.steepness * (x[static_cast<std::size_t>(r.axis)] - r.center));
      break;
    case TruthKind::hoelder:
      for (const auto& b : bumps_) {
        double d2 = 0.0;
        for (int j = 0; j < q_; ++j) {
          const double d = x[static_cast<std::size_t>(j)] - b.center[static_cast<std::size_t>(j)];
          d2 += d * d;
        }
        v += b.coefficient * std::pow(std::sqrt(d2), nu_);
      }
      break;
  }
  return std::clamp(v, -clip_, clip_);
}

RowMatrix TruthFunction::evaluate_all(const RowMatrix& X) const {
  RowMatrix out(X.rows(), dim_);
  for (Eigen::Index i = 0; i < X.rows(); ++i) out.row(i) = evaluate(row_span(X, i)).transpose();
  return out;
}

TruthFunction TruthFunction::clipped(double bound) const {
  if (!(bound > 0)) throw std::invalid_argument("clip bound must be positive");
  TruthFunction t = *this;
  if (kind_ == TruthKind::step) {
    for (auto& c : t.cells_) c.height = c.height.cwiseMax(-bound).cwiseMin(bound);
  } else {
    t.clip_ = std::min(clip_, bound);
  }
  return t;
}

double TruthFunction::sup_norm_bound() const {
  switch (kind_) {
    case TruthKind::step: {
      double m = 0.0;
      for (const auto& c : cells_) m = std::max(m, c.height.cwiseAbs().maxCoeff());
      return m;
    }
    case TruthKind::monotone: {
      const std::vector<double> zero(static_cast<std::size_t>(q_), 0.0), one(static_cast<std::size_t>(q_), 1.0);
      return std::max(std::abs(evaluate1(zero)), std::abs(evaluate1(one)));
    }
    case TruthKind::hoelder: {
      double m = std::abs(offset_);
      for (const auto& b : bumps_) {
        double d2 = 0.0;
        for (double c : b.center) d2 += std::max(c, 1 - c) * std::max(c, 1 - c);
        m += std::abs(b.coefficient) * std::pow(std::sqrt(d2), nu_);
      }
      return std::min(m, clip_);
    }
  }
  return 0.0;
}

int step_complexity(const TruthFunction& truth) {
  if (truth.kind() != TruthKind::step) throw std::invalid_argument("step_complexity needs a step truth");
  const int q = truth.q();
  std::vector<std::vector<double>> breaks(static_cast<std::size_t>(q));
  for (int j = 0; j < q; ++j) {
    auto& b = breaks[static_cast<std::size_t>(j)];
    b = {0.0, 1.0};
    for (const auto& c : truth.cells()) {
      b.push_back(c.lo[static_cast<std::size_t>(j)]);
      b.push_back(c.hi[static_cast<std::size_t>(j)]);
    }
    std::sort(b.begin(), b.end());
    b.erase(std::unique(b.begin(), b.end()), b.end());
  }
  std::vector<int> m(static_cast<std::size_t>(q));
  double n_boxes = 1.0;
  std::size_t n_elem = 1;
  for (int j = 0; j < q; ++j) {
    m[static_cast<std::size_t>(j)] = static_cast<int>(breaks[static_cast<std::size_t>(j)].size()) - 1;
    n_boxes *= 0.5 * m[static_cast<std::size_t>(j)] * (m[static_cast<std::size_t>(j)] + 1);
    n_elem *= static_cast<std::size_t>(m[static_cast<std::size_t>(j)]);
  }
  if (n_boxes > 2e6) throw std::runtime_error("step truth has too many boundaries for exact complexity");

  // Value id of each elementary cell, row-major over axes.
  std::vector<int> value_id(n_elem);
  std::vector<Vector> distinct;
  std::vector<int> idx(static_cast<std::size_t>(q), 0);
  std::vector<double> centre(static_cast<std::size_t>(q));
  for (std::size_t e = 0; e < n_elem; ++e) {
    std::size_t rem = e;
    for (int j = q - 1; j >= 0; --j) {
      const auto mj = static_cast<std::size_t>(m[static_cast<std::size_t>(j)]);
      idx[static_cast<std::size_t>(j)] = static_cast<int>(rem % mj);
      rem /= mj;
      const auto& b = breaks[static_cast<std::size_t>(j)];
      centre[static_cast<std::size_t>(j)] =
          0.5 * (b[static_cast<std::size_t>(idx[static_cast<std::size_t>(j)])] + b[static_cast<std::size_t>(idx[static_cast<std::size_t>(j)] + 1)]);
    }
    const Vector v = truth.evaluate(centre);
    auto it = std::find(distinct.begin(), distinct.end(), v);
    if (it == distinct.end()) {
      distinct.push_back(v);
      it = distinct.end() - 1;
    }
    value_id[e] = static_cast<int>(it - distinct.begin());
  }

  auto constant_on = [&](const std::vector<int>& box) {
    int first = -1;
    std::vector<int> i(static_cast<std::size_t>(q));
    for (int j = 0; j < q; ++j) i[static_cast<std::size_t>(j)] = box[static_cast<std::size_t>(2 * j)];
    while (true) {
      std::size_t flat = 0;
      for (int j = 0; j < q; ++j) flat = flat * static_cast<std::size_t>(m[static_cast<std::size_t>(j)]) + static_cast<std::size_t>(i[static_cast<std::size_t>(j)]);
      if (first < 0) first = value_id[flat];
      else if (value_id[flat] != first) return false;
      int j = q - 1;
      for (; j >= 0; --j) {
        if (++i[static_cast<std::size_t>(j)] < box[static_cast<std::size_t>(2 * j + 1)]) break;
        i[static_cast<std::size_t>(j)] = box[static_cast<std::size_t>(2 * j)];
      }
      if (j < 0) return true;
    }
  };

  std::map<std::vector<int>, int> memo;
  std::function<int(const std::vector<int>&)> best = [&](const std::vector<int>& box) -> int {
    if (auto it = memo.find(box); it != memo.end()) return it->second;
    int out = std::numeric_limits<int>::max();
    if (constant_on(box)) {
      out = 1;
    } else {
      for (int j = 0; j < q; ++j)
        for (int s = box[static_cast<std::size_t>(2 * j)] + 1; s < box[static_cast<std::size_t>(2 * j + 1)]; ++s) {
          auto left = box, right = box;
          left[static_cast<std::size_t>(2 * j + 1)] = s;
          right[static_cast<std::size_t>(2 * j)] = s;
          const int a = best(left);
          if (a + 1 >= out) continue;
          out = std::min(out, a + best(right));
        }
    }
    memo.emplace(box, out);
    return out;
  };
  std::vector<int> root;
  for (int j = 0; j < q; ++j) {
    root.push_back(0);
    root.push_back(m[static_cast<std::size_t>(j)]);
  }
  return best(root);
}

TruthFunction monotone_kd_approximation(const TruthFunction& truth, double eps) {
  if (truth.kind() != TruthKind::monotone) throw std::invalid_argument("monotone_kd_approximation needs a monotone truth");
  if (!(eps > 0)) throw std::invalid_argument("eps must be positive");
  const int q = truth.q();
  const std::vector<double> zero(static_cast<std::size_t>(q), 0.0), one(static_cast<std::size_t>(q), 1.0);
  const double lo = truth.evaluate1(zero), hi = truth.evaluate1(one);
  std::vector<StepCell> cells;
  auto height = [](double v) { return Vector::Constant(1, v); };

  if (q == 1) {
    if (hi - lo <= 0) return TruthFunction::step(1, {{{0.0}, {1.0}, height(lo)}});
    const int nb = std::max(1, static_cast<int>(std::ceil((hi - lo) / eps - 1e-12)));
    const double w = (hi - lo) / nb;
    std::vector<double> b{0.0};
    for (int k = 1; k < nb; ++k) {
      const double y = lo + k * w;
      double a = 0.0, c = 1.0;
      for (int it = 0; it < 200 && c - a > 0; ++it) {
        const double mid = 0.5 * (a + c);
        if (mid <= a || mid >= c) break;
        const std::vector<double> x{mid};
        (truth.evaluate1(x) >= y ? c : a) = mid;
      }
      b.push_back(c);
    }
    b.push_back(1.0);
    for (int k = 1; k <= nb; ++k) {
      if (!(b[static_cast<std::size_t>(k)] > b[static_cast<std::size_t>(k - 1)])) continue;
      cells.push_back({{b[static_cast<std::size_t>(k - 1)]}, {b[static_cast<std::size_t>(k)]}, height(lo + (k - 0.5) * w)});
    }
    return TruthFunction::step(1, std::move(cells));
  }

  std::function<void(std::vector<double>, std::vector<double>, int)> split = [&](std::vector<double> a,
                                                                                 std::vector<double> c, int depth) {
    const double fa = truth.evaluate1(a), fc = truth.evaluate1(c);
    if (fc - fa <= eps || depth >= 40 * q) {
      cells.push_back({a, c, height(0.5 * (fa + fc))});
      return;
    }
    if (cells.size() > 200000) throw std::runtime_error("monotone approximation needs too many cells");
    const auto axis = static_cast<std::size_t>(depth % q);
    const double mid = 0.5 * (a[axis] + c[axis]);
    auto c_left = c, a_right = a;
    c_left[axis] = mid;
    a_right[axis] = mid;
    split(a, c_left, depth + 1);
    split(a_right, c, depth + 1);
  };
  split(zero, one, 0);
  return TruthFunction::step(q, std::move(cells));
}

Assumption2Result check_assumption2(const RowMatrix& X, int s, double M, CellDiameter diameter) {
  const int n = static_cast<int>(X.rows());
  const int q = static_cast<int>(X.cols());
  if (n == 0 || q == 0) throw std::invalid_argument("check_assumption2 needs nonempty data");
  if (s < 0) throw std::invalid_argument("s must be nonnegative");
  if (!(M > 0)) throw std::invalid_argument("M must be positive");
  const int depth = q * s;
  if (depth > 24) throw std::invalid_argument("k-d tree would have too many cells");

  struct Cell {
    std::vector<int> rows;
    std::vector<double> lo, hi;
  };
  std::vector<int> all(static_cast<std::size_t>(n));
  std::iota(all.begin(), all.end(), 0);
  std::vector<Cell> cells{{all, std::vector<double>(static_cast<std::size_t>(q), 0.0),
                           std::vector<double>(static_cast<std::size_t>(q), 1.0)}};
  for (int d = 0; d < depth; ++d) {
    const int axis = d % q;
    std::vector<Cell> next;
    for (auto& c : cells) {
      // Order by the split axis, ties by the full coordinate vector, so the result ignores row order.
      std::sort(c.rows.begin(), c.rows.end(), [&](int a, int b) {
        if (X(a, axis) != X(b, axis)) return X(a, axis) < X(b, axis);
        for (int j = 0; j < q; ++j)
          if (X(a, j) != X(b, j)) return X(a, j) < X(b, j);
        return false;
      });
      const std::size_t half = c.rows.size() / 2;
      double thr = 0.5 * (c.lo[static_cast<std::size_t>(axis)] + c.hi[static_cast<std::size_t>(axis)]);
      if (c.rows.size() >= 2) thr = 0.5 * (X(c.rows[half - 1], axis) + X(c.rows[half], axis));
      Cell l{{c.rows.begin(), c.rows.begin() + static_cast<std::ptrdiff_t>(half)}, c.lo, c.hi};
      Cell r{{c.rows.begin() + static_cast<std::ptrdiff_t>(half), c.rows.end()}, c.lo, c.hi};
      l.hi[static_cast<std::size_t>(axis)] = thr;
      r.lo[static_cast<std::size_t>(axis)] = thr;
      next.push_back(std::move(l));
      next.push_back(std::move(r));
    }
    cells = std::move(next);
  }

  Assumption2Result res;
  res.n_cells = static_cast<int>(cells.size());
  double weighted = 0.0;
  for (const auto& c : cells) {
    double d2 = 0.0;
    if (diameter == CellDiameter::geometric) {
      for (int j = 0; j < q; ++j) d2 += std::pow(c.hi[static_cast<std::size_t>(j)] - c.lo[static_cast<std::size_t>(j)], 2);
    } else if (!c.rows.empty()) {
      for (int j = 0; j < q; ++j) {
        double a = X(c.rows.front(), j), b = a;
        for (int r : c.rows) {
          a = std::min(a, X(r, j));
          b = std::max(b, X(r, j));
        }
        d2 += (b - a) * (b - a);
      }
    }
    const double diam = std::sqrt(d2);
    res.lhs = std::max(res.lhs, diam);
    weighted += static_cast<double>(c.rows.size()) / n * diam;
  }
  res.rhs = M * weighted;
  res.passes = res.lhs < res.rhs;
  return res;
}

double theoretical_rate(Regime regime, int n, const RateParams& params, double gamma) {
  if (n < 2) throw std::invalid_argument("theoretical_rate needs n >= 2");
  const double ln = std::log(static_cast<double>(n));
  switch (regime) {
    case Regime::step: {
      if (params.K_f0 < 1) throw std::invalid_argument("K_f0 must be positive");
      if (params.K_f0 >= n) throw std::invalid_argument("K_f0 must be smaller than n");
      const double K = params.K_f0;
      return std::sqrt(K * std::pow(std::log(n / K), 2 * gamma)) / std::sqrt(static_cast<double>(n));
    }
    case Regime::monotone:
      if (params.q < 1) throw std::invalid_argument("q must be positive");
      return std::pow(static_cast<double>(n), -1.0 / (2.0 + params.q)) * std::sqrt(ln);
    case Regime::hoelder:
      if (params.q < 1) throw std::invalid_argument("q must be positive");
      if (!(params.nu > 0 && params.nu <= 1)) throw std::invalid_argument("nu must lie in (0, 1]");
      return std::pow(static_cast<double>(n), -params.nu / (2 * params.nu + params.q)) * std::sqrt(ln);
  }
  return 0.0;
}

TruthFunction random_step_truth(int q, const std::vector<double>& heights, std::mt19937_64& rng) {
  if (heights.empty()) throw std::invalid_argument("need at least one height");
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<StepCell> cells{{std::vector<double>(static_cast<std::size_t>(q), 0.0),
                               std::vector<double>(static_cast<std::size_t>(q), 1.0), Vector::Zero(1)}};
  while (cells.size() < heights.size()) {
    double total = 0.0;
    for (const auto& c : cells) total += box_volume(c.lo, c.hi);
    double pick = u(rng) * total;
    std::size_t k = 0;
    for (; k + 1 < cells.size(); ++k) {
      pick -= box_volume(cells[k].lo, cells[k].hi);
      if (pick < 0) break;
    }
    const auto axis = static_cast<std::size_t>(std::uniform_int_distribution<int>(0, q - 1)(rng));
    StepCell right = cells[k];
    const double t = cells[k].lo[axis] + (0.25 + 0.5 * u(rng)) * (cells[k].hi[axis] - cells[k].lo[axis]);
    cells[k].hi[axis] = t;
    right.lo[axis] = t;
    cells.push_back(std::move(right));
  }
  std::vector<double> h = heights;
  std::shuffle(h.begin(), h.end(), rng);
  for (std::size_t k = 0; k < cells.size(); ++k) cells[k].height = Vector::Constant(1, h[k]);
  return TruthFunction::step(q, std::move(cells));
}

TruthFunction grid_step_truth(int q, const std::vector<double>& heights) {
  const std::size_t K = std::size_t{1} << q;
  if (heights.size() != K) throw std::invalid_argument("grid step truth needs 2^q heights");
  std::vector<StepCell> cells;
  for (std::size_t k = 0; k < K; ++k) {
    StepCell c;
    for (int j = 0; j < q; ++j) {
      const bool upper = (k >> j) & 1U;
      c.lo.push_back(upper ? 0.5 : 0.0);
      c.hi.push_back(upper ? 1.0 : 0.5);
    }
    c.height = Vector::Constant(1, heights[k]);
    cells.push_back(std::move(c));
  }
  return TruthFunction::step(q, std::move(cells));
}

TruthFunction random_monotone_truth(int q, double lo, double hi, int n_ramps, std::mt19937_64& rng) {
  if (!(hi > lo)) throw std::invalid_argument("monotone range needs hi > lo");
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> slopes(static_cast<std::size_t>(q));
  for (auto& s : slopes) s = 0.2 + 0.8 * u(rng);
  std::vector<MonotoneRamp> ramps;
  for (int r = 0; r < n_ramps; ++r)
    ramps.push_back({std::uniform_int_distribution<int>(0, q - 1)(rng), 0.5 + u(rng), 0.2 + 0.6 * u(rng), 4 + 12 * u(rng)});
  const auto raw = TruthFunction::monotone(q, 0.0, slopes, ramps);
  const std::vector<double> zero(static_cast<std::size_t>(q), 0.0), one(static_cast<std::size_t>(q), 1.0);
  const double f0 = raw.evaluate1(zero), f1 = raw.evaluate1(one);
  const double scale = (hi - lo) / (f1 - f0);
  for (auto& s : slopes) s *= scale;
  for (auto& r : ramps) r.amplitude *= scale;
  return TruthFunction::monotone(q, lo - scale * f0, slopes, ramps);
}

TruthFunction random_hoelder_truth(int q, double nu, double constant, int n_bumps, std::mt19937_64& rng) {
  if (n_bumps < 1) throw std::invalid_argument("need at least one bump");
  if (!(constant > 0)) throw std::invalid_argument("Hoelder constant must be positive");
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<HoelderBump> bumps;
  double total = 0.0;
  for (int b = 0; b < n_bumps; ++b) {
    HoelderBump h;
    for (int j = 0; j < q; ++j) h.center.push_back(u(rng));
    h.coefficient = (u(rng) < 0.5 ? -1.0 : 1.0) * (0.5 + 0.5 * u(rng));
    total += std::abs(h.coefficient);
    bumps.push_back(std::move(h));
  }
  for (auto& b : bumps) b.coefficient *= constant / total;
  // Centre so the mean over the cube is near zero.
  const auto raw = TruthFunction::hoelder(q, nu, 0.0, bumps);
  double mean = 0.0;
  const int probes = 4096;
  std::vector<double> x(static_cast<std::size_t>(q));
  for (int i = 0; i < probes; ++i) {
    for (auto& v : x) v = u(rng);
    mean += raw.evaluate1(x);
  }
  return TruthFunction::hoelder(q, nu, -mean / probes, std::move(bumps));
}

ClipResult enforce_sup_norm(const TruthFunction& truth, int n, double factor) {
  if (n < 2) throw std::invalid_argument("enforce_sup_norm needs n >= 2");
  const double bound = factor * std::sqrt(std::log(static_cast<double>(n)));
  if (truth.sup_norm_bound() <= bound) return {truth, false, bound};
  return {truth.clipped(bound), true, bound};
}

SyntheticData synthesize(const TruthFunction& truth, const Likelihood& lik, int n, std::mt19937_64& rng) {
  if (n < 1) throw std::invalid_argument("n must be positive");
  if (truth.dim() != lik.natural_dim()) throw std::invalid_argument("truth dimension does not match likelihood");
  std::uniform_real_distribution<double> u(0, 1);
  SyntheticData d;
  d.X.resize(n, truth.q());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < truth.q(); ++j) d.X(i, j) = u(rng);
  d.F0 = truth.evaluate_all(d.X);
  d.Y.resize(n, lik.response_dim());
  for (int i = 0; i < n; ++i) d.Y.row(i) = lik.sample(row_span(d.F0, i), rng).transpose();
  return d;
}

}  // namespace gbart
