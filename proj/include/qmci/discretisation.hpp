// Copyright 2026 The qmci-lab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "qmci/distributions.hpp"
#include "qmci/io.hpp"
#include "qmci/rng.hpp"

namespace qmci {

// Mid-point grid over [a, b] with N = 2^n cells; x_i sits at the centre of cell i.
class Grid {
 public:
  Grid(double a, double b, int n_qubits) : a_(a), b_(b), n_(n_qubits) {
    if (!(std::isfinite(a) && std::isfinite(b) && b > a))
      throw std::invalid_argument("Grid: need finite a < b");
    if (n_qubits < 1 || n_qubits > 30) throw std::invalid_argument("Grid: n_qubits must be in [1, 30]");
    size_ = std::size_t{1} << n_qubits;
    delta_ = (b - a) / static_cast<double>(size_);
    x0_ = a + 0.5 * delta_;
  }

  // Grid whose first and last points are x_lo and x_hi. The truncation edges
  // then sit half a cell outside the given support points.
  static Grid from_support(double x_lo, double x_hi, int n_qubits) {
    if (!(x_hi > x_lo)) throw std::invalid_argument("Grid::from_support: need x_lo < x_hi");
    if (n_qubits < 1 || n_qubits > 30)
      throw std::invalid_argument("Grid: n_qubits must be in [1, 30]");
    double d = (x_hi - x_lo) / static_cast<double>((std::size_t{1} << n_qubits) - 1);
    Grid g(x_lo - 0.5 * d, x_hi + 0.5 * d, n_qubits);
    g.x0_ = x_lo;
    return g;
  }

  double a() const { return a_; }
  double b() const { return b_; }
  int n_qubits() const { return n_; }
  std::size_t size() const { return size_; }
  double delta() const { return delta_; }
  double point(std::size_t i) const { return x0_ + static_cast<double>(i) * delta_; }
  // Left edge of cell i; edge(size()) is b.
  double edge(std::size_t i) const {
    return i >= size_ ? b_ : x0_ - 0.5 * delta_ + static_cast<double>(i) * delta_;
  }
  std::vector<double> points() const {
    std::vector<double> x(size_);
    for (std::size_t i = 0; i < size_; ++i) x[i] = point(i);
    return x;
  }

  bool operator==(const Grid& o) const {
    return a_ == o.a_ && b_ == o.b_ && n_ == o.n_ && x0_ == o.x0_;
  }

 private:
  double a_, b_;
  int n_;
  std::size_t size_;
  double delta_;
  double x0_;
};

enum class SnapPosition { kInside, kBelow, kAbove };

struct SnapResult {
  std::size_t index = 0;
  double x = 0.0;
  SnapPosition position = SnapPosition::kInside;
};

namespace detail {
// Relative slack (in cells) so values that are grid points up to rounding
// snap to that point rather than its left neighbour.
inline constexpr double kSnapSlack = 1e-9;
}  // namespace detail

// Largest grid point not above v; out-of-range values clamp with a flag.
inline SnapResult snap_threshold(const Grid& grid, double v) {
  double t = (v - grid.point(0)) / grid.delta();
  std::size_t last = grid.size() - 1;
  if (t < -detail::kSnapSlack) return {0, grid.point(0), SnapPosition::kBelow};
  if (t > static_cast<double>(last) + detail::kSnapSlack)
    return {last, grid.point(last), SnapPosition::kAbove};
  auto i = static_cast<std::size_t>(std::max(0.0, std::floor(t + detail::kSnapSlack)));
  i = std::min(i, last);
  return {i, grid.point(i), SnapPosition::kInside};
}

// Index I of the first cell kept by an upper-tail threshold at gamma: the
// support point that gamma + delta/2 snaps to. Cells i >= I lie above the
// realised cut, cells i < I below it. Returns 0 below the grid, N above it.
inline std::size_t threshold_cut(const Grid& grid, double gamma) {
  if (gamma < grid.a()) return 0;
  double t = (gamma - grid.a()) / grid.delta();
  if (t + detail::kSnapSlack >= static_cast<double>(grid.size())) return grid.size();
  return snap_threshold(grid, gamma + 0.5 * grid.delta()).index;
}

// Where the cut actually falls once gamma is snapped: the left edge of cell I.
inline double effective_threshold(const Grid& grid, double gamma) {
  return grid.edge(threshold_cut(grid, gamma));
}

struct DiscretisedDistribution {
  Grid grid;
  std::vector<double> raw_mass;  // f(x_i) * delta
  std::vector<double> probs;     // raw_mass / sum(raw_mass)
  Distribution source;

  double total_raw_mass() const {
    double s = 0.0;
    for (double m : raw_mass) s += m;
    return s;
  }
};

inline DiscretisedDistribution discretise(const Distribution& spec, const Grid& grid) {
  validate(spec);
  DiscretisedDistribution out{grid, std::vector<double>(grid.size()),
                              std::vector<double>(grid.size()), spec};
  double total = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    out.raw_mass[i] = pdf(spec, grid.point(i)) * grid.delta();
    total += out.raw_mass[i];
  }
  if (!(total > 0.0) || !std::isfinite(total))
    throw std::domain_error("discretise: distribution has no mass on the grid");
  for (std::size_t i = 0; i < grid.size(); ++i) out.probs[i] = out.raw_mass[i] / total;
  return out;
}

inline DiscretisedDistribution discretise(const Distribution& spec, double a, double b,
                                          int n_qubits) {
  return discretise(spec, Grid(a, b, n_qubits));
}

// Probabilities a state-preparation circuit actually loads.
struct PreparedState {
  DiscretisedDistribution base;
  std::vector<double> p;

  const Grid& grid() const { return base.grid; }
};

inline PreparedState exact_state(const DiscretisedDistribution& base) {
  return PreparedState{base, base.probs};
}

inline PreparedState perturb_state(const DiscretisedDistribution& base, double magnitude,
                                   RngStream& rng) {
  if (!(magnitude >= 0.0) || !std::isfinite(magnitude))
    throw std::invalid_argument("perturb_state: magnitude must be finite and >= 0");
  if (magnitude == 0.0) return exact_state(base);
  std::vector<double> p(base.probs.size());
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    double u = 2.0 * rng.uniform() - 1.0;
    p[i] = std::max(0.0, base.probs[i] + magnitude * u);
    total += p[i];
  }
  if (!(total > 0.0)) throw std::domain_error("perturb_state: perturbation removed all mass");
  for (double& v : p) v /= total;
  return PreparedState{base, std::move(p)};
}

// Functions applied to the random variable.
struct ConstantOne {};
struct Identity {};
struct Square {};
struct IndicatorLE {  // Theta(c - x): 1 for x below the cut
  double c = 0.0;
};
struct IndicatorGE {  // Theta(x - c)
  double c = 0.0;
};
struct ThresholdedIdentity {  // x * Theta(x - c)
  double c = 0.0;
};
struct Exponential {  // exp(k x); moments of rho = e^r on an r grid
  double k = 1.0;
};

using FunctionKind = std::variant<ConstantOne, Identity, Square, IndicatorLE, IndicatorGE,
                                  ThresholdedIdentity, Exponential>;

inline std::string function_name(const FunctionKind& k) {
  return std::visit(Overloaded{
                        [](const ConstantOne&) { return std::string("constant_one"); },
                        [](const Identity&) { return std::string("identity"); },
                        [](const Square&) { return std::string("square"); },
                        [](const IndicatorLE& f) { return "indicator_le(" + format_double(f.c) + ")"; },
                        [](const IndicatorGE& f) { return "indicator_ge(" + format_double(f.c) + ")"; },
                        [](const ThresholdedIdentity& f) {
                          return "thresholded_identity(" + format_double(f.c) + ")";
                        },
                        [](const Exponential& f) { return "exp(" + format_double(f.k) + "x)"; },
                    },
                    k);
}

// Continuous evaluation with the exact threshold (what classical sampling sees).
inline double apply_function(const FunctionKind& kind, double x) {
  return std::visit(Overloaded{
                        [](const ConstantOne&) { return 1.0; },
                        [x](const Identity&) { return x; },
                        [x](const Square&) { return x * x; },
                        [x](const IndicatorLE& f) { return x <= f.c ? 1.0 : 0.0; },
                        [x](const IndicatorGE& f) { return x >= f.c ? 1.0 : 0.0; },
                        [x](const ThresholdedIdentity& f) { return x >= f.c ? x : 0.0; },
                        [x](const Exponential& f) { return std::exp(f.k * x); },
                    },
                    kind);
}

inline bool has_threshold(const FunctionKind& kind) {
  return std::holds_alternative<IndicatorLE>(kind) || std::holds_alternative<IndicatorGE>(kind) ||
         std::holds_alternative<ThresholdedIdentity>(kind);
}

// A function applied, bound to a grid: snapped values and the affine map onto [0, 1].
class AppliedFunction {
 public:
  AppliedFunction(FunctionKind kind, const Grid& grid) : kind_(kind), grid_(grid) {
    const std::size_t n = grid.size();
    values_.resize(n);
    if (has_threshold(kind)) {
      double c = std::visit(Overloaded{
                                [](const IndicatorLE& f) { return f.c; },
                                [](const IndicatorGE& f) { return f.c; },
                                [](const ThresholdedIdentity& f) { return f.c; },
                                [](const auto&) { return 0.0; },
                            },
                            kind);
      if (!std::isfinite(c)) throw std::invalid_argument("AppliedFunction: threshold must be finite");
      cut_ = threshold_cut(grid, c);
      for (std::size_t i = 0; i < n; ++i) {
        bool above = i >= *cut_;
        values_[i] = std::visit(Overloaded{
                                    [&](const IndicatorLE&) { return above ? 0.0 : 1.0; },
                                    [&](const IndicatorGE&) { return above ? 1.0 : 0.0; },
                                    [&](const ThresholdedIdentity&) {
                                      return above ? grid.point(i) : 0.0;
                                    },
                                    [](const auto&) { return 0.0; },
                                },
                                kind);
      }
    } else {
      for (std::size_t i = 0; i < n; ++i) values_[i] = apply_function(kind, grid.point(i));
    }
    for (double v : values_)
      if (!std::isfinite(v)) throw std::domain_error("AppliedFunction: unbounded on the grid");
    auto [lo, hi] = std::minmax_element(values_.begin(), values_.end());
    g_min_ = *lo;
    g_max_ = *hi;
    if (!(g_max_ > g_min_)) {
      // Constant on the grid: anchor the map at zero so the amplitude carries the constant.
      double v = g_min_;
      g_min_ = std::min(v, 0.0);
      g_max_ = std::max(v, 0.0);
      if (!(g_max_ > g_min_)) g_max_ = g_min_ + 1.0;
    }
  }

  const FunctionKind& kind() const { return kind_; }
  const Grid& grid() const { return grid_; }
  const std::vector<double>& values() const { return values_; }
  double g_min() const { return g_min_; }
  double g_max() const { return g_max_; }
  double span() const { return g_max_ - g_min_; }

  // Cell index of the realised cut, for thresholded kinds.
  std::optional<std::size_t> cut() const { return cut_; }

  double rescale(double g) const { return (g - g_min_) / (g_max_ - g_min_); }
  double unrescale(double a) const { return g_min_ + a * (g_max_ - g_min_); }
  double rescaled(std::size_t i) const { return std::clamp(rescale(values_[i]), 0.0, 1.0); }

  // The same function with its threshold moved to where the grid actually cuts.
  FunctionKind realised_kind() const {
    if (!cut_) return kind_;
    double e = grid_.edge(*cut_);
    return std::visit(Overloaded{
                          [e](const IndicatorLE&) -> FunctionKind { return IndicatorLE{e}; },
                          [e](const IndicatorGE&) -> FunctionKind { return IndicatorGE{e}; },
                          [e](const ThresholdedIdentity&) -> FunctionKind {
                            return ThresholdedIdentity{e};
                          },
                          [](const auto& k) -> FunctionKind { return k; },
                      },
                      kind_);
  }

 private:
  FunctionKind kind_;
  Grid grid_;
  std::vector<double> values_;
  double g_min_ = 0.0, g_max_ = 1.0;
  std::optional<std::size_t> cut_;
};

inline double expectation_discrete(const std::vector<double>& weights, const AppliedFunction& g) {
  if (weights.size() != g.values().size())
    throw std::invalid_argument("expectation_discrete: grid size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) s += g.values()[i] * weights[i];
  return s;
}

inline double expectation_discrete(const PreparedState& state, const AppliedFunction& g) {
  if (!(state.grid() == g.grid())) throw std::invalid_argument("expectation_discrete: grid mismatch");
  return expectation_discrete(state.p, g);
}

inline double expectation_discrete(const DiscretisedDistribution& d, const AppliedFunction& g) {
  if (!(d.grid == g.grid())) throw std::invalid_argument("expectation_discrete: grid mismatch");
  return expectation_discrete(d.probs, g);
}

inline void write_csv(std::ostream& os, const DiscretisedDistribution& d) {
  write_csv_row(os, {"x", "raw_mass", "prob"});
  for (std::size_t i = 0; i < d.grid.size(); ++i)
    write_csv_row(os, {d.grid.point(i), d.raw_mass[i], d.probs[i]});
}

}  // namespace qmci
