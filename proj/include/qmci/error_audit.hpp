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

// Systematic errors of loading a continuous law onto a mid-point grid.
//
// The chain of estimands for a function applied g is
//   E    = int_R g f                      (what we want)
//   E_T  = int_a^b g f                    (truncated)
//   E_D  = sum_i g~(x_i) f(x_i) delta     (discretised, thresholds snapped)
//   E_No = sum_i g~(x_i) f~(x_i)          (renormalised)
//   E_S  = sum_i g~(x_i) p(x_i)           (as loaded)
// where g~ is g with any threshold moved to the grid's cut. The thresholding
// part is isolated through E_R = int_a^b g_R f, g_R being g with its threshold
// at the realised cell edge, so that eps_the = |E_T - E_R| and
// eps_de = |E_R - E_D| is a pure mid-point error.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "qmci/discretisation.hpp"
#include "qmci/distributions.hpp"
#include "qmci/io.hpp"
#include "qmci/quadrature.hpp"

namespace qmci {

struct ErrorReport {
  std::optional<double> eps_te;  // empty when int_R g f diverges
  double eps_de = 0.0;
  double eps_noe = 0.0;
  double eps_se = 0.0;
  double eps_the = 0.0;
  double eps_dthe = 0.0;
  double analytical_value = 0.0;
  std::map<std::string, double> scaled;
  struct {
    std::optional<double> E;
    double E_T = 0.0;
    double E_R = 0.0;
    double E_Dn = 0.0;
    double E_No = 0.0;
    double E_S = 0.0;
  } intermediate;

  // |E - E_S| against the summed bound; true when E is undefined.
  bool bound_holds(double slack = 1e-12) const {
    if (!intermediate.E || !eps_te) return true;
    double lhs = std::abs(*intermediate.E - intermediate.E_S);
    double rhs = *eps_te + eps_dthe + eps_noe + eps_se;
    return lhs <= rhs + slack * std::max(1.0, std::abs(*intermediate.E));
  }
};

namespace detail {

inline double threshold_of(const FunctionKind& kind) {
  return std::visit(Overloaded{
                        [](const IndicatorLE& f) { return f.c; },
                        [](const IndicatorGE& f) { return f.c; },
                        [](const ThresholdedIdentity& f) { return f.c; },
                        [](const auto&) { return std::numeric_limits<double>::quiet_NaN(); },
                    },
                    kind);
}

// True when int_R g f is finite for this pair.
inline bool integral_exists(const Distribution& d, const FunctionKind& kind) {
  bool bounded = std::holds_alternative<ConstantOne>(kind) ||
                 std::holds_alternative<IndicatorLE>(kind) ||
                 std::holds_alternative<IndicatorGE>(kind);
  if (bounded) return true;
  if (std::holds_alternative<Levy>(d)) return false;
  if (std::holds_alternative<LogNormal>(d) && std::holds_alternative<Exponential>(kind))
    return std::get<Exponential>(kind).k <= 0.0;
  return true;
}

// Gaussian closed forms of int_l^u g f; empty when g has none.
inline std::optional<double> gaussian_partial(const Gaussian& g, const FunctionKind& kind,
                                              double l, double u) {
  if (!(u > l)) return 0.0;
  auto mass = [&](double lo, double hi) {
    double zl = (lo - g.mu) / g.sigma, zu = (hi - g.mu) / g.sigma;
    return zl > 0.0 ? std_normal_sf(zl) - std_normal_sf(zu) : std_normal_cdf(zu) - std_normal_cdf(zl);
  };
  auto second = [&](double lo, double hi) {
    double zl = (lo - g.mu) / g.sigma, zu = (hi - g.mu) / g.sigma;
    double m = mass(lo, hi);
    double pl = std_normal_pdf(zl), pu = std_normal_pdf(zu);
    double zpl = std::isinf(zl) ? 0.0 : zl * pl;
    double zpu = std::isinf(zu) ? 0.0 : zu * pu;
    return g.mu * g.mu * m + 2.0 * g.mu * g.sigma * (pl - pu) + g.sigma * g.sigma * (zpl - zpu + m);
  };
  return std::visit(
      Overloaded{
          [&](const ConstantOne&) -> std::optional<double> { return mass(l, u); },
          [&](const Identity&) -> std::optional<double> { return gaussian_partial_mean(g, l, u); },
          [&](const Square&) -> std::optional<double> { return second(l, u); },
          [&](const IndicatorLE& f) -> std::optional<double> {
            return f.c <= l ? 0.0 : mass(l, std::min(u, f.c));
          },
          [&](const IndicatorGE& f) -> std::optional<double> {
            return f.c >= u ? 0.0 : mass(std::max(l, f.c), u);
          },
          [&](const ThresholdedIdentity& f) -> std::optional<double> {
            return f.c >= u ? 0.0 : gaussian_partial_mean(g, std::max(l, f.c), u);
          },
          [&](const Exponential&) -> std::optional<double> { return std::nullopt; },
      },
      kind);
}

}  // namespace detail

// int_l^u g f over the law's support. Gaussian integrands with a closed form
// use it; everything else goes through adaptive Gauss-Kronrod.
inline double partial_integral(const Distribution& d, const FunctionKind& kind, double l, double u) {
  auto [s_lo, s_hi] = support(d);
  l = std::max(l, s_lo);
  u = std::min(u, s_hi);
  if (!(u > l)) return 0.0;
  if (const auto* g = std::get_if<Gaussian>(&d)) {
    if (auto v = detail::gaussian_partial(*g, kind, l, u)) return *v;
  }
  // Pure probability mass: CDF differences, taken on the upper tail when that
  // side is smaller so heavy tails keep their digits.
  auto mass = [&](double lo, double hi) {
    if (!(hi > lo)) return 0.0;
    return cdf(d, lo) > 0.5 ? survival(d, lo) - survival(d, hi) : cdf(d, hi) - cdf(d, lo);
  };
  if (std::holds_alternative<ConstantOne>(kind)) return mass(l, u);
  if (const auto* f = std::get_if<IndicatorLE>(&kind)) return mass(l, std::min(u, f->c));
  if (const auto* f = std::get_if<IndicatorGE>(&kind)) return mass(std::max(l, f->c), u);
  std::vector<double> breaks = bulk_breakpoints(d);
  double c = detail::threshold_of(kind);
  if (std::isfinite(c)) breaks.push_back(c);
  return integrate([&](double x) { return apply_function(kind, x) * pdf(d, x); }, l, u, breaks);
}

inline std::optional<double> full_integral(const Distribution& d, const FunctionKind& kind) {
  if (!detail::integral_exists(d, kind)) return std::nullopt;
  constexpr double inf = std::numeric_limits<double>::infinity();
  return partial_integral(d, kind, -inf, inf);
}

inline std::optional<double> truncation_error(const Distribution& d, const AppliedFunction& g,
                                              double a, double b) {
  auto full = full_integral(d, g.kind());
  if (!full) return std::nullopt;
  return std::abs(*full - partial_integral(d, g.kind(), a, b));
}

inline double discretisation_error(const Distribution& d, const AppliedFunction& g,
                                   const Grid& grid) {
  if (!(grid == g.grid())) throw std::invalid_argument("discretisation_error: grid mismatch");
  double e_r = partial_integral(d, g.realised_kind(), grid.a(), grid.b());
  double e_d = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i)
    e_d += g.values()[i] * pdf(d, grid.point(i)) * grid.delta();
  return std::abs(e_r - e_d);
}

inline double normalisation_error(const Distribution& d, const AppliedFunction& g,
                                  const Grid& grid) {
  DiscretisedDistribution dd = discretise(d, grid);
  double s = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) s += g.values()[i] * (dd.raw_mass[i] - dd.probs[i]);
  return std::abs(s);
}

inline double state_prep_error(const PreparedState& state, const AppliedFunction& g) {
  if (!(state.grid() == g.grid())) throw std::invalid_argument("state_prep_error: grid mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < state.p.size(); ++i)
    s += g.values()[i] * (state.base.probs[i] - state.p[i]);
  return std::abs(s);
}

namespace detail {

// Fills the differences and scaled forms once the estimands are known.
inline void finish_report(ErrorReport& r) {
  auto& m = r.intermediate;
  if (m.E) r.eps_te = std::abs(*m.E - m.E_T);
  r.eps_the = std::abs(m.E_T - m.E_R);
  r.eps_de = std::abs(m.E_R - m.E_Dn);
  r.eps_dthe = std::abs(m.E_T - m.E_Dn);
  r.eps_noe = std::abs(m.E_Dn - m.E_No);
  r.eps_se = std::abs(m.E_No - m.E_S);
  double s = r.analytical_value;
  auto scale = [s](double v) {
    return s != 0.0 ? v / std::abs(s) : std::numeric_limits<double>::infinity();
  };
  if (r.eps_te) r.scaled["te"] = scale(*r.eps_te);
  r.scaled["de"] = scale(r.eps_de);
  r.scaled["noe"] = scale(r.eps_noe);
  r.scaled["se"] = scale(r.eps_se);
  r.scaled["the"] = scale(r.eps_the);
  r.scaled["dthe"] = scale(r.eps_dthe);
  if (!r.bound_holds(1e-9)) throw std::logic_error("error report violates the error-sum bound");
}

}  // namespace detail

// Full decomposition for any function applied on a prepared state. The
// analytical value used for scaling defaults to int_R g f.
inline ErrorReport error_report(const PreparedState& state, const AppliedFunction& g,
                                std::optional<double> analytical = std::nullopt) {
  const Grid& grid = state.grid();
  if (!(grid == g.grid())) throw std::invalid_argument("error_report: grid mismatch");
  const Distribution& d = state.base.source;
  ErrorReport r;
  auto& m = r.intermediate;
  m.E = full_integral(d, g.kind());
  m.E_T = partial_integral(d, g.kind(), grid.a(), grid.b());
  m.E_R = partial_integral(d, g.realised_kind(), grid.a(), grid.b());
  m.E_Dn = expectation_discrete(state.base.raw_mass, g);
  m.E_No = expectation_discrete(state.base.probs, g);
  m.E_S = expectation_discrete(state.p, g);
  r.analytical_value = analytical ? *analytical : (m.E ? *m.E : m.E_T);
  detail::finish_report(r);
  return r;
}

// CVaR-style estimand E[X | X >= gamma] with Pr(X >= gamma) = tail_prob given.
inline ErrorReport cvar_error_report(const Gaussian& spec, double gamma, const Grid& grid,
                                     double tail_prob) {
  if (!(tail_prob > 0.0) || tail_prob > 1.0)
    throw std::invalid_argument("cvar_error_report: tail_prob must lie in (0, 1]");
  PreparedState state = exact_state(discretise(spec, grid));
  AppliedFunction g(ThresholdedIdentity{gamma}, grid);
  ErrorReport r = error_report(state, g);
  auto& m = r.intermediate;
  *m.E /= tail_prob;
  m.E_T /= tail_prob;
  m.E_R /= tail_prob;
  m.E_Dn /= tail_prob;
  m.E_No /= tail_prob;
  m.E_S /= tail_prob;
  r.analytical_value = tail_conditional_mean(spec, gamma);
  r.scaled.clear();
  detail::finish_report(r);
  return r;
}

// g(gamma) = Pr(X <= gamma), scaled by alpha = cdf(gamma).
inline ErrorReport gofgamma_error_report(const Gaussian& spec, double gamma, const Grid& grid) {
  PreparedState state = exact_state(discretise(spec, grid));
  AppliedFunction g(IndicatorLE{gamma}, grid);
  return error_report(state, g, cdf(spec, gamma));
}

struct SweepPoint {
  double gamma = 0.0;
  double cvar_scaled_dthe = 0.0;
  double cvar_scaled_te = 0.0;
  double g_scaled_dthe = 0.0;
  double g_scaled_te = 0.0;
};

inline std::vector<SweepPoint> scaled_error_sweep(const Gaussian& spec, const Grid& grid,
                                                  const std::vector<double>& gammas) {
  std::vector<SweepPoint> out;
  out.reserve(gammas.size());
  for (double gamma : gammas) {
    double tail = survival(spec, gamma);
    ErrorReport c = cvar_error_report(spec, gamma, grid, tail);
    ErrorReport g = gofgamma_error_report(spec, gamma, grid);
    out.push_back({gamma, c.scaled.at("dthe"), c.scaled.at("te"), g.scaled.at("dthe"),
                   g.scaled.at("te")});
  }
  return out;
}

// Evenly spaced gammas over [lo, hi], per_cell samples per grid cell.
inline std::vector<double> dense_gammas(const Grid& grid, double lo, double hi, int per_cell) {
  std::vector<double> out;
  double step = grid.delta() / per_cell;
  auto count = static_cast<std::size_t>(std::floor((hi - lo) / step)) + 1;
  out.reserve(count);
  for (std::size_t j = 0; j < count; ++j) out.push_back(lo + static_cast<double>(j) * step);
  return out;
}

struct QubitErrorRow {
  int n = 0;
  double max_scaled_dthe = 0.0;
  double max_scaled_te = 0.0;
  double argmax_gamma = 0.0;
};

// Worst scaled CVaR errors over gamma in [a, mu + var_upper * sigma] on the
// grid truncated at mu -/+ trunc_sigmas * sigma, so the truncation error does
// not move with n (outer support points would widen it at small n). Each cell
// is probed at points_per_cell evenly spaced gammas plus its right-hand limit,
// with the cut held at the cell's own index.
inline std::vector<QubitErrorRow> max_scaled_error_vs_qubits(const Gaussian& spec,
                                                             double trunc_sigmas,
                                                             const std::vector<int>& n_range,
                                                             double var_upper,
                                                             int points_per_cell = 4096) {
  if (!(trunc_sigmas > 0.0)) throw std::invalid_argument("trunc_sigmas must be > 0");
  if (points_per_cell < 1) throw std::invalid_argument("points_per_cell must be >= 1");
  const double mu = spec.mu, s = spec.sigma;
  const double gamma_max = mu + var_upper * s;
  // int_gamma^inf x f, the scale shared by every CVaR error at gamma.
  auto upper_mean = [&](double gamma) {
    double z = (gamma - mu) / s;
    return mu * detail::std_normal_sf(z) + s * detail::std_normal_pdf(z);
  };
  std::vector<QubitErrorRow> rows;
  for (int n : n_range) {
    Grid grid(mu - trunc_sigmas * s, mu + trunc_sigmas * s, n);
    const std::size_t N = grid.size();
    const double tail_b = upper_mean(grid.b());
    // suffix[I] = sum_{i >= I} x_i f(x_i) delta.
    std::vector<double> suffix(N + 1, 0.0);
    for (std::size_t i = N; i-- > 0;)
      suffix[i] = suffix[i + 1] + grid.point(i) * pdf(spec, grid.point(i)) * grid.delta();
    QubitErrorRow row{n, 0.0, 0.0, grid.a()};
    for (std::size_t I = 0; I < N && grid.edge(I) <= gamma_max; ++I) {
      const double l = grid.edge(I);
      const double r = std::min(grid.edge(I + 1), gamma_max);
      for (int j = 0; j <= points_per_cell; ++j) {
        double gamma = j == points_per_cell ? r : l + (r - l) * j / points_per_cell;
        if (gamma > r) break;
        double denom = upper_mean(gamma);
        // int_gamma^b x f = int_gamma^inf x f - int_b^inf x f.
        double truncated = denom - tail_b;
        double dthe = std::abs(truncated - suffix[I]) / denom;
        double te = tail_b / denom;
        if (dthe > row.max_scaled_dthe) {
          row.max_scaled_dthe = dthe;
          row.argmax_gamma = gamma;
        }
        row.max_scaled_te = std::max(row.max_scaled_te, te);
      }
    }
    rows.push_back(row);
  }
  return rows;
}

struct LevyTradeoffRow {
  double x_u = 0.0;
  int n = 0;
  double p_t = 0.0;
  double p_d = 0.0;
  double eps_te = 0.0;
  double eps_de = 0.0;
  double eps_noe = 0.0;
};

// Probability budget for a Levy law on the grid [mu, x_u] with g = 1.
inline std::vector<LevyTradeoffRow> levy_tradeoff(const Levy& spec, const std::vector<int>& n_list,
                                                  const std::vector<double>& xu_list) {
  validate(spec);
  std::vector<LevyTradeoffRow> rows;
  for (double xu : xu_list) {
    if (!(xu > spec.mu)) throw std::invalid_argument("levy_tradeoff: x_u must exceed mu");
    double p_t = cdf(spec, xu);
    for (int n : n_list) {
      Grid grid(spec.mu, xu, n);
      double p_d = 0.0;
      for (std::size_t i = 0; i < grid.size(); ++i) p_d += pdf(spec, grid.point(i)) * grid.delta();
      rows.push_back({xu, n, p_t, p_d, survival(spec, xu), std::abs(p_t - p_d), std::abs(1.0 - p_d)});
    }
  }
  return rows;
}

inline void write_sweep_csv(std::ostream& os, const std::vector<SweepPoint>& pts) {
  write_csv_row(os, {"gamma", "cvar_scaled_dthe", "cvar_scaled_te", "g_scaled_dthe", "g_scaled_te"});
  for (const auto& p : pts)
    write_csv_row(os, {format_double17(p.gamma), format_double17(p.cvar_scaled_dthe),
                       format_double17(p.cvar_scaled_te), format_double17(p.g_scaled_dthe),
                       format_double17(p.g_scaled_te)});
}

}  // namespace qmci
