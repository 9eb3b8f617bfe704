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
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <vector>

namespace qmci {

struct ScalarEval {
  int iter = 0;
  double x = 0.0;
  double f = 0.0;
};

struct ScalarMinimum {
  double x = 0.0;
  double f = 0.0;
  bool converged = false;
  int evaluations = 0;
  std::vector<ScalarEval> trace;
};

// Bounded Brent minimisation (golden section plus parabolic steps) on [lo, hi].
// x0, when given, is the first point probed instead of the golden-section point.
inline ScalarMinimum brent_bounded(const std::function<double(double)>& f, double lo, double hi,
                                   double xtol = 1e-10, int max_evals = 500,
                                   std::optional<double> x0 = std::nullopt) {
  if (!(hi >= lo)) throw std::invalid_argument("brent_bounded: need lo <= hi");
  ScalarMinimum out;
  auto eval = [&](double x) {
    double v = f(x);
    ++out.evaluations;
    out.trace.push_back({out.evaluations, x, v});
    return v;
  };
  if (hi == lo) {
    out.x = lo;
    out.f = eval(lo);
    out.converged = true;
    return out;
  }
  const double golden = 0.5 * (3.0 - std::sqrt(5.0));
  const double sqrt_eps = std::sqrt(std::numeric_limits<double>::epsilon());
  double a = lo, b = hi;
  double x = x0 ? std::clamp(*x0, lo, hi) : a + golden * (b - a);
  double w = x, v = x;
  double fx = eval(x);
  double fw = fx, fv = fx;
  double d = 0.0, e = 0.0;
  for (;;) {
    double m = 0.5 * (a + b);
    double tol = sqrt_eps * std::abs(x) + xtol / 3.0;
    double t2 = 2.0 * tol;
    if (std::abs(x - m) <= t2 - 0.5 * (b - a)) {
      out.converged = true;
      break;
    }
    if (out.evaluations >= max_evals) break;
    double p = 0.0, q = 0.0, r = 0.0;
    if (std::abs(e) > tol) {
      r = (x - w) * (fx - fv);
      q = (x - v) * (fx - fw);
      p = (x - v) * q - (x - w) * r;
      q = 2.0 * (q - r);
      if (q > 0.0) p = -p; else q = -q;
      r = e;
      e = d;
    }
    if (std::abs(p) < std::abs(0.5 * q * r) && p > q * (a - x) && p < q * (b - x)) {
      d = p / q;  // parabolic step
      double u = x + d;
      if (u - a < t2 || b - u < t2) d = x < m ? tol : -tol;
    } else {
      e = (x < m ? b : a) - x;  // golden-section step
      d = golden * e;
    }
    double u = std::abs(d) >= tol ? x + d : x + (d > 0.0 ? tol : -tol);
    u = std::clamp(u, lo, hi);
    double fu = eval(u);
    if (fu <= fx) {
      if (u < x) b = x; else a = x;
      v = w; fv = fw;
      w = x; fw = fx;
      x = u; fx = fu;
    } else {
      if (u < x) a = u; else b = u;
      if (fu <= fw || w == x) {
        v = w; fv = fw;
        w = u; fw = fu;
      } else if (fu <= fv || v == x || v == w) {
        v = u; fv = fu;
      }
    }
  }
  out.x = x;
  out.f = fx;
  return out;
}

// Euclidean projection onto {w : sum w = 1, lo <= w_i <= hi}, by bisection on
// the shift tau in w_i = clamp(y_i - tau, lo, hi).
inline std::vector<double> project_simplex_box(const std::vector<double>& y, double lo, double hi) {
  const double n = static_cast<double>(y.size());
  if (y.empty() || n * lo > 1.0 + 1e-12 || n * hi < 1.0 - 1e-12)
    throw std::invalid_argument("project_simplex_box: infeasible box");
  auto total = [&](double tau) {
    double s = 0.0;
    for (double v : y) s += std::clamp(v - tau, lo, hi);
    return s;
  };
  auto [mn, mx] = std::minmax_element(y.begin(), y.end());
  double t_lo = *mn - hi - 1.0, t_hi = *mx - lo + 1.0;  // total(t_lo) >= 1 >= total(t_hi)
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (t_lo + t_hi);
    if (total(mid) > 1.0) t_lo = mid; else t_hi = mid;
  }
  double tau = 0.5 * (t_lo + t_hi);
  std::vector<double> w(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) w[i] = std::clamp(y[i] - tau, lo, hi);
  return w;
}

struct VectorEval {
  int iter = 0;
  double f = 0.0;
  std::vector<double> w;
};

struct VectorMinimum {
  std::vector<double> w;
  double f = 0.0;
  bool converged = false;
  std::vector<VectorEval> trace;
};

// Projected gradient descent with central differences and backtracking over
// the simplex-box set. Stops when |f_{k+1} - f_k| < ftol for `patience`
// consecutive iterates, or after max_iter iterates.
inline VectorMinimum projected_gradient(const std::function<double(const std::vector<double>&)>& f,
                                        std::vector<double> w0, double lo, double hi,
                                        double ftol = 1e-5, int patience = 3, int max_iter = 200,
                                        double fd_step = 1e-5) {
  VectorMinimum out;
  std::vector<double> w = project_simplex_box(w0, lo, hi);
  double fw = f(w);
  out.trace.push_back({0, fw, w});
  double step = 1.0;
  int calm = 0;
  std::vector<double> w_prev, g_prev;
  for (int k = 1; k <= max_iter; ++k) {
    // Differences along e_i - 1/n keep the probes on sum w = 1; near a box face
    // fall back to a one-sided difference.
    std::vector<double> grad(w.size());
    const double inv_n = 1.0 / static_cast<double>(w.size());
    auto inside = [&](const std::vector<double>& v) {
      for (double x : v)
        if (x < lo - 1e-12 || x > hi + 1e-12) return false;
      return true;
    };
    for (std::size_t i = 0; i < w.size(); ++i) {
      auto wp = w, wm = w;
      for (std::size_t j = 0; j < w.size(); ++j) {
        double d = (j == i ? 1.0 : 0.0) - inv_n;
        wp[j] += fd_step * d;
        wm[j] -= fd_step * d;
      }
      bool up = inside(wp), down = inside(wm);
      if (up && down) grad[i] = (f(wp) - f(wm)) / (2.0 * fd_step);
      else if (up) grad[i] = (f(wp) - fw) / fd_step;
      else if (down) grad[i] = (fw - f(wm)) / fd_step;
      else grad[i] = 0.0;
    }
    // Barzilai-Borwein step from the last accepted move; flat objectives
    // otherwise crawl under the |df| stopping rule.
    if (!w_prev.empty()) {
      double ss = 0.0, sy = 0.0;
      for (std::size_t i = 0; i < w.size(); ++i) {
        double si = w[i] - w_prev[i], yi = grad[i] - g_prev[i];
        ss += si * si;
        sy += si * yi;
      }
      if (sy > 0.0 && ss > 0.0) step = std::clamp(ss / sy, 1e-6, 1e6);
    }
    w_prev = w;
    g_prev = grad;
    double f_new = fw;
    std::vector<double> w_new = w;
    for (int bt = 0; bt < 40; ++bt) {
      std::vector<double> y(w.size());
      for (std::size_t i = 0; i < w.size(); ++i) y[i] = w[i] - step * grad[i];
      w_new = project_simplex_box(y, lo, hi);
      f_new = f(w_new);
      double decrease = 0.0;
      for (std::size_t i = 0; i < w.size(); ++i) decrease += grad[i] * (w[i] - w_new[i]);
      if (f_new <= fw - 1e-4 * decrease) break;
      step *= 0.5;
    }
    if (f_new > fw) {  // no descent found: stay put
      f_new = fw;
      w_new = w;
    }
    calm = std::abs(f_new - fw) < ftol ? calm + 1 : 0;
    w = w_new;
    fw = f_new;
    out.trace.push_back({k, fw, w});
    step = std::min(1e6, step * 2.0);
    if (calm >= patience) {
      out.converged = true;
      break;
    }
  }
  out.w = w;
  out.f = fw;
  return out;
}

}  // namespace qmci
