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
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace qmci {

class QuadratureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr double kQuadratureRelTol = 1e-10;

// Adaptive 15/31-point Gauss-Kronrod over [a, b], either end possibly infinite.
// Interior breakpoints (sorted or not) are honoured so narrow peaks inside a
// wide or infinite range are never stepped over.
template <class F>
double integrate(F&& f, double a, double b, std::vector<double> breaks = {},
                 double rel_tol = kQuadratureRelTol) {
  if (a == b) return 0.0;
  double sign = 1.0;
  if (a > b) {
    std::swap(a, b);
    sign = -1.0;
  }
  std::vector<double> cuts{a};
  std::sort(breaks.begin(), breaks.end());
  for (double x : breaks) {
    if (x > cuts.back() && x < b && std::isfinite(x)) cuts.push_back(x);
  }
  cuts.push_back(b);

  double total = 0.0;
  double abs_total = 0.0;
  double err_total = 0.0;
  for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
    double err = 0.0;
    double l1 = 0.0;
    double piece = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
        f, cuts[k], cuts[k + 1], 18, rel_tol * 0.1, &err, &l1);
    if (!std::isfinite(piece)) {
      throw QuadratureError("integral is not finite on [" + std::to_string(cuts[k]) + ", " +
                            std::to_string(cuts[k + 1]) + "]");
    }
    total += piece;
    abs_total += l1;
    err_total += err;
  }
  // Error estimates are relative to the L1 norm; anything far beyond the
  // requested tolerance means the adaptive scheme never settled.
  if (err_total > std::max(1e-3 * abs_total, 1e-300) && err_total > 1e-14) {
    throw QuadratureError("quadrature did not converge (error estimate " +
                          std::to_string(err_total) + ")");
  }
  return sign * total;
}

}  // namespace qmci
