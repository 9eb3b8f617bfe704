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

#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

#include <boost/math/special_functions/erf.hpp>

#include "qmci/rng.hpp"

namespace qmci {

struct Gaussian {
  double mu = 0.0;
  double sigma = 1.0;
};

// Log-normal parameterised by the underlying Gaussian (mu, sigma).
struct LogNormal {
  double mu = 0.0;
  double sigma = 1.0;
};

// Levy with location mu and scale c.
struct Levy {
  double mu = 0.0;
  double c = 1.0;
};

using Distribution = std::variant<Gaussian, LogNormal, Levy>;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

namespace detail {

inline constexpr double kInvSqrt2Pi = 0.3989422804014326779;  // 1/sqrt(2 pi)

inline double std_normal_pdf(double z) { return kInvSqrt2Pi * std::exp(-0.5 * z * z); }
inline double std_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }
inline double std_normal_sf(double z) { return 0.5 * std::erfc(z / std::numbers::sqrt2); }

inline void require_probability(double alpha, const char* what) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument(std::string(what) + ": alpha must lie in (0, 1), got " +
                                std::to_string(alpha));
  }
}

}  // namespace detail

inline void validate(const Distribution& d) {
  std::visit(Overloaded{
                 [](const Gaussian& g) {
                   if (!std::isfinite(g.mu) || !(g.sigma > 0.0) || !std::isfinite(g.sigma))
                     throw std::invalid_argument("Gaussian needs finite mu and sigma > 0");
                 },
                 [](const LogNormal& g) {
                   if (!std::isfinite(g.mu) || !(g.sigma > 0.0) || !std::isfinite(g.sigma))
                     throw std::invalid_argument("LogNormal needs finite mu and sigma > 0");
                 },
                 [](const Levy& l) {
                   if (!std::isfinite(l.mu) || !(l.c > 0.0) || !std::isfinite(l.c))
                     throw std::invalid_argument("Levy needs finite mu and c > 0");
                 },
             },
             d);
}

inline double pdf(const Distribution& d, double x) {
  return std::visit(
      Overloaded{
          [x](const Gaussian& g) {
            return detail::std_normal_pdf((x - g.mu) / g.sigma) / g.sigma;
          },
          [x](const LogNormal& g) {
            if (x <= 0.0) return 0.0;
            return detail::std_normal_pdf((std::log(x) - g.mu) / g.sigma) / (g.sigma * x);
          },
          [x](const Levy& l) {
            double t = x - l.mu;
            if (t <= 0.0) return 0.0;
            return std::sqrt(l.c / (2.0 * std::numbers::pi)) * std::exp(-l.c / (2.0 * t)) /
                   (t * std::sqrt(t));
          },
      },
      d);
}

inline double cdf(const Distribution& d, double x) {
  return std::visit(Overloaded{
                        [x](const Gaussian& g) {
                          return detail::std_normal_cdf((x - g.mu) / g.sigma);
                        },
                        [x](const LogNormal& g) {
                          if (x <= 0.0) return 0.0;
                          return detail::std_normal_cdf((std::log(x) - g.mu) / g.sigma);
                        },
                        [x](const Levy& l) {
                          double t = x - l.mu;
                          if (t <= 0.0) return 0.0;
                          return std::erfc(std::sqrt(l.c / (2.0 * t)));
                        },
                    },
                    d);
}

// 1 - cdf without cancellation in the upper tail.
inline double survival(const Distribution& d, double x) {
  return std::visit(Overloaded{
                        [x](const Gaussian& g) {
                          return detail::std_normal_sf((x - g.mu) / g.sigma);
                        },
                        [x](const LogNormal& g) {
                          if (x <= 0.0) return 1.0;
                          return detail::std_normal_sf((std::log(x) - g.mu) / g.sigma);
                        },
                        [x](const Levy& l) {
                          double t = x - l.mu;
                          if (t <= 0.0) return 1.0;
                          return std::erf(std::sqrt(l.c / (2.0 * t)));
                        },
                    },
                    d);
}

// Smallest gamma with cdf(gamma) >= alpha, by bracketed bisection.
inline double quantile(const Distribution& d, double alpha) {
  detail::require_probability(alpha, "quantile");
  validate(d);
  auto bisect = [alpha](auto&& F, double lo, double hi) {
    for (int it = 0; it < 2000; ++it) {
      double mid = 0.5 * (lo + hi);
      if (mid <= lo || mid >= hi) break;
      if (F(mid) >= alpha) hi = mid; else lo = mid;
    }
    return hi;
  };
  return std::visit(
      Overloaded{
          [&](const Gaussian& g) {
            auto F = [&](double x) { return cdf(d, x); };
            return bisect(F, g.mu - 40.0 * g.sigma, g.mu + 40.0 * g.sigma);
          },
          [&](const LogNormal& g) {
            // Bisect on the log scale, where the cdf is the Gaussian one.
            Distribution under = Gaussian{g.mu, g.sigma};
            auto F = [&](double y) { return cdf(under, y); };
            return std::exp(bisect(F, g.mu - 40.0 * g.sigma, g.mu + 40.0 * g.sigma));
          },
          [&](const Levy& l) {
            auto F = [&](double x) { return cdf(d, x); };
            double hi = l.mu + l.c;
            while (F(hi) < alpha) hi = l.mu + 2.0 * (hi - l.mu);
            return bisect(F, l.mu, hi);
          },
      },
      d);
}

// E[X | X >= gamma] for a Gaussian.
inline double tail_conditional_mean(const Gaussian& g, double gamma) {
  double z = (gamma - g.mu) / g.sigma;
  double q = detail::std_normal_sf(z);
  if (!(q > 0.0)) throw std::domain_error("tail_conditional_mean: empty upper tail");
  return g.mu + g.sigma * detail::std_normal_pdf(z) / q;
}

// CVaR in the upper-tail convention: E[X | X >= VaR_alpha].
inline double analytical_cvar_gaussian(const Gaussian& g, double alpha) {
  detail::require_probability(alpha, "analytical_cvar_gaussian");
  double z = (quantile(Gaussian{0.0, 1.0}, alpha));
  return g.mu + g.sigma * detail::std_normal_pdf(z) / (1.0 - alpha);
}

// Closed form of the partial first moment int_l^u x f(x) dx of a Gaussian.
inline double gaussian_partial_mean(const Gaussian& g, double l, double u) {
  double zl = (l - g.mu) / g.sigma;
  double zu = (u - g.mu) / g.sigma;
  double mass = zl > 0.0 ? detail::std_normal_sf(zl) - detail::std_normal_sf(zu)
                         : detail::std_normal_cdf(zu) - detail::std_normal_cdf(zl);
  double pl = detail::std_normal_pdf(zl);
  double pu = detail::std_normal_pdf(zu);
  return g.mu * mass + g.sigma * (pl - pu);
}

// Raw moments E[X^k] where finite; infinity for the Levy law.
inline double raw_moment(const Distribution& d, int k) {
  return std::visit(Overloaded{
                        [k](const Gaussian& g) {
                          if (k == 0) return 1.0;
                          if (k == 1) return g.mu;
                          if (k == 2) return g.mu * g.mu + g.sigma * g.sigma;
                          throw std::invalid_argument("raw_moment: Gaussian supports k <= 2");
                        },
                        [k](const LogNormal& g) {
                          return std::exp(k * g.mu + 0.5 * k * k * g.sigma * g.sigma);
                        },
                        [k](const Levy&) {
                          return k == 0 ? 1.0 : std::numeric_limits<double>::infinity();
                        },
                    },
                    d);
}

// Points that split the real line into pieces the adaptive integrator can
// resolve: the bulk of the law plus a few decades of tail.
inline std::vector<double> bulk_breakpoints(const Distribution& d) {
  std::vector<double> out;
  std::visit(Overloaded{
                 [&](const Gaussian& g) {
                   for (double k : {-12.0, -8.0, -4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0, 8.0, 12.0})
                     out.push_back(g.mu + k * g.sigma);
                 },
                 [&](const LogNormal& g) {
                   out.push_back(0.0);
                   for (double k : {-12.0, -8.0, -4.0, -2.0, -1.0, 0.0, 1.0, 2.0, 4.0, 8.0, 12.0})
                     out.push_back(std::exp(g.mu + k * g.sigma));
                 },
                 [&](const Levy& l) {
                   out.push_back(l.mu);
                   for (double k = 1e-3; k < 1e9; k *= 10.0) out.push_back(l.mu + k * l.c);
                 },
             },
             d);
  return out;
}

// Natural support endpoints of the law.
inline std::pair<double, double> support(const Distribution& d) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  return std::visit(Overloaded{
                        [](const Gaussian&) { return std::pair{-inf, inf}; },
                        [](const LogNormal&) { return std::pair{0.0, inf}; },
                        [](const Levy& l) { return std::pair{l.mu, inf}; },
                    },
                    d);
}

inline std::vector<double> sample(const Distribution& d, RngStream& rng, std::size_t count) {
  if (count < 1) throw std::invalid_argument("sample: count must be >= 1");
  validate(d);
  std::vector<double> out(count);
  std::visit(Overloaded{
                 [&](const Gaussian& g) {
                   std::normal_distribution<double> n(g.mu, g.sigma);
                   for (auto& x : out) x = n(rng);
                 },
                 [&](const LogNormal& g) {
                   std::normal_distribution<double> n(g.mu, g.sigma);
                   for (auto& x : out) x = std::exp(n(rng));
                 },
                 [&](const Levy& l) {
                   // Inverse of F(x) = erfc(sqrt(c / (2 (x - mu)))), u on the open unit interval.
                   for (auto& x : out) {
                     double u = (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53;
                     double e = boost::math::erfc_inv(u);
                     x = l.mu + l.c / (2.0 * e * e);
                   }
                 },
             },
             d);
  return out;
}

}  // namespace qmci
