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

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "qmci/risk.hpp"

namespace qmci {
namespace {

const Gaussian kG{0.10, 0.05};

// Quantile of N(mu, s^2) by bisection on the series CDF.
double oracle_quantile(double alpha, double mu, double s) {
  double lo = mu - 12 * s, hi = mu + 12 * s;
  for (int i = 0; i < 200; ++i) {
    double c = 0.5 * (lo + hi);
    (oracle::normal_cdf(c, mu, s) < alpha ? lo : hi) = c;
  }
  return 0.5 * (lo + hi);
}

// ------------------------------------------------------------------ VaR

TEST(Bisection, IterationCount) {
  EXPECT_EQ(bisection_iterations(0.3, 1e-4), 12);
  EXPECT_EQ(bisection_iterations(1.0, 0.25), 2);
  BisectionConfig cfg{.a0 = 0.25, .b0 = -0.05, .epsilon = 1e-4, .alpha = 0.5};
  auto r = var_bisection(g_estimator_analytical(kG), cfg);
  EXPECT_EQ(static_cast<int>(r.trace.size()), bisection_iterations(0.3, 1e-4));
  for (std::size_t i = 0; i < r.trace.size(); ++i) EXPECT_EQ(r.trace[i].step, static_cast<int>(i) + 1);
}

TEST(Bisection, AnalyticalQuantiles) {
  for (double alpha : {0.05, 0.5, 0.6915, 0.8413, 0.95}) {
    BisectionConfig cfg{.a0 = 0.25, .b0 = -0.05, .epsilon = 1e-6, .alpha = alpha};
    auto r = var_bisection(g_estimator_analytical(kG), cfg);
    EXPECT_NEAR(r.var_hat, oracle_quantile(alpha, 0.10, 0.05), 1e-6) << alpha;
  }
}

TEST(Bisection, StepFunction) {
  ProbabilityEstimator step = [](double x) { return x >= 0.3 ? 1.0 : 0.0; };
  BisectionConfig cfg{.a0 = 1.0, .b0 = 0.0, .epsilon = 1e-8, .alpha = 0.5};
  EXPECT_NEAR(var_bisection(step, cfg).var_hat, 0.3, 1e-8);
}

TEST(Bisection, RejectsBadInput) {
  auto g = g_estimator_analytical(kG);
  EXPECT_THROW(var_bisection(g, {.a0 = -0.05, .b0 = 0.25, .epsilon = 1e-4, .alpha = 0.5}),
               std::invalid_argument);
  EXPECT_THROW(var_bisection(g, {.a0 = 0.25, .b0 = -0.05, .epsilon = 0.0, .alpha = 0.5}),
               std::invalid_argument);
  EXPECT_THROW(var_bisection(g, {.a0 = 0.25, .b0 = -0.05, .epsilon = 1e-4, .alpha = 1.0}),
               std::invalid_argument);
}

TEST(Estimators, ClassicalCdf) {
  auto g = g_estimator_classical({3.0, 1.0, 2.0, 4.0});
  EXPECT_EQ(g(0.5), 0.0);
  EXPECT_EQ(g(1.0), 0.25);
  EXPECT_EQ(g(2.5), 0.5);
  EXPECT_EQ(g(4.0), 1.0);
  EXPECT_EQ(var_classical({1.0, 2.0, 3.0, 4.0}, 0.5), 2.0);
  EXPECT_EQ(var_classical({1.0, 2.0, 3.0, 4.0}, 0.51), 3.0);
}

TEST(Estimators, QmciProbabilityNearGridValue) {
  Grid grid = Grid::from_support(0.10 - 5 * 0.05, 0.10 + 5 * 0.05, 5);
  PreparedState s = exact_state(discretise(kG, grid));
  auto g = g_estimator_qmci(s, Noiseless{}, 100000, {}, RngStream(50, 0));
  double truth = expectation_discrete(s, AppliedFunction(IndicatorLE{0.125}, grid));
  EXPECT_NEAR(g(0.125), truth, 2e-3);
  EXPECT_THROW(g_estimator_qmci(s, Noiseless{}, 0, {}, RngStream(50, 0)), std::invalid_argument);
}

// ----------------------------------------------------------------- CVaR

TEST(Cvar, SmallSample) {
  EXPECT_DOUBLE_EQ(cvar_classical({1.0, 2.0, 3.0, 4.0}, 0.5), 3.5);
  EXPECT_DOUBLE_EQ(cvar_classical({1.0, 2.0, 3.0, 4.0}, 0.0), 2.5);
  EXPECT_THROW(cvar_classical({2.0, 1.0}, 0.5), std::invalid_argument);
  EXPECT_THROW(cvar_classical({1.0}, 1.0), std::invalid_argument);
}

TEST(Cvar, TranslationAndMonotone) {
  std::mt19937_64 eng(5);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> x(5000);
  for (double& v : x) v = n(eng);
  std::sort(x.begin(), x.end());
  std::vector<double> y = x;
  for (double& v : y) v += 2.5;
  double prev = -1e300;
  for (double a : {0.1, 0.5, 0.9, 0.95, 0.99}) {
    EXPECT_NEAR(cvar_classical(y, a), cvar_classical(x, a) + 2.5, 1e-12);
    double c = cvar_classical(x, a);
    EXPECT_GE(c, prev);
    prev = c;
  }
}

TEST(Cvar, LargeSampleMatchesTailMean) {
  RngStream rng(51, 0);
  auto x = sample(kG, rng, 1'000'000);
  std::sort(x.begin(), x.end());
  double q = oracle_quantile(0.95, 0.10, 0.05);
  double truth = oracle::gaussian_tail_mean(q, 0.10, 0.05);
  EXPECT_NEAR(cvar_classical(x, 0.95), truth, 1e-3);
  EXPECT_NEAR(analytical_cvar_gaussian(kG, 0.95), truth, 1e-10);
}

TEST(Cvar, QmciThresholdBelowGridIsTheMean) {
  Grid grid = Grid::from_support(0.10 - 5 * 0.05, 0.10 + 5 * 0.05, 5);
  PreparedState s = exact_state(discretise(kG, grid));
  RngStream rng(52, 0);
  EXPECT_NEAR(cvar_qmci(s, -10.0, 1.0, Noiseless{}, 100000, {}, rng), 0.10, 1e-3);
  EXPECT_THROW(cvar_qmci(s, 0.1, 0.0, Noiseless{}, 100, {}, rng), std::invalid_argument);
}

TEST(Cvar, ThresholdedClassicalTwin) {
  RngStream rng(53, 0);
  double truth = oracle::gaussian_tail_mean(0.10, 0.10, 0.05);
  EXPECT_NEAR(cvar_cmci(kG, 0.10, 0.5, 1'000'000, rng), truth, 5e-4);
}

// ------------------------------------------------------------ Mean-CVaR

PortfolioSpec two_assets() {
  PortfolioSpec s;
  s.assets = {Gaussian{0.1, 0.05}, Gaussian{0.1, 0.1}};
  return s;
}

double oracle_objective(const std::vector<double>& w, double lambda, double alpha) {
  double mu = 0.1;
  double sd = std::sqrt(w[0] * w[0] * 0.0025 + w[1] * w[1] * 0.01);
  double q = oracle_quantile(alpha, mu, sd);
  return -mu + lambda * oracle::gaussian_tail_mean(q, mu, sd);
}

TEST(MeanCvar, AnalyticalValue) {
  RngStream rng(60, 0);
  auto spec = two_assets();
  double f = mean_cvar_objective(spec, {0.8, 0.2}, CvarMode::kAnalytical, rng);
  EXPECT_NEAR(f, oracle_objective({0.8, 0.2}, 0.1, 0.95), 1e-9);
  EXPECT_NEAR(f, -0.08077, 1e-5);
  spec.lambda = 0.0;
  for (double w : {0.1, 0.4, 0.9})
    EXPECT_NEAR(mean_cvar_objective(spec, {w, 1 - w}, CvarMode::kAnalytical, rng), -0.10, 1e-15);
}

TEST(MeanCvar, Infeasible) {
  RngStream rng(61, 0);
  auto spec = two_assets();
  EXPECT_THROW(mean_cvar_objective(spec, {0.95, 0.05}, CvarMode::kAnalytical, rng), std::invalid_argument);
  EXPECT_THROW(mean_cvar_objective(spec, {0.5, 0.6}, CvarMode::kAnalytical, rng), std::invalid_argument);
  EXPECT_THROW(mean_cvar_objective(spec, {1.0}, CvarMode::kAnalytical, rng), std::invalid_argument);
  spec.w_max = 0.4;
  EXPECT_THROW(mean_cvar_objective(spec, {0.4, 0.4}, CvarMode::kAnalytical, rng), std::invalid_argument);
}

TEST(MeanCvar, Convex) {
  RngStream rng(62, 0);
  auto spec = two_assets();
  std::mt19937_64 eng(62);
  std::uniform_real_distribution<double> u(0.1, 0.9);
  for (int i = 0; i < 100; ++i) {
    double a = u(eng), b = u(eng), m = 0.5 * (a + b);
    double fa = mean_cvar_objective(spec, {a, 1 - a}, CvarMode::kAnalytical, rng);
    double fb = mean_cvar_objective(spec, {b, 1 - b}, CvarMode::kAnalytical, rng);
    double fm = mean_cvar_objective(spec, {m, 1 - m}, CvarMode::kAnalytical, rng);
    EXPECT_LE(fm, 0.5 * (fa + fb) + 1e-15);
  }
}

TEST(MeanCvar, AnalyticalOptimum) {
  auto r = optimize_mean_cvar(two_assets(), CvarMode::kAnalytical, RngStream(63, 0));
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.w_star[0], 0.8, 1e-6);
  EXPECT_NEAR(r.w_star[1], 0.2, 1e-6);
  EXPECT_FALSE(r.trace.empty());
}

TEST(MeanCvar, ThreeAssetsStayFeasible) {
  PortfolioSpec s;
  s.assets = {Gaussian{0.1, 0.05}, Gaussian{0.1, 0.1}, Gaussian{0.1, 0.2}};
  auto r = optimize_mean_cvar(s, CvarMode::kAnalytical, RngStream(64, 0));
  double sum = 0.0;
  for (double w : r.w_star) {
    EXPECT_GE(w, s.w_min - 1e-9);
    EXPECT_LE(w, s.w_max + 1e-9);
    sum += w;
  }
  EXPECT_NEAR(sum, 1.0, 1e-9);
  // Inverse-variance weights minimise the spread, but the third (0.048) sits
  // under w_min: pin it at 0.1 and split the rest 4:1.
  EXPECT_NEAR(r.w_star[0], 0.72, 2e-3);
  EXPECT_NEAR(r.w_star[1], 0.18, 2e-3);
  EXPECT_NEAR(r.w_star[2], 0.10, 2e-3);
}

// ------------------------------------------------------------- Mean-Var

struct OracleMoments {
  double I3, I4;
};

OracleMoments oracle_moments(double mu, double s) {
  auto m = [&](double k) {
    return oracle::simpson([&](double r) { return std::exp(k * r) * oracle::normal_pdf(r, mu, s); },
                           mu - 14 * s, mu + 14 * s, 1e-15);
  };
  return {m(1), m(2)};
}

double oracle_omega(const MeanVarProblem& p, OracleMoments m) {
  return std::exp(-p.R_f) * (m.I3 - 1) / (2 * p.V_T * p.lambda * (m.I4 - m.I3 * m.I3));
}

TEST(MeanVar, UtilityShape) {
  MeanVarProblem p;
  auto m = exact_moments(p);
  EXPECT_NEAR(mean_var_utility(p, 0.0, m.I3, m.I4), p.V_T * std::exp(p.R_f), 1e-12);
  for (double w : {0.1, 0.4, 0.7}) {
    double h = 1e-3;
    double d2 = mean_var_utility(p, w + h, m.I3, m.I4) - 2 * mean_var_utility(p, w, m.I3, m.I4) +
                mean_var_utility(p, w - h, m.I3, m.I4);
    EXPECT_LT(d2, 0.0);
  }
  p.lambda = 0.0;
  double a = mean_var_utility(p, 0.2, m.I3, m.I4), b = mean_var_utility(p, 0.4, m.I3, m.I4),
         c = mean_var_utility(p, 0.6, m.I3, m.I4);
  EXPECT_NEAR(c - b, b - a, 1e-10);
}

TEST(MeanVar, ClosedFormAgainstQuadrature) {
  MeanVarProblem p;
  double w = closed_form_minimum(p);
  EXPECT_NEAR(w, oracle_omega(p, oracle_moments(0.06, 0.2)), 1e-10);
  p.lambda = 1.0;
  EXPECT_NEAR(closed_form_minimum(p), 0.5 * w, 1e-14);
  p.lambda = 0.0;
  EXPECT_THROW(closed_form_minimum(p), std::domain_error);
}

TEST(MeanVar, DiscreteCloseToContinuous) {
  for (double k : {4.0, 5.0, 6.0}) {
    MeanVarProblem p;
    p.grid = risk_premium_grid(p.rho_dist, k, 5);
    EXPECT_NEAR(discrete_closed_form_minimum(p).value(), 0.0164, 2e-3) << k;
  }
  MeanVarProblem p;
  p.grid = risk_premium_grid(p.rho_dist, 6.0, 18);
  EXPECT_NEAR(discrete_closed_form_minimum(p).value(), closed_form_minimum(p), 1e-6);
}

TEST(MeanVar, DegenerateSupport) {
  MeanVarProblem p;
  EXPECT_FALSE(discrete_closed_form_minimum(p, {0.1}, {1.0}).has_value());
  EXPECT_THROW(discrete_closed_form_minimum(p, {0.1}, {0.0}), std::invalid_argument);
  EXPECT_THROW(discrete_closed_form_minimum(p, {}, {}), std::invalid_argument);
}

TEST(MeanVar, BruteForceArgmax) {
  MeanVarProblem p;
  auto m = discrete_moments(p);
  double brute = oracle::grid_argmin([&](double w) { return -mean_var_utility(p, w, m.I3, m.I4); },
                                     0.0, 0.05, 1e-7);
  EXPECT_NEAR(discrete_closed_form_minimum(p).value(), brute, 1e-7);
}

TEST(MeanVar, ExplicitSupportMatchesGrid) {
  MeanVarProblem p;
  auto d = discretise(Gaussian{p.rho_dist.mu, p.rho_dist.sigma}, p.grid);
  EXPECT_NEAR(discrete_closed_form_minimum(p, p.grid.points(), d.probs).value(),
              discrete_closed_form_minimum(p).value(), 1e-14);
}

TEST(MeanVar, SampleSplit) {
  EXPECT_EQ(split_samples(1000, 1.0, 1.0, 1.0, 1.0), (std::pair<std::int64_t, std::int64_t>{500, 500}));
  EXPECT_EQ(split_samples(1000, 1.0, 0.0, 1.0, 1.0), (std::pair<std::int64_t, std::int64_t>{1000, 0}));
  EXPECT_EQ(split_samples(1001, 0.0, 0.0, 1.0, 1.0), (std::pair<std::int64_t, std::int64_t>{500, 501}));
  EXPECT_THROW(split_samples(1, 1.0, 1.0, 1.0, 1.0), std::invalid_argument);
  MeanVarProblem p;
  auto [a, b] = split_samples(3000, p, closed_form_minimum(p));
  EXPECT_EQ(a + b, 3000);
  EXPECT_GT(a, 0);
  EXPECT_GT(b, 0);
  p.lambda = 0.0;
  EXPECT_EQ(split_samples(3000, p, 0.3).second, 0);
}

TEST(MeanVar, ExactOptimiser) {
  MeanVarProblem p;
  auto r = optimize_mean_var(p, 0, MeanVarMode::kExact, RngStream(70, 0));
  EXPECT_NEAR(r.omega_star, discrete_closed_form_minimum(p).value(), 1e-6);
  EXPECT_EQ(r.evaluations, static_cast<int>(r.trace.size()));
}

TEST(MeanVar, NoiselessEstimateTracksGridUtility) {
  MeanVarProblem p;
  double w = closed_form_minimum(p);
  auto m = discrete_moments(p);
  double truth = mean_var_utility(p, w, m.I3, m.I4);
  double se = 0.0;
  for (int i = 0; i < 20; ++i) {
    RngStream rng(71, static_cast<std::uint64_t>(i));
    auto e = estimate_utility(p, w, 100000, MeanVarMode::kNoiseless, rng);
    EXPECT_LE(e.oracle_calls, 100000);
    EXPECT_EQ(e.s_mean + e.s_second, 100000);
    se += (e.U - truth) * (e.U - truth);
  }
  EXPECT_LT(std::sqrt(se / 20), 0.01);
}

TEST(MeanVar, Modes) {
  for (auto m : {MeanVarMode::kExact, MeanVarMode::kNoiseless, MeanVarMode::kNoisy, MeanVarMode::kNoisyNaqae})
    EXPECT_EQ(parse_mean_var_mode(to_string(m)), m);
  EXPECT_THROW(parse_mean_var_mode("fast"), std::invalid_argument);
  MeanVarProblem p;
  p.V_T = 0.0;
  EXPECT_THROW(optimize_mean_var(p, 100, MeanVarMode::kNoiseless, RngStream(72, 0)), std::invalid_argument);
}

}  // namespace
}  // namespace qmci
