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

// VaR and CVaR estimation plus the two simulation-based portfolio problems:
// Mean-CVaR over a basket of assets and the one-period Mean-Var allocation
// between a risky asset and the risk-free rate.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "qmci/discretisation.hpp"
#include "qmci/distributions.hpp"
#include "qmci/mci.hpp"
#include "qmci/optimize.hpp"
#include "qmci/qae.hpp"
#include "qmci/rng.hpp"

namespace qmci {

// ---------------------------------------------------------------- VaR ----

// a0 is the upper end of the bracket (g(a0) > alpha), b0 the lower end.
struct BisectionConfig {
  double a0 = 0.0;
  double b0 = 0.0;
  double epsilon = 1e-4;
  double alpha = 0.5;
};

struct BisectionStep {
  int step = 0;
  double c = 0.0;
  double g_hat = 0.0;
};

struct BisectionResult {
  double var_hat = 0.0;
  std::vector<BisectionStep> trace;
};

using ProbabilityEstimator = std::function<double(double)>;

inline BisectionResult var_bisection(const ProbabilityEstimator& g, const BisectionConfig& cfg) {
  if (!(cfg.epsilon > 0.0)) throw std::invalid_argument("var_bisection: epsilon must be > 0");
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0))
    throw std::invalid_argument("var_bisection: alpha must lie in (0, 1)");
  double a = cfg.a0, b = cfg.b0;
  double ga = g(a), gb = g(b);
  if (!(ga > cfg.alpha) || !(gb < cfg.alpha))
    throw std::invalid_argument("var_bisection: invalid bracket, need g(a0) > alpha > g(b0) (got " +
                                std::to_string(ga) + ", " + std::to_string(gb) + ")");
  BisectionResult out;
  int step = 0;
  while (std::abs(b - a) >= cfg.epsilon) {
    double c = 0.5 * (a + b);
    double gc = g(c);
    out.trace.push_back({++step, c, gc});
    if (gc < cfg.alpha) b = c; else a = c;
  }
  out.var_hat = 0.5 * (a + b);
  return out;
}

// Number of halvings the loop performs for a bracket of width w.
inline int bisection_iterations(double width, double epsilon) {
  return static_cast<int>(std::ceil(std::log2(std::abs(width) / epsilon)));
}

// g(gamma) = Pr(X <= gamma) estimated by QMCI with the threshold snapped to the
// grid. Every call spends a fresh budget drawn from the shared stream.
class QmciProbabilityEstimator {
 public:
  QmciProbabilityEstimator(PreparedState state, NoiseChannel noise, std::int64_t budget,
                           EstimatorConfig config, RngStream rng)
      : state_(std::make_shared<PreparedState>(std::move(state))),
        noise_(noise),
        budget_(budget),
        config_(std::move(config)),
        rng_(std::make_shared<RngStream>(rng)) {
    if (budget < 1) throw std::invalid_argument("g_estimator_qmci: budget must be >= 1");
  }

  double operator()(double gamma) const {
    QmciProblem p{*state_, AppliedFunction(IndicatorLE{gamma}, state_->grid()), noise_, config_};
    return qmci_estimate(p, budget_, *rng_).estimate;
  }

 private:
  std::shared_ptr<const PreparedState> state_;
  NoiseChannel noise_;
  std::int64_t budget_;
  EstimatorConfig config_;
  std::shared_ptr<RngStream> rng_;
};

inline ProbabilityEstimator g_estimator_qmci(const PreparedState& state, const NoiseChannel& noise,
                                             std::int64_t budget, const EstimatorConfig& config,
                                             RngStream rng) {
  return QmciProbabilityEstimator(state, noise, budget, config, rng);
}

// Empirical CDF #{x <= gamma} / S over a fixed sample.
inline ProbabilityEstimator g_estimator_classical(std::vector<double> samples) {
  std::sort(samples.begin(), samples.end());
  auto s = std::make_shared<const std::vector<double>>(std::move(samples));
  return [s](double gamma) {
    auto it = std::upper_bound(s->begin(), s->end(), gamma);
    return static_cast<double>(it - s->begin()) / static_cast<double>(s->size());
  };
}

inline ProbabilityEstimator g_estimator_analytical(const Distribution& spec) {
  return [spec](double gamma) { return cdf(spec, gamma); };
}

// Order-statistic read-off of the alpha-quantile: the I-th smallest sample, I = ceil(alpha S).
inline double var_classical(const std::vector<double>& sorted, double alpha) {
  if (sorted.empty()) throw std::invalid_argument("var_classical: no samples");
  auto idx = static_cast<std::size_t>(std::ceil(alpha * static_cast<double>(sorted.size())));
  return sorted[std::clamp<std::size_t>(idx, 1, sorted.size()) - 1];
}

// --------------------------------------------------------------- CVaR ----

// Mean of the sorted samples above index I = floor(alpha S), 1-based I+1..S.
inline double cvar_classical(const std::vector<double>& sorted, double alpha) {
  if (!(alpha >= 0.0 && alpha < 1.0)) throw std::invalid_argument("cvar_classical: alpha in [0, 1)");
  if (!std::is_sorted(sorted.begin(), sorted.end()))
    throw std::invalid_argument("cvar_classical: samples must be sorted ascending");
  const std::size_t S = sorted.size();
  auto I = static_cast<std::size_t>(std::floor(alpha * static_cast<double>(S)));
  if (S <= I) throw std::invalid_argument("cvar_classical: need more samples than floor(alpha S)");
  double s = 0.0;
  for (std::size_t k = I; k < S; ++k) s += sorted[k];
  return s / static_cast<double>(S - I);
}

inline double cvar_qmci(const PreparedState& state, double gamma, double tail_prob,
                        const NoiseChannel& noise, std::int64_t budget,
                        const EstimatorConfig& config, RngStream& rng) {
  if (!(tail_prob > 0.0)) throw std::invalid_argument("cvar_qmci: tail_prob must be > 0");
  QmciProblem p{state, AppliedFunction(ThresholdedIdentity{gamma}, state.grid()), noise, config};
  return qmci_estimate(p, budget, rng).estimate / tail_prob;
}

// Classical twin of cvar_qmci: continuous draws averaged through x Theta(x >= gamma)
// with the exact threshold, divided by the known tail probability.
inline double cvar_cmci(const Distribution& spec, double gamma, double tail_prob,
                        std::int64_t samples, RngStream& rng) {
  if (!(tail_prob > 0.0)) throw std::invalid_argument("cvar_cmci: tail_prob must be > 0");
  return cmci_estimate(spec, ThresholdedIdentity{gamma}, samples, rng) / tail_prob;
}

// ---------------------------------------------------------- Mean-CVaR ----

struct PortfolioSpec {
  std::vector<Distribution> assets;
  double lambda = 0.1;
  double alpha = 0.95;
  double w_min = 0.1;
  double w_max = 0.9;
  std::int64_t samples_per_eval = 10000;
  // Hybrid mode: grid for the QMCI mean of the composed portfolio law.
  int qmci_qubits = 5;
  double qmci_trunc_sigmas = 5.0;
  EstimatorConfig qmci;
};

inline void validate(const PortfolioSpec& s) {
  const double n = static_cast<double>(s.assets.size());
  if (s.assets.empty()) throw std::invalid_argument("portfolio: no assets");
  for (const auto& a : s.assets) validate(a);
  if (!(s.lambda >= 0.0)) throw std::invalid_argument("portfolio: lambda must be >= 0");
  if (!(s.alpha > 0.0 && s.alpha < 1.0)) throw std::invalid_argument("portfolio: alpha in (0, 1)");
  if (!(s.w_min >= 0.0 && s.w_min < s.w_max && s.w_max <= 1.0))
    throw std::invalid_argument("portfolio: need 0 <= w_min < w_max <= 1");
  if (n * s.w_min > 1.0 + 1e-12 || n * s.w_max < 1.0 - 1e-12)
    throw std::invalid_argument("portfolio: simplex and weight box do not intersect");
  if (s.samples_per_eval < 2) throw std::invalid_argument("portfolio: samples_per_eval must be >= 2");
}

inline void check_feasible(const PortfolioSpec& s, const std::vector<double>& w) {
  if (w.size() != s.assets.size()) throw std::invalid_argument("weights: wrong dimension");
  double sum = 0.0;
  for (double v : w) {
    if (v < s.w_min - 1e-9 || v > s.w_max + 1e-9)
      throw std::invalid_argument("weights: outside [w_min, w_max]");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw std::invalid_argument("weights: must sum to 1");
}

enum class CvarMode { kCmci, kHybrid, kAnalytical };

inline std::string to_string(CvarMode m) {
  switch (m) {
    case CvarMode::kCmci: return "cmci";
    case CvarMode::kHybrid: return "hybrid";
    case CvarMode::kAnalytical: return "analytical";
  }
  return "?";
}

// N(sum w mu, sum w^2 sigma^2) for independent Gaussian assets.
inline Gaussian compose_gaussian(const PortfolioSpec& s, const std::vector<double>& w) {
  double m = 0.0, v = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const auto* g = std::get_if<Gaussian>(&s.assets[i]);
    if (!g) throw std::invalid_argument("portfolio: composed law needs Gaussian assets");
    m += w[i] * g->mu;
    v += w[i] * w[i] * g->sigma * g->sigma;
  }
  return {m, std::sqrt(v)};
}

// f(w) = -E[X_w] + lambda CVaR_alpha(X_w).
//  cmci:       one sample set drawn at construction, reused for every w.
//  hybrid:     fresh draws on every call; E[X_w] by QMCI on the composed law,
//              CVaR by the classical order-statistic estimator.
//  analytical: closed form for Gaussian assets.
class MeanCvarObjective {
 public:
  MeanCvarObjective(PortfolioSpec spec, CvarMode mode, RngStream rng)
      : spec_(std::move(spec)), mode_(mode), rng_(rng) {
    validate(spec_);
    if (mode_ == CvarMode::kCmci) samples_ = draw(rng_);
  }

  double operator()(const std::vector<double>& w) {
    check_feasible(spec_, w);
    switch (mode_) {
      case CvarMode::kAnalytical: {
        Gaussian g = compose_gaussian(spec_, w);
        return -g.mu + spec_.lambda * analytical_cvar_gaussian(g, spec_.alpha);
      }
      case CvarMode::kCmci: {
        auto x = portfolio(samples_, w);
        double mean = 0.0;
        for (double v : x) mean += v;
        mean /= static_cast<double>(x.size());
        std::sort(x.begin(), x.end());
        return -mean + spec_.lambda * cvar_classical(x, spec_.alpha);
      }
      case CvarMode::kHybrid: {
        Gaussian g = compose_gaussian(spec_, w);
        Grid grid = Grid::from_support(g.mu - spec_.qmci_trunc_sigmas * g.sigma,
                                       g.mu + spec_.qmci_trunc_sigmas * g.sigma, spec_.qmci_qubits);
        QmciProblem p{exact_state(discretise(g, grid)), AppliedFunction(Identity{}, grid),
                      Noiseless{}, spec_.qmci};
        double mean = qmci_estimate(p, spec_.samples_per_eval, rng_).estimate;
        auto x = portfolio(draw(rng_), w);
        std::sort(x.begin(), x.end());
        return -mean + spec_.lambda * cvar_classical(x, spec_.alpha);
      }
    }
    return 0.0;
  }

  const PortfolioSpec& spec() const { return spec_; }

 private:
  // samples[j] holds the draws of asset j.
  std::vector<std::vector<double>> draw(RngStream& rng) {
    std::vector<std::vector<double>> out;
    RngStream batch = rng.split(rng());
    for (std::size_t j = 0; j < spec_.assets.size(); ++j) {
      RngStream r = batch.split(j);
      out.push_back(sample(spec_.assets[j], r, static_cast<std::size_t>(spec_.samples_per_eval)));
    }
    return out;
  }

  static std::vector<double> portfolio(const std::vector<std::vector<double>>& s,
                                       const std::vector<double>& w) {
    std::vector<double> x(s.front().size(), 0.0);
    for (std::size_t j = 0; j < s.size(); ++j)
      for (std::size_t k = 0; k < x.size(); ++k) x[k] += w[j] * s[j][k];
    return x;
  }

  PortfolioSpec spec_;
  CvarMode mode_;
  RngStream rng_;
  std::vector<std::vector<double>> samples_;
};

inline double mean_cvar_objective(const PortfolioSpec& spec, const std::vector<double>& w,
                                  CvarMode mode, RngStream& rng) {
  MeanCvarObjective f(spec, mode, rng.split(rng()));
  return f(w);
}

struct MeanCvarResult {
  std::vector<double> w_star;
  double f_star = 0.0;
  bool converged = false;
  std::vector<VectorEval> trace;  // one entry per objective evaluation
};

// Weights start at 1/n. Two assets reduce exactly to bounded 1-D Brent over w_1;
// more assets use projected gradient over the simplex-box set.
inline MeanCvarResult optimize_mean_cvar(const PortfolioSpec& spec, CvarMode mode, RngStream rng,
                                         int max_evals = 200) {
  validate(spec);
  MeanCvarObjective f(spec, mode, rng);
  const std::size_t n = spec.assets.size();
  MeanCvarResult out;
  if (n == 1) {
    out.w_star = {1.0};
    out.f_star = f(out.w_star);
    out.converged = true;
    out.trace.push_back({1, out.f_star, out.w_star});
    return out;
  }
  if (n == 2) {
    double lo = std::max(spec.w_min, 1.0 - spec.w_max);
    double hi = std::min(spec.w_max, 1.0 - spec.w_min);
    auto r = brent_bounded([&](double w1) { return f({w1, 1.0 - w1}); }, lo, hi, 1e-9, max_evals, 0.5);
    out.w_star = {r.x, 1.0 - r.x};
    out.f_star = r.f;
    out.converged = r.converged;
    for (const auto& e : r.trace) out.trace.push_back({e.iter, e.f, {e.x, 1.0 - e.x}});
    return out;
  }
  std::vector<double> w0(n, 1.0 / static_cast<double>(n));
  auto r = projected_gradient([&](const std::vector<double>& w) { return f(w); }, w0, spec.w_min,
                              spec.w_max, 1e-5, 3, max_evals);
  out.w_star = r.w;
  out.f_star = r.f;
  out.converged = r.converged;
  out.trace = r.trace;
  return out;
}

// ----------------------------------------------------------- Mean-Var ----

// One-period allocation: fraction omega in the risky asset with growth factor
// rho = e^r, r ~ N(mu, sigma^2); the rest earns R_f. The grid lives on r.
struct MeanVarProblem {
  double V_T = 100.0;
  double R_f = 0.06;
  double lambda = 0.5;
  LogNormal rho_dist{0.06, 0.2};
  // Outer support points at mu -/+ 3 sigma; wider grids stretch the e^{2r}
  // span and with it the second-moment error.
  Grid grid = Grid::from_support(0.06 - 3 * 0.2, 0.06 + 3 * 0.2, 5);
  NoiseChannel noise = Noiseless{};
  // Ten shots per Grover power puts the deepest circuit at m = 16, 32, 64 for
  // totals of 2000, 3000 and 6000 calls.
  EstimatorConfig qmci{.shots_per_round = 10};
};

inline void validate(const MeanVarProblem& p) {
  if (!(p.V_T > 0.0)) throw std::invalid_argument("mean-var: V_T must be > 0");
  if (!(p.lambda >= 0.0)) throw std::invalid_argument("mean-var: lambda must be >= 0");
  if (!std::isfinite(p.R_f)) throw std::invalid_argument("mean-var: R_f must be finite");
  validate(Distribution{p.rho_dist});
  validate(p.noise);
}

// Grid over r whose outer support points sit at mu -/+ k sigma.
inline Grid risk_premium_grid(const LogNormal& rho, double k_sigmas, int n_qubits) {
  return Grid::from_support(rho.mu - k_sigmas * rho.sigma, rho.mu + k_sigmas * rho.sigma, n_qubits);
}

inline double mean_var_utility(const MeanVarProblem& p, double omega, double I3, double I4) {
  const double er = std::exp(p.R_f);
  return p.V_T * (omega * er * I3 + (1.0 - omega) * er) -
         p.lambda * p.V_T * p.V_T * omega * omega * er * er * (I4 - I3 * I3);
}

struct Moments {
  double I3 = 0.0;  // E[rho]
  double I4 = 0.0;  // E[rho^2]
};

inline Moments exact_moments(const MeanVarProblem& p) {
  return {raw_moment(p.rho_dist, 1), raw_moment(p.rho_dist, 2)};
}

inline PreparedState risk_premium_state(const MeanVarProblem& p) {
  return exact_state(discretise(Gaussian{p.rho_dist.mu, p.rho_dist.sigma}, p.grid));
}

// Grid moments sum w_i e^{r_i}, sum w_i e^{2 r_i} with normalised Gaussian weights.
inline Moments discrete_moments(const MeanVarProblem& p) {
  PreparedState s = risk_premium_state(p);
  return {expectation_discrete(s, AppliedFunction(Exponential{1.0}, p.grid)),
          expectation_discrete(s, AppliedFunction(Exponential{2.0}, p.grid))};
}

// Stationary point of U in omega given the two moments; empty when the
// variance vanishes (the utility is then unbounded in omega).
inline std::optional<double> omega_from_moments(const MeanVarProblem& p, const Moments& m) {
  double var = m.I4 - m.I3 * m.I3;
  if (!(var > 0.0) || !(p.lambda > 0.0)) return std::nullopt;
  return std::exp(-p.R_f) * (m.I3 - 1.0) / (2.0 * p.V_T * p.lambda * var);
}

inline double closed_form_minimum(const MeanVarProblem& p) {
  const double mu = p.rho_dist.mu, s2 = p.rho_dist.sigma * p.rho_dist.sigma;
  if (!(p.lambda > 0.0)) throw std::domain_error("closed_form_minimum: needs lambda > 0");
  return std::exp(-p.R_f - 2.0 * mu - s2) * std::expm1(mu + 0.5 * s2) /
         (2.0 * p.V_T * p.lambda * std::expm1(s2));
}

inline std::optional<double> discrete_closed_form_minimum(const MeanVarProblem& p) {
  return omega_from_moments(p, discrete_moments(p));
}

// Same, for explicit support points r_i with weights w_i (normalised here).
inline std::optional<double> discrete_closed_form_minimum(const MeanVarProblem& p,
                                                          const std::vector<double>& r,
                                                          const std::vector<double>& w) {
  if (r.size() != w.size() || r.empty()) throw std::invalid_argument("discrete minimum: bad input");
  double tw = 0.0, j1 = 0.0, j2 = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    tw += w[i];
    j1 += w[i] * std::exp(r[i]);
    j2 += w[i] * std::exp(2.0 * r[i]);
  }
  if (!(tw > 0.0)) throw std::invalid_argument("discrete minimum: weights sum to zero");
  return omega_from_moments(p, {j1 / tw, j2 / tw});
}

// Lattice scan of S3 + S4 = total minimising (A c3 / S3)^2 + (B c4 / S4)^2.
inline std::pair<std::int64_t, std::int64_t> split_samples(std::int64_t total, double sens_mean,
                                                           double sens_second, double span_mean,
                                                           double span_second) {
  if (total < 2) throw std::invalid_argument("split_samples: total must be >= 2");
  const double A = std::abs(sens_mean * span_mean), B = std::abs(sens_second * span_second);
  if (A == 0.0 && B == 0.0) return {total / 2, total - total / 2};
  if (B == 0.0) return {total, 0};
  if (A == 0.0) return {0, total};
  std::int64_t best = 1;
  double best_v = std::numeric_limits<double>::infinity();
  for (std::int64_t s3 = 1; s3 < total; ++s3) {
    double x = A / static_cast<double>(s3), y = B / static_cast<double>(total - s3);
    double v = x * x + y * y;
    if (v < best_v) {
      best_v = v;
      best = s3;
    }
  }
  return {best, total - best};
}

// Sensitivities of U to I3 and I4 at omega (evaluated at the grid moments) and
// the half-spans of e^r and e^{2r} over the grid.
inline std::pair<std::int64_t, std::int64_t> split_samples(std::int64_t total,
                                                           const MeanVarProblem& p, double omega) {
  const Moments m = discrete_moments(p);
  const double er = std::exp(p.R_f);
  const double coef = p.lambda * p.V_T * p.V_T * omega * omega * er * er;
  const double dI3 = p.V_T * omega * er + 2.0 * coef * m.I3;
  const double dI4 = -coef;
  AppliedFunction g3(Exponential{1.0}, p.grid), g4(Exponential{2.0}, p.grid);
  return split_samples(total, dI3, dI4, 0.5 * g3.span(), 0.5 * g4.span());
}

enum class MeanVarMode { kExact, kNoiseless, kNoisy, kNoisyNaqae };

inline std::string to_string(MeanVarMode m) {
  switch (m) {
    case MeanVarMode::kExact: return "exact";
    case MeanVarMode::kNoiseless: return "noiseless";
    case MeanVarMode::kNoisy: return "noisy";
    case MeanVarMode::kNoisyNaqae: return "noisy+naqae";
  }
  return "?";
}

inline MeanVarMode parse_mean_var_mode(const std::string& s) {
  if (s == "exact") return MeanVarMode::kExact;
  if (s == "noiseless") return MeanVarMode::kNoiseless;
  if (s == "noisy") return MeanVarMode::kNoisy;
  if (s == "noisy+naqae") return MeanVarMode::kNoisyNaqae;
  throw std::invalid_argument("unknown mean-var mode '" + s + "'");
}

struct UtilityEstimate {
  double U = 0.0;
  double I3 = 0.0;
  double I4 = 0.0;
  std::int64_t s_mean = 0;
  std::int64_t s_second = 0;
  std::int64_t oracle_calls = 0;
};

// U(omega) with I3 and I4 estimated by QMCI on the r grid under the mode's
// noise and estimator; kExact plugs in the grid moments.
inline UtilityEstimate estimate_utility(const MeanVarProblem& p, double omega,
                                        std::int64_t total_samples, MeanVarMode mode,
                                        RngStream& rng) {
  UtilityEstimate out;
  if (mode == MeanVarMode::kExact) {
    Moments m = discrete_moments(p);
    out.I3 = m.I3;
    out.I4 = m.I4;
    out.U = mean_var_utility(p, omega, m.I3, m.I4);
    return out;
  }
  auto [s3, s4] = split_samples(total_samples, p, omega);
  out.s_mean = s3;
  out.s_second = s4;
  PreparedState state = risk_premium_state(p);
  NoiseChannel noise = mode == MeanVarMode::kNoiseless ? NoiseChannel{Noiseless{}} : p.noise;
  EstimatorConfig cfg = p.qmci;
  if (mode == MeanVarMode::kNoisyNaqae) {
    cfg.na_qae = true;
    double k = noise_k_sigma(p.noise);
    cfg.k_lo = k;
    cfg.k_hi = 2.0 * k;
  } else {
    cfg.na_qae = false;
    cfg.inference = Noiseless{};
  }
  auto estimate = [&](double k, std::int64_t budget) {
    if (budget < 1) return 0.0;  // zero sensitivity: the moment does not enter U
    QmciProblem prob{state, AppliedFunction(Exponential{k}, p.grid), noise, cfg};
    auto r = qmci_estimate(prob, budget, rng);
    out.oracle_calls += r.run.oracle_calls;
    return r.estimate;
  };
  out.I3 = estimate(1.0, s3);
  out.I4 = estimate(2.0, s4);
  out.U = mean_var_utility(p, omega, out.I3, out.I4);
  return out;
}

struct MeanVarResult {
  double omega_star = 0.0;
  double U_star = 0.0;
  bool converged = false;
  int evaluations = 0;
  std::vector<ScalarEval> trace;  // x = omega, f = U
};

// Bounded Brent over omega in [0, 1] maximising the estimated utility.
inline MeanVarResult optimize_mean_var(const MeanVarProblem& p, std::int64_t total_samples,
                                       MeanVarMode mode, RngStream rng, int max_evals = 100) {
  validate(p);
  if (mode != MeanVarMode::kExact && total_samples < 2)
    throw std::invalid_argument("optimize_mean_var: total_samples must be >= 2");
  auto r = brent_bounded(
      [&](double omega) { return -estimate_utility(p, omega, total_samples, mode, rng).U; }, 0.0,
      1.0, mode == MeanVarMode::kExact ? 1e-10 : 1e-5, max_evals);
  MeanVarResult out;
  out.omega_star = r.x;
  out.U_star = -r.f;
  out.converged = r.converged;
  out.evaluations = r.evaluations;
  for (auto e : r.trace) out.trace.push_back({e.iter, e.x, -e.f});
  return out;
}

}  // namespace qmci
