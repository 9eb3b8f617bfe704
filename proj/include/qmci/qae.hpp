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

// Amplitude-level amplitude estimation. A shot after m Grover iterations
// returns 1 with probability sin^2((2m+1) theta) in the ideal case; the
// estimator is a Bayesian grid posterior over theta (and, for the noise-aware
// variant, over the noise scale k_sigma as well).

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "qmci/distributions.hpp"
#include "qmci/rng.hpp"

namespace qmci {

struct Noiseless {};
// Per-Grover decoherence towards the fully mixed state.
struct Depolarising {
  double k_sigma = 0.0;
};
// The damped-rotation expression exactly as printed: e^{-2 k_sigma m} sin^2((2m+1) theta + k_mu m).
// It is not the Gaussian average of sin^2; kept as a separate, selectable model.
struct GaussianAngleLiteral {
  double k_mu = 0.0;
  double k_sigma = 0.0;
};

using NoiseChannel = std::variant<Noiseless, Depolarising, GaussianAngleLiteral>;

inline double noise_k_sigma(const NoiseChannel& n) {
  return std::visit(Overloaded{
                        [](const Noiseless&) { return 0.0; },
                        [](const Depolarising& d) { return d.k_sigma; },
                        [](const GaussianAngleLiteral& g) { return g.k_sigma; },
                    },
                    n);
}

inline NoiseChannel with_k_sigma(const NoiseChannel& n, double k) {
  return std::visit(Overloaded{
                        [](const Noiseless&) -> NoiseChannel { return Noiseless{}; },
                        [k](const Depolarising&) -> NoiseChannel { return Depolarising{k}; },
                        [k](const GaussianAngleLiteral& g) -> NoiseChannel {
                          return GaussianAngleLiteral{g.k_mu, k};
                        },
                    },
                    n);
}

inline void validate(const NoiseChannel& n) {
  double k = noise_k_sigma(n);
  if (!(k >= 0.0) || !std::isfinite(k)) throw std::invalid_argument("noise: k_sigma must be >= 0");
}

inline std::string noise_name(const NoiseChannel& n) {
  return std::visit(Overloaded{
                        [](const Noiseless&) { return std::string("noiseless"); },
                        [](const Depolarising&) { return std::string("depolarising"); },
                        [](const GaussianAngleLiteral&) { return std::string("gaussian_angle_literal"); },
                    },
                    n);
}

namespace detail {

// Visibility-type channel parameters: p = v * s + offset, s the ideal sin^2.
struct ChannelCoeffs {
  double v = 1.0;
  double offset = 0.0;
  double phase = 0.0;  // added inside the sine
};

inline ChannelCoeffs channel_coeffs(const NoiseChannel& n, std::int64_t m) {
  const double md = static_cast<double>(m);
  return std::visit(Overloaded{
                        [](const Noiseless&) { return ChannelCoeffs{}; },
                        [md](const Depolarising& d) {
                          double v = std::exp(-2.0 * d.k_sigma * md);
                          return ChannelCoeffs{v, 0.5 * (1.0 - v), 0.0};
                        },
                        [md](const GaussianAngleLiteral& g) {
                          return ChannelCoeffs{std::exp(-2.0 * g.k_sigma * md), 0.0, g.k_mu * md};
                        },
                    },
                    n);
}

}  // namespace detail

inline double shot_probability(double theta, std::int64_t m, const NoiseChannel& noise) {
  if (m < 0) throw std::invalid_argument("shot_probability: m must be >= 0");
  auto c = detail::channel_coeffs(noise, m);
  double s = std::sin((2.0 * static_cast<double>(m) + 1.0) * theta + c.phase);
  return std::clamp(c.v * s * s + c.offset, 0.0, 1.0);
}

struct Round {
  std::int64_t m = 0;
  std::int64_t shots = 1;

  // Oracle calls: each shot applies the state preparation 2m + 1 times.
  std::int64_t cost() const { return shots * (2 * m + 1); }
};

struct QaeSchedule {
  std::vector<Round> rounds;

  std::int64_t oracle_calls() const {
    std::int64_t s = 0;
    for (const auto& r : rounds) s += r.cost();
    return s;
  }

  void validate() const {
    for (std::size_t k = 0; k < rounds.size(); ++k) {
      if (rounds[k].m < 0 || rounds[k].shots < 1)
        throw std::invalid_argument("schedule: need m >= 0 and shots >= 1");
      if (k && rounds[k].m < rounds[k - 1].m)
        throw std::invalid_argument("schedule: Grover powers must be nondecreasing");
    }
  }
};

// m = 0, 1, 2, 4, ... (include_zero) or m = 1, 2, 4, ...
inline QaeSchedule eis_schedule(int num_rounds, std::int64_t shots_per_round, bool include_zero = true) {
  if (num_rounds < 1) throw std::invalid_argument("eis_schedule: num_rounds must be >= 1");
  if (shots_per_round < 1) throw std::invalid_argument("eis_schedule: shots_per_round must be >= 1");
  if (num_rounds > 60) throw std::invalid_argument("eis_schedule: num_rounds too large");
  QaeSchedule s;
  for (int k = 0; k < num_rounds; ++k) {
    std::int64_t m = include_zero ? (k == 0 ? 0 : std::int64_t{1} << (k - 1)) : std::int64_t{1} << k;
    s.rounds.push_back({m, shots_per_round});
  }
  return s;
}

inline std::int64_t draw_round(double theta_true, std::int64_t m, std::int64_t shots,
                               const NoiseChannel& noise, RngStream& rng) {
  if (shots < 1) throw std::invalid_argument("draw_round: shots must be >= 1");
  double p = shot_probability(theta_true, m, noise);
  if (p <= 0.0) return 0;
  if (p >= 1.0) return shots;
  std::binomial_distribution<std::int64_t> bin(shots, p);
  return bin(rng);
}

struct GridSizes {
  int theta_cells = 4096;
  int k_sigma_cells = 64;
};

// Joint grid posterior over (theta, k_sigma). theta_j = (j + 1) (pi/2) / K so the
// grid is open at 0 and closed at pi/2. The k_sigma axis collapses to a single
// point when the inference model has no free noise parameter.
class Posterior {
 public:
  Posterior() = default;

  Posterior(int theta_cells, std::vector<double> k_grid, NoiseChannel model)
      : model_(std::move(model)), k_grid_(std::move(k_grid)) {
    if (theta_cells < 2) throw std::invalid_argument("Posterior: need at least 2 theta cells");
    if (k_grid_.empty()) k_grid_.push_back(noise_k_sigma(model_));
    if (std::holds_alternative<Noiseless>(model_)) k_grid_.assign(1, 0.0);
    for (double k : k_grid_)
      if (!(k >= 0.0)) throw std::invalid_argument("Posterior: k_sigma grid must be >= 0");
    theta_.resize(static_cast<std::size_t>(theta_cells));
    for (int j = 0; j < theta_cells; ++j)
      theta_[j] = (j + 1) * (std::numbers::pi / 2.0) / theta_cells;
    const double uniform = 1.0 / static_cast<double>(theta_.size() * k_grid_.size());
    mass_.assign(theta_.size() * k_grid_.size(), uniform);
    log_w_.assign(mass_.size(), std::log(uniform));
  }

  // Likelihood p^h (1-p)^(N-h) per cell, accumulated in log space.
  void update(std::int64_t m, std::int64_t shots, std::int64_t ones) {
    if (m < 0 || shots < 1 || ones < 0 || ones > shots)
      throw std::invalid_argument("Posterior::update: need m >= 0 and 0 <= h <= N, N >= 1");
    const std::size_t K = theta_.size();
    const double h = static_cast<double>(ones);
    const double t = static_cast<double>(shots - ones);
    std::vector<double> s(K);
    for (std::size_t l = 0; l < k_grid_.size(); ++l) {
      auto c = detail::channel_coeffs(with_k_sigma(model_, k_grid_[l]), m);
      if (l == 0) {  // the ideal sin^2 does not depend on k_sigma
        for (std::size_t j = 0; j < K; ++j) {
          double x = std::sin((2.0 * static_cast<double>(m) + 1.0) * theta_[j] + c.phase);
          s[j] = x * x;
        }
      }
      double* lw = log_w_.data() + l * K;
      for (std::size_t j = 0; j < K; ++j) {
        double p = std::clamp(c.v * s[j] + c.offset, 0.0, 1.0);
        double ll = 0.0;
        if (h > 0.0) ll += h * std::log(p);
        if (t > 0.0) ll += t * std::log1p(-p);
        lw[j] += ll;
      }
    }
    renormalise();
  }

  std::size_t theta_cells() const { return theta_.size(); }
  std::size_t k_cells() const { return k_grid_.size(); }
  const std::vector<double>& theta_grid() const { return theta_; }
  const std::vector<double>& k_grid() const { return k_grid_; }
  const NoiseChannel& model() const { return model_; }
  // Mass of cell (theta_j, k_l).
  double mass(std::size_t j, std::size_t l) const { return mass_[l * theta_.size() + j]; }
  const std::vector<double>& masses() const { return mass_; }
  const std::vector<double>& log_weights() const { return log_w_; }

  double total_mass() const {
    double s = 0.0;
    for (double v : mass_) s += v;
    return s;
  }

  double theta_mean() const {
    double s = 0.0;
    for (std::size_t l = 0; l < k_grid_.size(); ++l)
      for (std::size_t j = 0; j < theta_.size(); ++j) s += theta_[j] * mass(j, l);
    return s;
  }

  std::vector<double> k_marginal() const {
    std::vector<double> out(k_grid_.size(), 0.0);
    for (std::size_t l = 0; l < k_grid_.size(); ++l)
      for (std::size_t j = 0; j < theta_.size(); ++j) out[l] += mass(j, l);
    return out;
  }

  double k_sigma_mean() const {
    auto mk = k_marginal();
    double s = 0.0;
    for (std::size_t l = 0; l < mk.size(); ++l) s += k_grid_[l] * mk[l];
    return s;
  }

  // Largest marginal mass sitting in an edge cell of the k_sigma prior.
  double k_edge_mass() const {
    if (k_grid_.size() < 2) return 0.0;
    auto mk = k_marginal();
    return std::max(mk.front(), mk.back());
  }

 private:
  void renormalise() {
    double mx = -std::numeric_limits<double>::infinity();
    for (double v : log_w_) mx = std::max(mx, v);
    if (!std::isfinite(mx))
      throw std::runtime_error("Posterior: every cell has zero likelihood (underflow)");
    double total = 0.0;
    for (std::size_t i = 0; i < log_w_.size(); ++i) {
      mass_[i] = std::exp(log_w_[i] - mx);
      total += mass_[i];
    }
    const double log_total = mx + std::log(total);
    for (std::size_t i = 0; i < log_w_.size(); ++i) {
      mass_[i] /= total;
      log_w_[i] -= log_total;
    }
  }

  NoiseChannel model_ = Noiseless{};
  std::vector<double> k_grid_;
  std::vector<double> theta_;
  std::vector<double> log_w_;
  std::vector<double> mass_;
};

struct QaeRun {
  QaeSchedule schedule;  // rounds actually executed, with the shots actually used
  NoiseChannel noise = Noiseless{};
  std::vector<std::int64_t> outcomes;
  Posterior posterior;
  double theta_hat = 0.0;
  double a_hat = 0.0;
  double k_sigma_hat = 0.0;
  std::int64_t oracle_calls = 0;
  bool prior_boundary_flag = false;
};

inline QaeRun make_run(const NoiseChannel& noise_true, Posterior prior) {
  QaeRun run;
  run.noise = noise_true;
  run.posterior = std::move(prior);
  run.theta_hat = run.posterior.theta_mean();
  double s = std::sin(run.theta_hat);
  run.a_hat = s * s;
  run.k_sigma_hat = run.posterior.k_sigma_mean();
  return run;
}

inline QaeRun& bayes_update(QaeRun& run, std::int64_t m, std::int64_t shots, std::int64_t ones) {
  run.posterior.update(m, shots, ones);
  run.schedule.rounds.push_back({m, shots});
  run.outcomes.push_back(ones);
  run.oracle_calls += Round{m, shots}.cost();
  run.theta_hat = run.posterior.theta_mean();
  double s = std::sin(run.theta_hat);
  run.a_hat = s * s;
  run.k_sigma_hat = run.posterior.k_sigma_mean();
  run.prior_boundary_flag = run.posterior.k_edge_mass() > 0.5;
  return run;
}

namespace detail {

inline void check_theta(double theta) {
  if (!(theta >= 0.0 && theta <= std::numbers::pi / 2.0 + 1e-15))
    throw std::invalid_argument("theta_true must lie in [0, pi/2]");
}

// Shrinks a round so it fits the remaining budget; empty when it cannot.
// Only the very first round may be shrunk, later rounds either fit or stop the run.
inline std::optional<Round> fit_round(Round r, std::optional<std::int64_t> remaining, bool first) {
  if (!remaining) return r;
  if (r.cost() <= *remaining) return r;
  if (!first) return std::nullopt;
  std::int64_t shots = *remaining / (2 * r.m + 1);
  if (shots < 1) return std::nullopt;
  return Round{r.m, shots};
}

inline std::vector<double> linspace(double lo, double hi, int n) {
  if (n <= 1 || hi == lo) return {lo};
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) out[i] = lo + (hi - lo) * i / (n - 1);
  return out;
}

}  // namespace detail

// MLE-QAE: fixed schedule, posterior under noise_inference. With an oracle
// budget the schedule is cut greedily at the first round that no longer fits.
inline QaeRun run_mle_qae(double theta_true, const QaeSchedule& schedule,
                          const NoiseChannel& noise_true, const NoiseChannel& noise_inference,
                          const GridSizes& sizes, RngStream& rng,
                          std::optional<std::int64_t> budget = std::nullopt) {
  detail::check_theta(theta_true);
  schedule.validate();
  validate(noise_true);
  validate(noise_inference);
  QaeRun run = make_run(noise_true, Posterior(sizes.theta_cells, {noise_k_sigma(noise_inference)},
                                              noise_inference));
  for (const Round& planned : schedule.rounds) {
    auto remaining = budget ? std::optional<std::int64_t>(*budget - run.oracle_calls) : std::nullopt;
    auto r = detail::fit_round(planned, remaining, run.schedule.rounds.empty());
    if (!r) break;
    std::int64_t h = draw_round(theta_true, r->m, r->shots, noise_true, rng);
    bayes_update(run, r->m, r->shots, h);
  }
  return run;
}

// Shots after inflation by the current noise estimate: ceil((4 k m + 1) N).
inline std::int64_t inflated_shots(double k_sigma_hat, std::int64_t m, std::int64_t shots) {
  double v = (4.0 * k_sigma_hat * static_cast<double>(m) + 1.0) * static_cast<double>(shots);
  return static_cast<std::int64_t>(std::ceil(v - 1e-9 * v));
}

// NA-QAE: joint (theta, k_sigma) posterior with a uniform prior over
// [k_lo, k_hi], a depolarising inference model, and per-round shot inflation.
inline QaeRun run_na_qae(double theta_true, const QaeSchedule& base_schedule,
                         const NoiseChannel& noise_true, double k_lo, double k_hi,
                         const GridSizes& sizes, RngStream& rng,
                         std::optional<std::int64_t> budget = std::nullopt) {
  detail::check_theta(theta_true);
  base_schedule.validate();
  validate(noise_true);
  if (!(k_lo >= 0.0 && k_hi >= k_lo)) throw std::invalid_argument("run_na_qae: need 0 <= k_lo <= k_hi");
  QaeRun run = make_run(noise_true, Posterior(sizes.theta_cells,
                                              detail::linspace(k_lo, k_hi, sizes.k_sigma_cells),
                                              Depolarising{k_lo}));
  for (const Round& planned : base_schedule.rounds) {
    Round inflated{planned.m, inflated_shots(run.k_sigma_hat, planned.m, planned.shots)};
    auto remaining = budget ? std::optional<std::int64_t>(*budget - run.oracle_calls) : std::nullopt;
    auto r = detail::fit_round(inflated, remaining, run.schedule.rounds.empty());
    if (!r) break;
    std::int64_t h = draw_round(theta_true, r->m, r->shots, noise_true, rng);
    bayes_update(run, r->m, r->shots, h);
  }
  return run;
}

struct DeviceNoise {
  double p_coh = 1.0;
  double k_sigma = 0.0;
};

// Coherence probability of one Grover application with n2 two-qubit gates.
inline DeviceNoise k_sigma_from_device(double infidelity, std::int64_t n2) {
  if (!(infidelity >= 0.0 && infidelity < 0.5))
    throw std::invalid_argument("k_sigma_from_device: infidelity must lie in [0, 0.5)");
  if (n2 < 1) throw std::invalid_argument("k_sigma_from_device: n2 must be >= 1");
  double log_p = static_cast<double>(n2) * std::log1p(-2.0 * infidelity);
  return {std::exp(log_p), -0.5 * log_p};
}

struct GateBudget {
  std::int64_t total_gates = 0;
  std::int64_t expected_errors = 0;
};

inline GateBudget gate_budget(std::int64_t m, std::int64_t prep_gates, std::int64_t grover_gates,
                              double infidelity) {
  if (m < 0 || prep_gates < 0 || grover_gates < 0 || !(infidelity >= 0.0))
    throw std::invalid_argument("gate_budget: arguments must be non-negative");
  std::int64_t total = prep_gates + m * grover_gates;
  double expected = static_cast<double>(total) * (4.0 / 3.0) * infidelity;
  return {total, static_cast<std::int64_t>(std::llround(expected))};
}

inline nlohmann::json to_json(const NoiseChannel& n) {
  nlohmann::json j{{"model", noise_name(n)}};
  std::visit(Overloaded{
                 [](const Noiseless&) {},
                 [&](const Depolarising& d) { j["k_sigma"] = d.k_sigma; },
                 [&](const GaussianAngleLiteral& g) {
                   j["k_mu"] = g.k_mu;
                   j["k_sigma"] = g.k_sigma;
                 },
             },
             n);
  return j;
}

inline nlohmann::json to_json(const QaeRun& run) {
  nlohmann::json rounds = nlohmann::json::array();
  for (std::size_t k = 0; k < run.schedule.rounds.size(); ++k) {
    const auto& r = run.schedule.rounds[k];
    rounds.push_back({{"m", r.m}, {"N", r.shots}, {"h", run.outcomes[k]}});
  }
  return {{"noise", to_json(run.noise)},
          {"inference", to_json(run.posterior.model())},
          {"rounds", rounds},
          {"theta_hat", run.theta_hat},
          {"a_hat", run.a_hat},
          {"k_sigma_hat", run.k_sigma_hat},
          {"oracle_calls", run.oracle_calls},
          {"prior_boundary_flag", run.prior_boundary_flag},
          {"grid", {{"theta_cells", run.posterior.theta_cells()}, {"k_sigma_cells", run.posterior.k_cells()}}}};
}

}  // namespace qmci
