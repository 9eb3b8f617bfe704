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
#include <cstdint>
#include <functional>
#include <limits>
#include <numbers>
#include <ostream>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

#include "qmci/discretisation.hpp"
#include "qmci/distributions.hpp"
#include "qmci/io.hpp"
#include "qmci/parallel.hpp"
#include "qmci/qae.hpp"
#include "qmci/rng.hpp"

namespace qmci {

struct EstimatorConfig {
  std::int64_t shots_per_round = 100;
  bool include_zero = true;
  bool na_qae = false;
  double k_lo = 0.0;  // NA-QAE prior on k_sigma
  double k_hi = 0.0;
  NoiseChannel inference = Noiseless{};  // what MLE-QAE assumes
  GridSizes grid{};
};

struct QmciProblem {
  PreparedState state;
  AppliedFunction g;
  NoiseChannel noise = Noiseless{};
  EstimatorConfig config;
};

// a = sum_i g~(x_i) p(x_i), the 1-probability of the ideal circuit.
inline double true_amplitude(const QmciProblem& problem) {
  if (!(problem.state.grid() == problem.g.grid()))
    throw std::invalid_argument("true_amplitude: grid mismatch");
  double a = 0.0;
  for (std::size_t i = 0; i < problem.state.p.size(); ++i)
    a += problem.g.rescaled(i) * problem.state.p[i];
  return std::clamp(a, 0.0, 1.0);
}

// EIS long enough that its base cost exceeds the budget.
inline QaeSchedule budget_schedule(std::int64_t budget, const EstimatorConfig& cfg) {
  QaeSchedule s;
  std::int64_t spent = 0;
  for (int k = 0; k < 60 && spent <= budget; ++k) {
    std::int64_t m = cfg.include_zero ? (k == 0 ? 0 : std::int64_t{1} << (k - 1)) : std::int64_t{1} << k;
    Round r{m, cfg.shots_per_round};
    s.rounds.push_back(r);
    spent += r.cost();
  }
  return s;
}

struct QmciResult {
  double estimate = 0.0;
  QaeRun run;
};

inline QmciResult qmci_estimate(const QmciProblem& problem, std::int64_t total_samples,
                                RngStream& rng) {
  if (total_samples < 1) throw std::invalid_argument("qmci_estimate: budget too small for one shot");
  const auto& cfg = problem.config;
  if (!cfg.include_zero && total_samples < 3)
    throw std::invalid_argument("qmci_estimate: budget too small for one shot at m = 1");
  double a = true_amplitude(problem);
  double theta = std::asin(std::sqrt(a));
  QaeSchedule schedule = budget_schedule(total_samples, cfg);
  QmciResult out;
  if (cfg.na_qae) {
    out.run = run_na_qae(theta, schedule, problem.noise, cfg.k_lo, cfg.k_hi, cfg.grid, rng,
                         total_samples);
  } else {
    out.run = run_mle_qae(theta, schedule, problem.noise, cfg.inference, cfg.grid, rng,
                          total_samples);
  }
  out.estimate = problem.g.unrescale(out.run.a_hat);
  return out;
}

// Mean of g over i.i.d. draws of the continuous law (exact thresholds).
inline double cmci_estimate(const Distribution& spec, const FunctionKind& g,
                            std::int64_t total_samples, RngStream& rng) {
  if (total_samples < 1) throw std::invalid_argument("cmci_estimate: need at least one sample");
  auto xs = sample(spec, rng, static_cast<std::size_t>(total_samples));
  double s = 0.0;
  for (double x : xs) s += apply_function(g, x);
  return s / static_cast<double>(total_samples);
}

struct LineFit {
  double slope = std::numeric_limits<double>::quiet_NaN();
  double intercept = std::numeric_limits<double>::quiet_NaN();
};

// Least-squares line through (log x, log y).
inline LineFit loglog_fit(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) return {};
  double n = static_cast<double>(x.size()), sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0) || !(y[i] > 0.0)) return {};
    double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  double den = n * sxx - sx * sx;
  if (den == 0.0) return {};
  double slope = (n * sxy - sx * sy) / den;
  return {slope, (sy - slope * sx) / n};
}

struct RmseResult {
  std::vector<std::int64_t> sample_sizes;
  std::vector<double> rmse;
  std::vector<double> mean;  // replicate mean per size, for bias read-off
  double slope = std::numeric_limits<double>::quiet_NaN();
  double intercept = std::numeric_limits<double>::quiet_NaN();
  int replicates = 0;
  // estimates[k][i]: size k, replicate i.
  std::vector<std::vector<double>> estimates;
};

using SampleEstimator = std::function<double(std::int64_t, RngStream&)>;

// Replicate i at size index k draws from RngStream(seed, i).split(k), so rows
// do not depend on how replicates are scheduled across workers.
inline RmseResult rmse_experiment(const SampleEstimator& estimator, double truth,
                                  const std::vector<std::int64_t>& sizes, int replicates,
                                  std::uint64_t seed, unsigned workers = 0) {
  if (replicates < 2) throw std::invalid_argument("rmse_experiment: need at least 2 replicates");
  if (sizes.empty()) throw std::invalid_argument("rmse_experiment: no sample sizes");
  RmseResult out;
  out.sample_sizes = sizes;
  out.replicates = replicates;
  out.estimates.assign(sizes.size(), std::vector<double>(static_cast<std::size_t>(replicates)));
  const std::size_t R = static_cast<std::size_t>(replicates);
  parallel_for(
      sizes.size() * R,
      [&](std::size_t job) {
        std::size_t k = job / R, i = job % R;
        RngStream rng = RngStream(seed, i).split(k);
        out.estimates[k][i] = estimator(sizes[k], rng);
      },
      workers);
  std::vector<double> xs;
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    double se = 0.0, m = 0.0;
    for (double e : out.estimates[k]) {
      se += (e - truth) * (e - truth);
      m += e;
    }
    out.rmse.push_back(std::sqrt(se / static_cast<double>(R)));
    out.mean.push_back(m / static_cast<double>(R));
    xs.push_back(static_cast<double>(sizes[k]));
  }
  auto fit = loglog_fit(xs, out.rmse);
  out.slope = fit.slope;
  out.intercept = fit.intercept;
  return out;
}

inline void write_csv(std::ostream& os, const RmseResult& r) {
  write_csv_row(os, {"size", "rmse", "mean"});
  for (std::size_t k = 0; k < r.sample_sizes.size(); ++k)
    write_csv_row(os, {static_cast<long long>(r.sample_sizes[k]), r.rmse[k], r.mean[k]});
}

inline nlohmann::json rmse_header(const RmseResult& r) {
  return {{"slope", r.slope}, {"intercept", r.intercept}, {"replicates", r.replicates}};
}

}  // namespace qmci
