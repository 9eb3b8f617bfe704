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

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "qmci/mci.hpp"
#include "qmci/qae.hpp"

namespace qmci {
namespace {

constexpr double kPi = std::numbers::pi;

TEST(ShotProbability, ZeroPowerIgnoresNoise) {
  for (const NoiseChannel& n : {NoiseChannel{Noiseless{}}, NoiseChannel{Depolarising{0.3}},
                                NoiseChannel{GaussianAngleLiteral{0.2, 0.3}}})
    EXPECT_NEAR(shot_probability(kPi / 4, 0, n), 0.5, 1e-15);
}

TEST(ShotProbability, DepolarisingMixesOut) {
  EXPECT_NEAR(shot_probability(0.3, 100000, Depolarising{0.01}), 0.5, 1e-12);
}

TEST(ShotProbability, LiteralFormula) {
  double p = shot_probability(kPi / 6, 32, GaussianAngleLiteral{0.0, 0.004});
  double s = std::sin(65.0 * kPi / 6.0);
  EXPECT_NEAR(p, std::exp(-0.256) * s * s, 1e-14);
}

TEST(ShotProbability, ChannelsAgreeOnlyAtZeroPower) {
  for (double th : {0.2, 0.7, 1.3}) {
    EXPECT_EQ(shot_probability(th, 0, Depolarising{0.004}),
              shot_probability(th, 0, GaussianAngleLiteral{0.0, 0.004}));
    // Elsewhere the two models differ by the mixed-state offset.
    double d = shot_probability(th, 8, Depolarising{0.004});
    double l = shot_probability(th, 8, GaussianAngleLiteral{0.0, 0.004});
    EXPECT_NEAR(d - l, 0.5 * (1.0 - std::exp(-2.0 * 0.004 * 8)), 1e-14);
  }
}

TEST(ShotProbability, AlwaysAProbability) {
  RngStream rng(3, 0);
  for (int i = 0; i < 20000; ++i) {
    double th = rng.uniform() * kPi / 2;
    auto m = static_cast<std::int64_t>(rng() % 200);
    double k = rng.uniform();
    for (const NoiseChannel& n : {NoiseChannel{Noiseless{}}, NoiseChannel{Depolarising{k}},
                                  NoiseChannel{GaussianAngleLiteral{rng.uniform() - 0.5, k}}}) {
      double p = shot_probability(th, m, n);
      EXPECT_GE(p, 0.0);
      EXPECT_LE(p, 1.0);
    }
  }
}

TEST(Schedule, EisWithZero) {
  auto s = eis_schedule(6, 100, true);
  std::vector<std::int64_t> m;
  for (const auto& r : s.rounds) m.push_back(r.m);
  EXPECT_EQ(m, (std::vector<std::int64_t>{0, 1, 2, 4, 8, 16}));
  EXPECT_EQ(s.oracle_calls(), 6800);
}

TEST(Schedule, EisLiteral) {
  auto s = eis_schedule(3, 1, false);
  std::vector<std::int64_t> m;
  for (const auto& r : s.rounds) m.push_back(r.m);
  EXPECT_EQ(m, (std::vector<std::int64_t>{1, 2, 4}));
}

TEST(Schedule, Rejects) {
  EXPECT_THROW(eis_schedule(0, 10), std::invalid_argument);
  QaeSchedule bad{{{4, 10}, {2, 10}}};
  EXPECT_THROW(bad.validate(), std::invalid_argument);
}

TEST(DrawRound, Extremes) {
  RngStream rng(1, 1);
  EXPECT_EQ(draw_round(0.0, 3, 50, Noiseless{}, rng), 0);
  EXPECT_EQ(draw_round(kPi / 2, 0, 50, Noiseless{}, rng), 50);
}

TEST(DrawRound, CltBand) {
  RngStream rng(1, 2);
  double th = std::asin(std::sqrt(0.3));
  auto h = draw_round(th, 0, 1'000'000, Noiseless{}, rng);
  EXPECT_NEAR(static_cast<double>(h) / 1e6, 0.3, 5.0 * std::sqrt(0.21 / 1e6));
}

TEST(DrawRound, Reproducible) {
  RngStream a(9, 9), b(9, 9);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(draw_round(0.4, i % 8, 100, Noiseless{}, a), draw_round(0.4, i % 8, 100, Noiseless{}, b));
}

TEST(Posterior, NormalisedAfterEveryUpdate) {
  Posterior p(512, detail::linspace(0.0, 0.01, 8), Depolarising{0.0});
  RngStream rng(4, 0);
  for (int k = 0; k < 12; ++k) {
    std::int64_t m = k == 0 ? 0 : (1 << (k - 1));
    p.update(m, 50, draw_round(0.7, m, 50, Depolarising{0.004}, rng));
    EXPECT_NEAR(p.total_mass(), 1.0, 1e-12);
    for (double v : p.masses()) EXPECT_GE(v, 0.0);
  }
}

TEST(Posterior, AllOnesPullsTowardsHalfPi) {
  Posterior p(1024, {}, Noiseless{});
  double before = p.theta_mean();
  p.update(0, 20, 20);
  EXPECT_GT(p.theta_mean(), before);
  EXPECT_GT(p.mass(1023, 0), p.mass(512, 0));
}

TEST(Posterior, UpdatesCommuteWithCombined) {
  Posterior a(2048, {}, Noiseless{}), b(2048, {}, Noiseless{});
  a.update(4, 30, 12);
  a.update(4, 70, 41);
  b.update(4, 100, 53);
  for (std::size_t i = 0; i < a.log_weights().size(); ++i) {
    double x = a.log_weights()[i], y = b.log_weights()[i];
    if (std::isinf(x) || std::isinf(y)) {
      EXPECT_EQ(x, y) << i;  // excluded cells agree
    } else {
      EXPECT_NEAR(x, y, 1e-10) << i;
    }
  }
}

TEST(Posterior, UnderflowIsAnError) {
  Posterior p(64, {1e6}, GaussianAngleLiteral{0.0, 1e6});
  EXPECT_THROW(p.update(1, 10, 5), std::runtime_error);
}

TEST(MleQae, CalibratedAtPiOverFour) {
  auto sched = eis_schedule(6, 100);
  int inside = 0;
  for (int s = 0; s < 1000; ++s) {
    RngStream rng(11, static_cast<std::uint64_t>(s));
    auto run = run_mle_qae(kPi / 4, sched, Noiseless{}, Noiseless{}, {}, rng);
    if (run.a_hat >= 0.49 && run.a_hat <= 0.51) ++inside;
  }
  EXPECT_GE(inside, 950);
}

TEST(MleQae, LedgerAndEstimates) {
  RngStream rng(12, 0);
  auto run = run_mle_qae(0.6, eis_schedule(8, 100), Noiseless{}, Noiseless{}, {}, rng);
  std::int64_t calls = 0;
  for (const auto& r : run.schedule.rounds) calls += r.shots * (2 * r.m + 1);
  EXPECT_EQ(run.oracle_calls, calls);
  EXPECT_EQ(run.oracle_calls, eis_schedule(8, 100).oracle_calls());
  EXPECT_NEAR(run.a_hat, std::pow(std::sin(run.theta_hat), 2), 1e-15);
  EXPECT_EQ(run.outcomes.size(), 8u);
  for (std::size_t k = 0; k < run.outcomes.size(); ++k) {
    EXPECT_GE(run.outcomes[k], 0);
    EXPECT_LE(run.outcomes[k], run.schedule.rounds[k].shots);
  }
}

TEST(MleQae, ZeroAmplitudeHandled) {
  RngStream rng(13, 0);
  auto run = run_mle_qae(0.0, eis_schedule(8, 100), Noiseless{}, Noiseless{}, {}, rng);
  EXPECT_LT(run.a_hat, 1e-4);
  EXPECT_GT(run.theta_hat, 0.0);
}

// Noiseless RMSE against oracle calls falls like 1/S.
TEST(MleQae, HeisenbergScaling) {
  for (double th : {0.3, 0.6, 1.0}) {
    std::vector<double> calls, rmse;
    for (int rounds = 4; rounds <= 10; ++rounds) {
      auto sched = eis_schedule(rounds, 100);
      double se = 0.0;
      const int reps = 250;
      for (int s = 0; s < reps; ++s) {
        RngStream rng(RngStream(14, static_cast<std::uint64_t>(s)).split(static_cast<std::uint64_t>(rounds)));
        auto run = run_mle_qae(th, sched, Noiseless{}, Noiseless{}, {}, rng);
        double e = run.a_hat - std::pow(std::sin(th), 2);
        se += e * e;
      }
      calls.push_back(static_cast<double>(sched.oracle_calls()));
      rmse.push_back(std::sqrt(se / reps));
    }
    auto fit = loglog_fit(calls, rmse);
    EXPECT_GE(fit.slope, -1.2) << th;
    EXPECT_LE(fit.slope, -0.8) << th;
  }
}

TEST(MleQae, BudgetTruncation) {
  RngStream rng(15, 0);
  auto run = run_mle_qae(0.5, eis_schedule(10, 100), Noiseless{}, Noiseless{}, {}, rng, 2000);
  EXPECT_LE(run.oracle_calls, 2000);
  std::size_t used = run.schedule.rounds.size();
  auto full = eis_schedule(10, 100);
  EXPECT_GT(run.oracle_calls + full.rounds[used].cost(), 2000);
}

TEST(NaQae, ShotRule) {
  EXPECT_EQ(inflated_shots(0.004, 32, 100), 152);
  EXPECT_EQ(inflated_shots(0.0, 32, 100), 100);
  EXPECT_EQ(inflated_shots(0.004, 0, 100), 100);
}

TEST(NaQae, ReducesToMleWithoutNoise) {
  RngStream rng(16, 0);
  auto base = eis_schedule(7, 100);
  auto run = run_na_qae(0.8, base, Noiseless{}, 0.0, 0.001, {1024, 16}, rng);
  for (std::size_t k = 0; k < run.schedule.rounds.size(); ++k) {
    auto n = run.schedule.rounds[k].shots;
    EXPECT_GE(n, 100);
    EXPECT_LE(n, static_cast<std::int64_t>(std::ceil((4 * 0.001 * base.rounds[k].m + 1) * 100)));
  }
  EXPECT_NEAR(run.a_hat, std::pow(std::sin(0.8), 2), 0.01);
  EXPECT_FALSE(run.prior_boundary_flag);
}

// Truth k = 0.02 against a prior on [0, 0.001]: the k marginal should pile into
// the top cell. Angles near pi/4 are avoided since there p = 1/2 for every k.
TEST(NaQae, FlagsExcludedTruth) {
  int flagged = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    RngStream rng(17, s);
    auto run = run_na_qae(0.3, eis_schedule(9, 100), Depolarising{0.02}, 0.0, 0.001, {1024, 16}, rng);
    flagged += run.prior_boundary_flag ? 1 : 0;
  }
  EXPECT_GE(flagged, 15);
}

TEST(NaQae, LedgerMatchesRounds) {
  RngStream rng(18, 0);
  auto run = run_na_qae(0.5, eis_schedule(8, 50), Depolarising{0.004}, 0.004, 0.008, {1024, 16}, rng, 20000);
  std::int64_t calls = 0;
  for (const auto& r : run.schedule.rounds) calls += r.cost();
  EXPECT_EQ(calls, run.oracle_calls);
  EXPECT_LE(run.oracle_calls, 20000);
  EXPECT_GE(run.k_sigma_hat, 0.004);
  EXPECT_LE(run.k_sigma_hat, 0.008);
}

// NA-QAE against un-mitigated MLE-QAE at matched budgets.
TEST(NaQae, BeatsUnmitigatedOnMostBudgets) {
  const double th = 0.6, a = std::pow(std::sin(th), 2);
  const NoiseChannel noise = Depolarising{0.004};
  EstimatorConfig cfg{.shots_per_round = 10};
  int wins = 0;
  for (std::int64_t budget : {3000, 4000, 5000, 6000, 7000}) {
    double se_na = 0.0, se_plain = 0.0;
    for (int s = 0; s < 100; ++s) {
      RngStream r1 = RngStream(19, static_cast<std::uint64_t>(s)).split(static_cast<std::uint64_t>(budget));
      RngStream r2 = r1;
      auto sched = budget_schedule(budget, cfg);
      auto na = run_na_qae(th, sched, noise, 0.004, 0.008, {}, r1, budget);
      auto plain = run_mle_qae(th, sched, noise, Noiseless{}, {}, r2, budget);
      se_na += (na.a_hat - a) * (na.a_hat - a);
      se_plain += (plain.a_hat - a) * (plain.a_hat - a);
    }
    if (se_na <= se_plain) ++wins;
  }
  EXPECT_GE(wins, 4);
}

TEST(Device, KSigma) {
  auto d = k_sigma_from_device(1.766e-5, 214);
  EXPECT_NEAR(d.p_coh, 0.99247, 1e-5);
  EXPECT_NEAR(d.k_sigma, 0.00378, 1e-5);
  auto z = k_sigma_from_device(0.0, 214);
  EXPECT_EQ(z.p_coh, 1.0);
  EXPECT_EQ(z.k_sigma, 0.0);
  auto d2 = k_sigma_from_device(1.766e-5, 428);
  EXPECT_NEAR(d2.p_coh, d.p_coh * d.p_coh, 1e-15);
  EXPECT_NEAR(d2.k_sigma, 2.0 * d.k_sigma, 1e-15);
  EXPECT_THROW(k_sigma_from_device(0.5, 1), std::invalid_argument);
  EXPECT_THROW(k_sigma_from_device(0.1, 0), std::invalid_argument);
}

TEST(Device, GateBudgetTable) {
  auto b16 = gate_budget(16, 66, 214, 8.830e-4);
  EXPECT_EQ(b16.total_gates, 3490);
  EXPECT_EQ(b16.expected_errors, 4);
  auto b32 = gate_budget(32, 66, 214, 8.830e-4);
  EXPECT_EQ(b32.total_gates, 6914);
  EXPECT_EQ(b32.expected_errors, 8);
  auto b64 = gate_budget(64, 66, 214, 8.830e-4);
  EXPECT_EQ(b64.total_gates, 13762);
  EXPECT_EQ(b64.expected_errors, 16);
  for (std::int64_t m : {16, 32, 64}) EXPECT_EQ(gate_budget(m, 66, 214, 1.766e-5).expected_errors, 0);
}

TEST(Json, RunTrace) {
  RngStream rng(20, 0);
  auto run = run_mle_qae(0.4, eis_schedule(3, 10), Noiseless{}, Noiseless{}, {256, 1}, rng);
  auto j = to_json(run);
  EXPECT_EQ(j["rounds"].size(), 3u);
  EXPECT_EQ(j["rounds"][2]["m"], 2);
  EXPECT_EQ(j["oracle_calls"], run.oracle_calls);
  EXPECT_EQ(j["noise"]["model"], "noiseless");
}

}  // namespace
}  // namespace qmci
