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

// qmci_lab: batch runner for the error audits, estimator studies and
// allocation experiments. Every subcommand reads one JSON config, validates it
// completely, runs, and only then writes its CSVs plus manifest.json.

#include <CLI11.hpp>
#include <boost/version.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "qmci/qmci.hpp"

namespace {

using json = nlohmann::json;
using namespace qmci;

constexpr const char* kVersion = "0.1.0";

// Raised for anything wrong with the inputs. Maps to exit code 1.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Typed view over a JSON object that remembers which keys were read, so
// misspelt keys are rejected instead of silently ignored.
class Config {
 public:
  Config(json j, std::string path) : j_(std::move(j)), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where("") + "must be a JSON object");
  }

  bool has(const std::string& k) const { return j_.contains(k); }

  double num(const std::string& k, double def) {
    if (!take(k)) return def;
    const json& v = j_.at(k);
    if (!v.is_number()) throw ConfigError(where(k) + "must be a number");
    double x = v.get<double>();
    if (!std::isfinite(x)) throw ConfigError(where(k) + "must be finite");
    return x;
  }

  std::int64_t integer(const std::string& k, std::int64_t def) {
    if (!take(k)) return def;
    const json& v = j_.at(k);
    if (!v.is_number_integer()) throw ConfigError(where(k) + "must be an integer");
    return v.get<std::int64_t>();
  }

  std::string str(const std::string& k, const std::string& def) {
    if (!take(k)) return def;
    const json& v = j_.at(k);
    if (!v.is_string()) throw ConfigError(where(k) + "must be a string");
    return v.get<std::string>();
  }

  std::vector<double> nums(const std::string& k, std::vector<double> def) {
    if (!take(k)) return def;
    const json& v = j_.at(k);
    if (!v.is_array() || v.empty()) throw ConfigError(where(k) + "must be a non-empty array");
    std::vector<double> out;
    for (const auto& e : v) {
      if (!e.is_number()) throw ConfigError(where(k) + "must hold numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }

  std::vector<std::int64_t> ints(const std::string& k, std::vector<std::int64_t> def) {
    if (!take(k)) return def;
    const json& v = j_.at(k);
    if (!v.is_array() || v.empty()) throw ConfigError(where(k) + "must be a non-empty array");
    std::vector<std::int64_t> out;
    for (const auto& e : v) {
      if (!e.is_number_integer()) throw ConfigError(where(k) + "must hold integers");
      out.push_back(e.get<std::int64_t>());
    }
    return out;
  }

  // Child object; an absent key yields an empty object so defaults apply.
  Config& sub(const std::string& k) {
    json v = json::object();
    if (take(k)) v = j_.at(k);
    children_.push_back(std::make_unique<Config>(v, path_ + k + "."));
    return *children_.back();
  }

  std::vector<Config*> list(const std::string& k) {
    std::vector<Config*> out;
    if (!take(k)) return out;
    const json& v = j_.at(k);
    if (!v.is_array()) throw ConfigError(where(k) + "must be an array");
    for (std::size_t i = 0; i < v.size(); ++i) {
      children_.push_back(std::make_unique<Config>(v[i], path_ + k + "[" + std::to_string(i) + "]."));
      out.push_back(children_.back().get());
    }
    return out;
  }

  void mark(const std::string& k) { used_.insert(k); }

  void check_unused() const {
    for (const auto& [k, v] : j_.items())
      if (!used_.count(k)) throw ConfigError("unknown config key '" + path_ + k + "'");
    for (const auto& c : children_) c->check_unused();
  }

 private:
  bool take(const std::string& k) {
    used_.insert(k);
    return j_.contains(k) && !j_.at(k).is_null();
  }
  std::string where(const std::string& k) const { return "config key '" + path_ + k + "' "; }

  json j_;
  std::string path_;
  std::set<std::string> used_;
  std::vector<std::unique_ptr<Config>> children_;
};

void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

Distribution parse_distribution(Config& c, Distribution def) {
  std::string type = c.str("type", std::visit(Overloaded{
                                                  [](const Gaussian&) { return "gaussian"; },
                                                  [](const LogNormal&) { return "lognormal"; },
                                                  [](const Levy&) { return "levy"; },
                                              },
                                              def));
  Distribution d;
  if (type == "gaussian") {
    auto g = std::get_if<Gaussian>(&def) ? std::get<Gaussian>(def) : Gaussian{};
    d = Gaussian{c.num("mu", g.mu), c.num("sigma", g.sigma)};
  } else if (type == "lognormal") {
    auto g = std::get_if<LogNormal>(&def) ? std::get<LogNormal>(def) : LogNormal{};
    d = LogNormal{c.num("mu", g.mu), c.num("sigma", g.sigma)};
  } else if (type == "levy") {
    auto g = std::get_if<Levy>(&def) ? std::get<Levy>(def) : Levy{};
    d = Levy{c.num("mu", g.mu), c.num("c", g.c)};
  } else {
    throw ConfigError("unknown distribution type '" + type + "'");
  }
  try {
    validate(d);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return d;
}

Gaussian parse_gaussian(Config& c, Gaussian def) {
  Distribution d = parse_distribution(c, def);
  const auto* g = std::get_if<Gaussian>(&d);
  require(g != nullptr, "this subcommand needs a gaussian distribution");
  return *g;
}

NoiseChannel parse_noise(Config& c, NoiseChannel def) {
  std::string model = c.str("model", noise_name(def));
  NoiseChannel n;
  if (model == "noiseless") {
    n = Noiseless{};
  } else if (model == "depolarising") {
    n = Depolarising{c.num("k_sigma", noise_k_sigma(def))};
  } else if (model == "gaussian-angle") {
    n = GaussianAngleLiteral{c.num("k_mu", 0.0), c.num("k_sigma", noise_k_sigma(def))};
  } else {
    throw ConfigError("unknown noise model '" + model + "'");
  }
  try {
    validate(n);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return n;
}

EstimatorConfig parse_estimator(Config& c, EstimatorConfig def) {
  def.shots_per_round = c.integer("shots_per_round", def.shots_per_round);
  def.grid.theta_cells = static_cast<int>(c.integer("theta_cells", def.grid.theta_cells));
  def.grid.k_sigma_cells = static_cast<int>(c.integer("k_sigma_cells", def.grid.k_sigma_cells));
  require(def.shots_per_round >= 1, "shots_per_round must be >= 1");
  require(def.grid.theta_cells >= 2, "theta_cells must be >= 2");
  require(def.grid.k_sigma_cells >= 1, "k_sigma_cells must be >= 1");
  return def;
}

int parse_qubits(Config& c, int def) {
  auto n = c.integer("qubits", def);
  require(n >= 1 && n <= 24, "qubits must lie in [1, 24]");
  return static_cast<int>(n);
}

double positive(Config& c, const std::string& k, double def) {
  double v = c.num(k, def);
  require(v > 0.0, k + " must be > 0");
  return v;
}

void require_probabilities(const std::vector<double>& v, const std::string& what) {
  for (double a : v) require(a > 0.0 && a < 1.0, what + " must lie in (0, 1)");
}

void require_budgets(const std::vector<std::int64_t>& v, std::int64_t min, const std::string& what) {
  for (auto s : v) require(s >= min, what + " must be >= " + std::to_string(min));
}

std::string label(double v) { return format_double(v); }

std::string hex64(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex;
  os.width(16);
  os.fill('0');
  os << h;
  return os.str();
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double m = mean_of(v), s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

double rmse_of(const std::vector<double>& v, double truth) {
  double s = 0.0;
  for (double x : v) s += (x - truth) * (x - truth);
  return std::sqrt(s / static_cast<double>(v.size()));
}

// ---------------------------------------------------------------- run ----

struct Context {
  std::uint64_t seed = 42;
  int replicates = 0;  // 0: subcommand default
  std::string mode;    // empty: subcommand default
  unsigned workers = 0;
};

struct Outputs {
  std::vector<std::pair<std::string, std::string>> files;  // name, contents
  json summary = json::object();
};

// Validation happens when the job is built; the returned closure only runs.
using Job = std::function<Outputs()>;
using Builder = std::function<Job(Config&, const Context&)>;

int replicates_or(const Context& ctx, int def) {
  int r = ctx.replicates > 0 ? ctx.replicates : def;
  require(r >= 1, "replicates must be >= 1");
  return r;
}

// ------------------------------------------------------------- audits ----

Job build_audit_errors(Config& c, const Context&) {
  Gaussian g = parse_gaussian(c.sub("distribution"), Gaussian{0.10, 0.05});
  int n = parse_qubits(c, 5);
  double k = positive(c, "trunc_sigmas", 6.0);
  auto gammas = c.nums("gammas", {0.100, 0.125, 0.148, 0.150});
  Config& sw = c.sub("sweep");
  double lo = sw.num("lo", g.mu - 3 * g.sigma), hi = sw.num("hi", g.mu + 3 * g.sigma);
  int per_cell = static_cast<int>(sw.integer("per_cell", 64));
  require(hi > lo, "sweep.hi must exceed sweep.lo");
  require(per_cell >= 1, "sweep.per_cell must be >= 1");
  Grid grid = Grid::from_support(g.mu - k * g.sigma, g.mu + k * g.sigma, n);
  for (double gm : gammas) require(survival(g, gm) > 0.0, "gamma has an empty upper tail");
  return [=] {
    Outputs out;
    std::ostringstream t;
    write_csv_row(t, {"gamma", "estimand", "realised_cut", "analytical", "E_S", "eps_te", "eps_de",
                      "eps_noe", "eps_se", "eps_dthe", "scaled_te", "scaled_dthe"});
    json rows = json::array();
    for (double gm : gammas) {
      ErrorReport reports[2] = {gofgamma_error_report(g, gm, grid),
                                cvar_error_report(g, gm, grid, survival(g, gm))};
      const char* names[2] = {"g", "cvar"};
      for (int j = 0; j < 2; ++j) {
        const auto& r = reports[j];
        write_csv_row(t, {gm, names[j], effective_threshold(grid, gm), r.analytical_value,
                          r.intermediate.E_S, r.eps_te.value_or(0.0), r.eps_de, r.eps_noe,
                          r.eps_se, r.eps_dthe, r.scaled.at("te"), r.scaled.at("dthe")});
        rows.push_back({{"gamma", gm}, {"estimand", names[j]}, {"scaled_dthe", r.scaled.at("dthe")}});
      }
    }
    std::ostringstream s, d;
    write_sweep_csv(s, scaled_error_sweep(g, grid, dense_gammas(grid, lo, hi, per_cell)));
    write_csv(d, discretise(g, grid));
    out.files = {{"errors.csv", t.str()}, {"sweep.csv", s.str()}, {"grid.csv", d.str()}};
    out.summary = {{"grid", {{"a", grid.a()}, {"b", grid.b()}, {"qubits", n}}}, {"rows", rows}};
    return out;
  };
}

Job build_qubit_requirement(Config& c, const Context&) {
  Gaussian g = parse_gaussian(c.sub("distribution"), Gaussian{0.10, 0.05});
  auto truncs = c.nums("trunc_sigmas", {5.0, 6.0});
  auto n_min = c.integer("n_min", 5), n_max = c.integer("n_max", 16);
  double var_upper = c.num("var_upper_sigmas", 4.0);
  auto ppc = c.integer("points_per_cell", 1024);
  double thr = positive(c, "threshold", 1e-3);
  for (double k : truncs) require(k > 0.0, "trunc_sigmas must be > 0");
  require(n_min >= 1 && n_max <= 24 && n_min <= n_max, "need 1 <= n_min <= n_max <= 24");
  require(ppc >= 1, "points_per_cell must be >= 1");
  std::vector<int> ns;
  for (auto n = n_min; n <= n_max; ++n) ns.push_back(static_cast<int>(n));
  return [=] {
    Outputs out;
    std::ostringstream os;
    write_csv_row(os, {"trunc_sigmas", "n", "max_scaled_dthe", "max_scaled_te", "argmax_gamma"});
    json first = json::object();
    for (double k : truncs) {
      auto rows = max_scaled_error_vs_qubits(g, k, ns, var_upper, static_cast<int>(ppc));
      json f = nullptr;
      for (const auto& r : rows) {
        write_csv_row(os, {k, r.n, r.max_scaled_dthe, r.max_scaled_te, r.argmax_gamma});
        if (f.is_null() && r.max_scaled_dthe < thr) f = r.n;
      }
      first[label(k)] = f;
    }
    out.files = {{"qubits.csv", os.str()}};
    out.summary = {{"first_n_below_threshold", first}, {"threshold", thr}};
    return out;
  };
}

Job build_levy_tradeoff(Config& c, const Context&) {
  Distribution d = parse_distribution(c.sub("distribution"), Levy{0.01, 0.1});
  const auto* levy = std::get_if<Levy>(&d);
  require(levy != nullptr, "levy-tradeoff needs a levy distribution");
  auto n_list = c.ints("n_list", {5, 10, 15});
  auto xu = c.nums("xu_list", {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 12, 15, 20});
  for (auto n : n_list) require(n >= 1 && n <= 24, "n_list entries must lie in [1, 24]");
  for (double x : xu) require(x > levy->mu, "xu_list entries must exceed mu");
  std::vector<int> ns(n_list.begin(), n_list.end());
  Levy spec = *levy;
  return [=] {
    Outputs out;
    std::ostringstream os;
    write_csv_row(os, {"x_u", "n", "p_t", "p_d", "eps_te", "eps_de", "eps_noe"});
    for (const auto& r : levy_tradeoff(spec, ns, xu))
      write_csv_row(os, {r.x_u, r.n, r.p_t, r.p_d, r.eps_te, r.eps_de, r.eps_noe});
    out.files = {{"levy.csv", os.str()}};
    return out;
  };
}

// ------------------------------------------------------------ VaR/CVaR ----

Job build_estimate_var(Config& c, const Context& ctx) {
  Gaussian g = parse_gaussian(c.sub("distribution"), Gaussian{0.10, 0.05});
  int n = parse_qubits(c, 5);
  double k = positive(c, "trunc_sigmas", 5.0);
  auto alphas = c.nums("alphas", {0.5, 0.6915, 0.8334, 0.8413});
  double eps = positive(c, "epsilon", 1e-4);
  Config& br = c.sub("bracket");
  double lower = br.num("lower", g.mu - 3 * g.sigma), upper = br.num("upper", g.mu + 3 * g.sigma);
  auto S = c.integer("samples_per_call", 10000);
  NoiseChannel noise = parse_noise(c.sub("noise"), Noiseless{});
  EstimatorConfig est = parse_estimator(c.sub("estimator"), {});
  std::string mode = ctx.mode.empty() ? "qmci" : ctx.mode;
  int R = replicates_or(ctx, 1);
  require_probabilities(alphas, "alphas");
  require(upper > lower, "bracket.upper must exceed bracket.lower");
  require(S >= 1, "samples_per_call must be >= 1");
  require(mode == "qmci" || mode == "classical" || mode == "analytical",
          "estimate-var --mode must be qmci, classical or analytical");
  for (double a : alphas)
    require(cdf(g, upper) > a && cdf(g, lower) < a, "bracket does not contain the alpha-quantile");
  Grid grid = Grid::from_support(g.mu - k * g.sigma, g.mu + k * g.sigma, n);
  std::uint64_t seed = ctx.seed;
  unsigned workers = ctx.workers;
  return [=] {
    PreparedState state = exact_state(discretise(g, grid));
    const std::size_t A = alphas.size(), RR = static_cast<std::size_t>(R);
    std::vector<BisectionResult> res(A * RR);
    parallel_for(
        A * RR,
        [&](std::size_t job) {
          std::size_t a = job / RR, i = job % RR;
          RngStream rng = RngStream(seed, i).split(a);
          ProbabilityEstimator est_g;
          if (mode == "analytical") est_g = g_estimator_analytical(g);
          else if (mode == "classical") est_g = g_estimator_classical(sample(g, rng, static_cast<std::size_t>(S)));
          else est_g = g_estimator_qmci(state, noise, S, est, rng);
          res[job] = var_bisection(est_g, {upper, lower, eps, alphas[a]});
        },
        workers);
    Outputs out;
    std::ostringstream v, t;
    write_csv_row(v, {"alpha", "replicate", "var_hat", "truth", "abs_error", "delta"});
    write_csv_row(t, {"alpha", "replicate", "step", "c", "g_hat"});
    json summary = json::array();
    for (std::size_t a = 0; a < A; ++a) {
      double truth = quantile(g, alphas[a]);
      std::vector<double> vals;
      for (std::size_t i = 0; i < RR; ++i) {
        const auto& r = res[a * RR + i];
        vals.push_back(r.var_hat);
        write_csv_row(v, {alphas[a], static_cast<long long>(i), r.var_hat, truth,
                          std::abs(r.var_hat - truth), grid.delta()});
        for (const auto& st : r.trace)
          write_csv_row(t, {alphas[a], static_cast<long long>(i), st.step, st.c, st.g_hat});
      }
      summary.push_back({{"alpha", alphas[a]}, {"truth", truth}, {"mean_var_hat", mean_of(vals)},
                         {"sd", sd_of(vals)}});
    }
    out.files = {{"var.csv", v.str()}, {"trace.csv", t.str()}};
    out.summary = {{"estimator", mode}, {"alphas", summary}};
    return out;
  };
}

Job build_estimate_cvar(Config& c, const Context& ctx) {
  Gaussian g = parse_gaussian(c.sub("distribution"), Gaussian{0.10, 0.05});
  int n = parse_qubits(c, 5);
  double k = positive(c, "trunc_sigmas", 5.0);
  auto alphas = c.nums("alphas", {0.5, 0.6915});
  auto S = c.integer("samples", 20000);
  NoiseChannel noise = parse_noise(c.sub("noise"), Noiseless{});
  EstimatorConfig est = parse_estimator(c.sub("estimator"), {});
  int R = replicates_or(ctx, 1);
  require_probabilities(alphas, "alphas");
  require(S >= 2, "samples must be >= 2");
  Grid grid = Grid::from_support(g.mu - k * g.sigma, g.mu + k * g.sigma, n);
  std::uint64_t seed = ctx.seed;
  unsigned workers = ctx.workers;
  return [=] {
    PreparedState state = exact_state(discretise(g, grid));
    const std::size_t A = alphas.size(), RR = static_cast<std::size_t>(R);
    std::vector<std::array<double, 3>> res(A * RR);
    parallel_for(
        A * RR,
        [&](std::size_t job) {
          std::size_t a = job / RR, i = job % RR;
          RngStream base = RngStream(seed, i).split(a);
          double gamma = quantile(g, alphas[a]), tail = 1.0 - alphas[a];
          RngStream r1 = base.split(0), r2 = base.split(1), r3 = base.split(2);
          auto xs = sample(g, r3, static_cast<std::size_t>(S));
          std::sort(xs.begin(), xs.end());
          res[job] = {cvar_qmci(state, gamma, tail, noise, S, est, r1), cvar_cmci(g, gamma, tail, S, r2),
                      cvar_classical(xs, alphas[a])};
        },
        workers);
    Outputs out;
    std::ostringstream os;
    write_csv_row(os, {"alpha", "replicate", "gamma", "qmci", "cmci", "classical", "analytical"});
    for (std::size_t a = 0; a < A; ++a) {
      double gamma = quantile(g, alphas[a]);
      double truth = analytical_cvar_gaussian(g, alphas[a]);
      for (std::size_t i = 0; i < RR; ++i) {
        const auto& r = res[a * RR + i];
        write_csv_row(os, {alphas[a], static_cast<long long>(i), gamma, r[0], r[1], r[2], truth});
      }
    }
    out.files = {{"cvar.csv", os.str()}};
    return out;
  };
}

Job build_rmse_cvar(Config& c, const Context& ctx) {
  Gaussian g = parse_gaussian(c.sub("distribution"), Gaussian{0.10, 0.05});
  int n = parse_qubits(c, 5);
  double k = positive(c, "trunc_sigmas", 5.0);
  auto alphas = c.nums("alphas", {0.5, 0.6915});
  auto sizes = c.ints("sample_sizes", {1250, 2500, 5000, 10000, 20000});
  NoiseChannel noise = parse_noise(c.sub("noise"), Noiseless{});
  EstimatorConfig est = parse_estimator(c.sub("estimator"), {});
  int R = replicates_or(ctx, 250);
  require_probabilities(alphas, "alphas");
  require_budgets(sizes, 2, "sample_sizes");
  require(R >= 2, "rmse-cvar needs at least 2 replicates");
  Grid grid = Grid::from_support(g.mu - k * g.sigma, g.mu + k * g.sigma, n);
  std::uint64_t seed = ctx.seed;
  unsigned workers = ctx.workers;
  return [=] {
    PreparedState state = exact_state(discretise(g, grid));
    Outputs out;
    std::ostringstream slopes;
    write_csv_row(slopes, {"alpha", "estimator", "slope", "intercept", "rmse_at_largest"});
    json summary = json::array();
    for (std::size_t a = 0; a < alphas.size(); ++a) {
      double gamma = quantile(g, alphas[a]), tail = 1.0 - alphas[a];
      double truth = analytical_cvar_gaussian(g, alphas[a]);
      SampleEstimator q = [&](std::int64_t S, RngStream& rng) {
        return cvar_qmci(state, gamma, tail, noise, S, est, rng);
      };
      SampleEstimator cl = [&](std::int64_t S, RngStream& rng) { return cvar_cmci(g, gamma, tail, S, rng); };
      // Distinct seeds per alpha and estimator; rows stay keyed by replicate.
      std::uint64_t s_q = RngStream(seed, 2 * a).split(0)(), s_c = RngStream(seed, 2 * a + 1).split(0)();
      std::pair<const char*, RmseResult> runs[2] = {
          {"qmci", rmse_experiment(q, truth, sizes, R, s_q, workers)},
          {"cmci", rmse_experiment(cl, truth, sizes, R, s_c, workers)}};
      for (auto& [name, r] : runs) {
        std::ostringstream os;
        write_csv(os, r);
        out.files.push_back({std::string("rmse_") + name + "_alpha" + label(alphas[a]) + ".csv", os.str()});
        write_csv_row(slopes, {alphas[a], name, r.slope, r.intercept, r.rmse.back()});
        summary.push_back({{"alpha", alphas[a]}, {"estimator", name}, {"slope", r.slope},
                           {"rmse_at_largest", r.rmse.back()}});
      }
    }
    out.files.push_back({"slopes.csv", slopes.str()});
    out.summary = {{"fits", summary}};
    return out;
  };
}

// ---------------------------------------------------------------- QAE ----

Job build_qae_calibrate(Config& c, const Context& ctx) {
  auto thetas = c.nums("thetas", {0.3, 0.6, 1.0});
  auto budgets = c.ints("budgets", {1000, 3000, 10000, 30000, 100000});
  EstimatorConfig est = parse_estimator(c.sub("estimator"), {});
  double tol = positive(c, "slope_tolerance", 0.2);
  int R = replicates_or(ctx, 250);
  for (double t : thetas) require(t > 0.0 && t < M_PI / 2, "thetas must lie in (0, pi/2)");
  require_budgets(budgets, 1, "budgets");
  require(R >= 2, "qae-calibrate needs at least 2 replicates");
  std::uint64_t seed = ctx.seed;
  unsigned workers = ctx.workers;
  return [=] {
    Outputs out;
    std::ostringstream os, sl;
    write_csv_row(os, {"theta", "budget", "rmse", "mean"});
    write_csv_row(sl, {"theta", "slope", "within_tolerance"});
    json fits = json::array();
    bool all_ok = true;
    for (std::size_t j = 0; j < thetas.size(); ++j) {
      double th = thetas[j], a = std::sin(th) * std::sin(th);
      SampleEstimator e = [&](std::int64_t S, RngStream& rng) {
        return run_mle_qae(th, budget_schedule(S, est), Noiseless{}, Noiseless{}, est.grid, rng, S).a_hat;
      };
      auto r = rmse_experiment(e, a, budgets, R, RngStream(seed, j).split(0)(), workers);
      for (std::size_t k = 0; k < budgets.size(); ++k) write_csv_row(os, {th, budgets[k], r.rmse[k], r.mean[k]});
      bool ok = std::abs(r.slope + 1.0) <= tol;
      all_ok = all_ok && ok;
      write_csv_row(sl, {th, r.slope, ok});
      fits.push_back({{"theta", th}, {"slope", r.slope}, {"ok", ok}});
    }
    out.files = {{"calibrate.csv", os.str()}, {"slopes.csv", sl.str()}};
    out.summary = {{"fits", fits}, {"heisenberg_scaling", all_ok}};
    return out;
  };
}

Job build_naqae_bench(Config& c, const Context& ctx) {
  double th = c.num("theta", 0.6);
  double ks = c.num("k_sigma", 0.004);
  double k_lo = c.num("k_lo", ks), k_hi = c.num("k_hi", 2 * ks);
  auto budgets = c.ints("budgets", {3000, 4000, 5000, 6000, 7000});
  EstimatorConfig est = parse_estimator(c.sub("estimator"), EstimatorConfig{.shots_per_round = 10});
  int R = replicates_or(ctx, 100);
  require(th > 0.0 && th < M_PI / 2, "theta must lie in (0, pi/2)");
  require(ks >= 0.0, "k_sigma must be >= 0");
  require(k_lo >= 0.0 && k_hi > k_lo, "need 0 <= k_lo < k_hi");
  require_budgets(budgets, 1, "budgets");
  std::uint64_t seed = ctx.seed;
  unsigned workers = ctx.workers;
  return [=] {
    const double a = std::sin(th) * std::sin(th);
    const std::size_t B = budgets.size(), RR = static_cast<std::size_t>(R);
    struct Cell {
      double plain, na, k_hat;
      bool boundary;
    };
    std::vector<Cell> res(B * RR);
    parallel_for(
        B * RR,
        [&](std::size_t job) {
          std::size_t b = job / RR, i = job % RR;
          RngStream base = RngStream(seed, i).split(b);
          RngStream r1 = base.split(0), r2 = base.split(1);
          auto sched = budget_schedule(budgets[b], est);
          auto p = run_mle_qae(th, sched, Depolarising{ks}, Noiseless{}, est.grid, r1, budgets[b]);
          auto q = run_na_qae(th, sched, Depolarising{ks}, k_lo, k_hi, est.grid, r2, budgets[b]);
          res[job] = {p.a_hat, q.a_hat, q.k_sigma_hat, q.prior_boundary_flag};
        },
        workers);
    Outputs out;
    std::ostringstream os;
    write_csv_row(os, {"budget", "rmse_plain", "rmse_naqae", "mean_k_sigma_hat", "boundary_rate"});
    int wins = 0;
    for (std::size_t b = 0; b < B; ++b) {
      std::vector<double> p, q, kh;
      int flags = 0;
      for (std::size_t i = 0; i < RR; ++i) {
        const auto& cell = res[b * RR + i];
        p.push_back(cell.plain);
        q.push_back(cell.na);
        kh.push_back(cell.k_hat);
        flags += cell.boundary;
      }
      double rp = rmse_of(p, a), rq = rmse_of(q, a);
      wins += rq <= rp;
      write_csv_row(os, {budgets[b], rp, rq, mean_of(kh), static_cast<double>(flags) / R});
    }
    out.files = {{"naqae.csv", os.str()}};
    out.summary = {{"naqae_wins", wins}, {"budgets", B}};
    return out;
  };
}

Job build_gate_budget(Config& c, const Context&) {
  auto prep = c.integer("prep_gates", 66), grover = c.integer("grover_gates", 214);
  double now = c.num("infidelity", 8.830e-4), future = c.num("future_infidelity", 1.766e-5);
  auto ms = c.ints("m_list", {16, 32, 64});
  require(prep >= 0 && grover >= 1, "gate counts must be non-negative");
  require(now >= 0.0 && now < 0.5 && future >= 0.0 && future < 0.5, "infidelities must lie in [0, 0.5)");
  for (auto m : ms) require(m >= 0, "m_list entries must be >= 0");
  return [=] {
    Outputs out;
    std::ostringstream os;
    write_csv_row(os, {"scenario", "m", "total_gates", "expected_errors"});
    for (auto [name, f] : {std::pair<const char*, double>{"current", now}, {"future", future}})
      for (auto m : ms) {
        auto b = gate_budget(m, prep, grover, f);
        write_csv_row(os, {name, m, b.total_gates, b.expected_errors});
      }
    auto dev = k_sigma_from_device(future, grover);
    out.files = {{"gate_budget.csv", os.str()}};
    out.summary = {{"device", {{"infidelity", future}, {"n2", grover}, {"p_coh", dev.p_coh},
                               {"k_sigma", dev.k_sigma}}}};
    return out;
  };
}

// ---------------------------------------------------------------- SBO ----

Job build_sbo_mean_cvar(Config& c, const Context& ctx) {
  PortfolioSpec spec;
  for (Config* a : c.list("assets")) spec.assets.push_back(parse_distribution(*a, Gaussian{}));
  if (spec.assets.empty()) spec.assets = {Gaussian{0.1, 0.05}, Gaussian{0.1, 0.1}};
  spec.lambda = c.num("lambda", spec.lambda);
  spec.alpha = c.num("alpha", spec.alpha);
  spec.w_min = c.num("w_min", spec.w_min);
  spec.w_max = c.num("w_max", spec.w_max);
  spec.samples_per_eval = c.integer("samples_per_eval", spec.samples_per_eval);
  spec.qmci_qubits = parse_qubits(c, spec.qmci_qubits);
  spec.qmci_trunc_sigmas = positive(c, "trunc_sigmas", spec.qmci_trunc_sigmas);
  spec.qmci = parse_estimator(c.sub("estimator"), spec.qmci);
  auto max_evals = c.integer("max_evals", 200);
  std::string mode_s = ctx.mode.empty() ? "cmci" : ctx.mode;
  CvarMode mode;
  if (mode_s == "cmci") mode = CvarMode::kCmci;
  else if (mode_s == "hybrid") mode = CvarMode::kHybrid;
  else if (mode_s == "analytical") mode = CvarMode::kAnalytical;
  else throw ConfigError("sbo-mean-cvar --mode must be cmci, hybrid or analytical");
  try {
    validate(spec);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (mode != CvarMode::kCmci)
    for (const auto& a : spec.assets)
      require(std::holds_alternative<Gaussian>(a), "hybrid and analytical modes need gaussian assets");
  require(max_evals >= 3, "max_evals must be >= 3");
  int R = replicates_or(ctx, 100);
  std::uint64_t seed = ctx.seed;
  unsigned workers = ctx.workers;
  return [=] {
    std::vector<MeanCvarResult> res(static_cast<std::size_t>(R));
    parallel_for(
        res.size(),
        [&](std::size_t i) { res[i] = optimize_mean_cvar(spec, mode, RngStream(seed, i), static_cast<int>(max_evals)); },
        workers);
    Outputs out;
    std::ostringstream os, tr;
    std::vector<std::string> head{"replicate", "f_star", "converged"};
    for (std::size_t j = 0; j < spec.assets.size(); ++j) head.push_back("w" + std::to_string(j + 1));
    write_csv_row(os, head);
    head = {"replicate", "eval", "f"};
    for (std::size_t j = 0; j < spec.assets.size(); ++j) head.push_back("w" + std::to_string(j + 1));
    write_csv_row(tr, head);
    std::vector<double> fs, w1;
    for (std::size_t i = 0; i < res.size(); ++i) {
      std::vector<std::string> row{std::to_string(i), format_double(res[i].f_star), res[i].converged ? "1" : "0"};
      for (double w : res[i].w_star) row.push_back(format_double(w));
      write_csv_row(os, row);
      for (const auto& e : res[i].trace) {
        std::vector<std::string> t{std::to_string(i), std::to_string(e.iter), format_double(e.f)};
        for (double w : e.w) t.push_back(format_double(w));
        write_csv_row(tr, t);
      }
      fs.push_back(res[i].f_star);
      w1.push_back(res[i].w_star[0]);
    }
    out.files = {{"mean_cvar.csv", os.str()}, {"trace.csv", tr.str()}};
    out.summary = {{"mode", to_string(mode)}, {"f_star_mean", mean_of(fs)}, {"f_star_sd", sd_of(fs)},
                   {"w1_mean", mean_of(w1)}, {"w1_sd", sd_of(w1)}};
    return out;
  };
}

Job build_sbo_mean_var(Config& c, const Context& ctx) {
  MeanVarProblem p;
  p.V_T = c.num("V_T", p.V_T);
  p.R_f = c.num("R_f", p.R_f);
  p.lambda = c.num("lambda", p.lambda);
  Distribution rho = parse_distribution(c.sub("rho"), p.rho_dist);
  require(std::holds_alternative<LogNormal>(rho), "rho must be a lognormal distribution");
  p.rho_dist = std::get<LogNormal>(rho);
  double k = positive(c, "trunc_sigmas", 3.0);
  int n = parse_qubits(c, 5);
  p.grid = risk_premium_grid(p.rho_dist, k, n);
  p.noise = parse_noise(c.sub("noise"), Depolarising{0.004});
  p.qmci = parse_estimator(c.sub("estimator"), p.qmci);
  auto budgets = c.ints("budgets", {2000, 3000, 4000, 5000, 6000});
  auto max_evals = c.integer("max_evals", 100);
  MeanVarMode mode;
  try {
    mode = parse_mean_var_mode(ctx.mode.empty() ? "noiseless" : ctx.mode);
    validate(p);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  require(p.lambda > 0.0, "lambda must be > 0");
  require_budgets(budgets, 2, "budgets");
  require(max_evals >= 3, "max_evals must be >= 3");
  int R = replicates_or(ctx, 100);
  std::uint64_t seed = ctx.seed;
  unsigned workers = ctx.workers;
  return [=] {
    const std::size_t B = budgets.size(), RR = static_cast<std::size_t>(R);
    const double w_hat = closed_form_minimum(p);
    const Moments m = exact_moments(p);
    const double U_true = mean_var_utility(p, w_hat, m.I3, m.I4);
    struct Cell {
      MeanVarResult opt;
      double U_at_w_hat;
    };
    std::vector<Cell> res(B * RR);
    parallel_for(
        B * RR,
        [&](std::size_t job) {
          std::size_t b = job / RR, i = job % RR;
          RngStream base = RngStream(seed, i).split(b);
          RngStream r = base.split(1);
          res[job] = {optimize_mean_var(p, budgets[b], mode, base.split(0), static_cast<int>(max_evals)),
                      estimate_utility(p, w_hat, budgets[b], mode, r).U};
        },
        workers);
    Outputs out;
    std::ostringstream os, sm;
    write_csv_row(os, {"budget", "replicate", "omega_star", "U_star", "U_at_closed_form"});
    write_csv_row(sm, {"budget", "omega_mean", "omega_sd", "omega_median", "utility_rmse"});
    json rows = json::array();
    for (std::size_t b = 0; b < B; ++b) {
      std::vector<double> om, us;
      for (std::size_t i = 0; i < RR; ++i) {
        const auto& cell = res[b * RR + i];
        om.push_back(cell.opt.omega_star);
        us.push_back(cell.U_at_w_hat);
        write_csv_row(os, {budgets[b], static_cast<long long>(i), cell.opt.omega_star, cell.opt.U_star,
                           cell.U_at_w_hat});
      }
      std::vector<double> sorted = om;
      std::sort(sorted.begin(), sorted.end());
      double med = sorted.size() % 2 ? sorted[sorted.size() / 2]
                                     : 0.5 * (sorted[sorted.size() / 2 - 1] + sorted[sorted.size() / 2]);
      double ur = rmse_of(us, U_true);
      write_csv_row(sm, {budgets[b], mean_of(om), sd_of(om), med, ur});
      rows.push_back({{"budget", budgets[b]}, {"omega_mean", mean_of(om)}, {"omega_sd", sd_of(om)},
                      {"utility_rmse", ur}});
    }
    out.files = {{"mean_var.csv", os.str()}, {"summary.csv", sm.str()}};
    out.summary = {{"mode", to_string(mode)}, {"closed_form_omega", w_hat},
                   {"grid_omega", discrete_closed_form_minimum(p).value_or(std::nan(""))},
                   {"budgets", rows}};
    return out;
  };
}

// ------------------------------------------------------------- driver ----

json read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
}

std::uint64_t env_seed() {
  const char* s = std::getenv("QMCI_SEED");
  if (!s || !*s) return 42;
  try {
    std::size_t used = 0;
    unsigned long long v = std::stoull(s, &used);
    if (used != std::string(s).size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(std::string("QMCI_SEED is not an unsigned integer: '") + s + "'");
  }
}

void write_file(const std::filesystem::path& p, const std::string& contents) {
  std::ofstream f(p, std::ios::binary);
  f << contents;
  if (!f) throw std::runtime_error("failed to write " + p.string());
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<std::string, std::pair<Builder, std::string>> commands = {
      {"audit-errors", {build_audit_errors, "Error decomposition table and scaled-error sweep"}},
      {"qubit-requirement", {build_qubit_requirement, "Worst scaled CVaR error against qubit count"}},
      {"levy-tradeoff", {build_levy_tradeoff, "Truncation against discretisation for a Levy law"}},
      {"estimate-var", {build_estimate_var, "VaR by bisection, with the per-step trace"}},
      {"estimate-cvar", {build_estimate_cvar, "CVaR by QMCI and classical estimators"}},
      {"rmse-cvar", {build_rmse_cvar, "CVaR RMSE against sample count with log-log slopes"}},
      {"qae-calibrate", {build_qae_calibrate, "Noiseless MLE-QAE RMSE slope check"}},
      {"naqae-bench", {build_naqae_bench, "Noise-aware against plain QAE under depolarising noise"}},
      {"sbo-mean-cvar", {build_sbo_mean_cvar, "Mean-CVaR portfolio optimisation"}},
      {"sbo-mean-var", {build_sbo_mean_var, "Mean-variance allocation with estimated moments"}},
      {"gate-budget", {build_gate_budget, "Gate counts and expected errors per Grover depth"}},
  };

  CLI::App app{"qmci_lab: quantum Monte Carlo integration experiments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("qmci_lab ") + kVersion);
  std::string config_path, output_dir = ".", mode;
  std::uint64_t seed = 0;
  int replicates = 0;
  unsigned workers = 0;
  for (const auto& [name, entry] : commands) {
    CLI::App* s = app.add_subcommand(name, entry.second);
    s->add_option("--config", config_path, "JSON experiment config")->required();
    s->add_option("--seed", seed, "Master seed (default: config, then $QMCI_SEED, then 42)");
    s->add_option("--replicates", replicates, "Replicate count override")->check(CLI::PositiveNumber);
    s->add_option("--output", output_dir, "Output directory");
    s->add_option("--mode", mode, "Estimator or noise mode");
    s->add_option("--workers", workers, "Worker threads (0: all cores)");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  CLI::App* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();

  Job job;
  json raw;
  Context ctx;
  try {
    raw = read_config(config_path);
    Config cfg(raw, "");
    std::uint64_t def_seed = env_seed();
    auto cfg_seed = cfg.integer("seed", static_cast<std::int64_t>(def_seed));
    require(cfg_seed >= 0, "seed must be >= 0");
    ctx.seed = sub->get_option("--seed")->count() ? seed : static_cast<std::uint64_t>(cfg_seed);
    auto cfg_reps = cfg.integer("replicates", 0);
    require(cfg_reps >= 0, "replicates must be >= 0");
    ctx.replicates = replicates > 0 ? replicates : static_cast<int>(cfg_reps);
    ctx.mode = !mode.empty() ? mode : cfg.str("mode", "");
    ctx.workers = workers;
    if (!sub->get_option("--output")->count()) output_dir = cfg.str("output_dir", output_dir);
    cfg.mark("output_dir");
    job = commands.at(name).first(cfg, ctx);
    cfg.check_unused();
  } catch (const std::exception& e) {
    std::cerr << "qmci_lab " << name << ": config error: " << e.what() << '\n';
    return 1;
  }

  Outputs out;
  try {
    out = job();
  } catch (const std::exception& e) {
    std::cerr << "qmci_lab " << name << ": runtime error: " << e.what() << '\n';
    return 2;
  }

  try {
    std::filesystem::path dir(output_dir);
    std::filesystem::create_directories(dir);
    json files = json::array();
    for (const auto& [fname, contents] : out.files) {
      write_file(dir / fname, contents);
      files.push_back({{"file", fname}, {"fnv1a64", hex64(fnv1a64(contents))}});
    }
    const std::string canonical = raw.dump();
    json manifest = {
        {"tool", "qmci_lab"},
        {"version", kVersion},
        {"subcommand", name},
        {"seed", ctx.seed},
        {"replicates", ctx.replicates},
        {"mode", ctx.mode},
        {"config", raw},
        {"config_fnv1a64", hex64(fnv1a64(canonical))},
        {"libraries",
         {{"boost", BOOST_LIB_VERSION},
          {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
          {"cli11", CLI11_VERSION}}},
        {"outputs", files},
        {"summary", out.summary},
    };
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");
    std::cout << out.summary.dump(2) << '\n';
  } catch (const std::exception& e) {
    std::cerr << "qmci_lab " << name << ": runtime error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
