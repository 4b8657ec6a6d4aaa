#pragma once

#include "ringform/csv.hpp"
#include "ringform/estimation.hpp"
#include "ringform/formation.hpp"
#include "ringform/harness.hpp"
#include "ringform/spectral.hpp"
#include "ringform/topology.hpp"

#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace ringform::cli {

inline constexpr const char* kVersion = "1.0.0";

enum class Mode { Estimate, Form, Pipeline, Sweep, Spectral };

inline const char* to_string(Mode m) {
  switch (m) {
    case Mode::Estimate: return "estimate";
    case Mode::Form: return "form";
    case Mode::Pipeline: return "pipeline";
    case Mode::Sweep: return "sweep";
    case Mode::Spectral: return "spectral";
  }
  return "?";
}

inline std::optional<Mode> parse_mode(const std::string& s) {
  for (Mode m : {Mode::Estimate, Mode::Form, Mode::Pipeline, Mode::Sweep, Mode::Spectral})
    if (s == to_string(m)) return m;
  return std::nullopt;
}

enum ExitCode : int { kOk = 0, kInternal = 1, kConfigError = 2, kDiverged = 3, kNotConverged = 4 };

/// Validation failure; `path` is the JSON field path ("/formation/sigma").
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& path, const std::string& msg)
      : std::runtime_error(path + ": " + msg), path_(path) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

struct EstimationSection {
  Strategy strategy = Strategy::S1;
  double alpha = 0.5;
  double dt = 0.01;
  std::size_t window = 50;
  std::size_t max_steps = 2'000'000;
  Vec2 excitation = Vec2(1.0, 0.0);
  std::optional<std::size_t> n_prime;  // single-chain estimate when no topology is given
};

struct FormationSection {
  double alpha = 0.5;
  double dt = 0.05;
  int sigma = 1;
  double horizon = 150.0;  // seconds
  double tolerance = 1e-2;
};

struct SweepSection {
  std::size_t n_min = 5;
  std::size_t n_max = 30;
  std::size_t reps = 5;
  double dt = 0.01;
  double safety = 0.9;
  double sensitivity_beta = 0.0025;
  bool simulate_sensitivity = true;
  std::size_t window = 0;  // 0: one e-folding time of the slowest mode per chain
};

struct SpectralSection {
  std::size_t n_prime = 19;
  double alpha = 0.5;
  double dt = 0.01;
};

struct RunConfig {
  Mode mode = Mode::Pipeline;
  std::optional<std::size_t> n_total;
  std::vector<std::size_t> vertex_set;
  std::vector<Vec2> r_star;
  EstimationSection estimation;
  FormationSection formation;
  SweepSection sweep;
  SpectralSection spectral;
  std::uint64_t seed = 1;
  double initial_box = 5.0;  // half-width of the uniform placement box, meters
  std::string output_dir = "out";
  std::size_t stride = 1;
};

namespace detail {

using nlohmann::json;

inline void reject_unknown(const json& obj, const std::string& path, std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(path.empty() ? "/" : path, "expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, _] : obj.items())
    if (!ok.count(key)) throw ConfigError(path + "/" + key, "unknown field");
}

template <typename T>
T get(const json& obj, const std::string& path, const char* key, T fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  const std::string p = path + "/" + key;
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) throw ConfigError(p, "expected a boolean");
    return v.get<bool>();
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) throw ConfigError(p, "expected a string");
    return v.get<std::string>();
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) throw ConfigError(p, "expected an integer");
    if constexpr (std::is_unsigned_v<T>) {
      if (v.is_number_unsigned()) return v.get<T>();
      if (v.get<long long>() < 0) throw ConfigError(p, "must be non-negative");
    }
    return v.get<T>();
  } else {
    if (!v.is_number()) throw ConfigError(p, "expected a number");
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw ConfigError(p, "must be finite");
    return d;
  }
}

inline Vec2 get_vec2(const json& v, const std::string& path) {
  if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
    throw ConfigError(path, "expected a [x, y] pair of numbers");
  return Vec2(v[0].get<double>(), v[1].get<double>());
}

inline Strategy get_strategy(const json& obj, const std::string& path, Strategy fallback) {
  if (!obj.contains("strategy")) return fallback;
  const auto s = get<std::string>(obj, path, "strategy", "");
  if (s == "S1") return Strategy::S1;
  if (s == "S2") return Strategy::S2;
  throw ConfigError(path + "/strategy", "must be \"S1\" or \"S2\"");
}

}  // namespace detail

/// Parses and validates a config tree. `mode_override` (the CLI subcommand) wins
/// over a missing "mode"; a conflicting "mode" is an error.
inline RunConfig parse_config(const nlohmann::json& root, std::optional<Mode> mode_override = std::nullopt) {
  using detail::get;
  detail::reject_unknown(root, "", {"mode", "topology", "r_star", "estimation", "formation", "sweep", "spectral",
                                    "seed", "initial_box", "output_dir", "stride"});
  RunConfig c;
  if (root.contains("mode")) {
    const auto m = parse_mode(get<std::string>(root, "", "mode", ""));
    if (!m) throw ConfigError("/mode", "must be one of estimate|form|pipeline|sweep|spectral");
    if (mode_override && *mode_override != *m)
      throw ConfigError("/mode", std::string("config says ") + to_string(*m) + ", command line says " +
                                     to_string(*mode_override));
    c.mode = *m;
  } else if (mode_override) {
    c.mode = *mode_override;
  } else {
    throw ConfigError("/mode", "missing (give it in the config or as a subcommand)");
  }

  if (root.contains("topology")) {
    const auto& t = root.at("topology");
    detail::reject_unknown(t, "/topology", {"n_total", "vertex_set"});
    if (!t.contains("n_total")) throw ConfigError("/topology/n_total", "missing");
    c.n_total = get<std::size_t>(t, "/topology", "n_total", 0);
    if (t.contains("vertex_set")) {
      const auto& vs = t.at("vertex_set");
      if (!vs.is_array()) throw ConfigError("/topology/vertex_set", "expected an array of indices");
      for (std::size_t i = 0; i < vs.size(); ++i) {
        if (!vs[i].is_number_integer() || vs[i].get<long long>() < 0)
          throw ConfigError("/topology/vertex_set/" + std::to_string(i), "expected a non-negative integer");
        c.vertex_set.push_back(vs[i].get<std::size_t>());
      }
    }
  }
  if (root.contains("r_star")) {
    const auto& rs = root.at("r_star");
    if (!rs.is_array()) throw ConfigError("/r_star", "expected an array of [x, y] pairs");
    for (std::size_t i = 0; i < rs.size(); ++i) c.r_star.push_back(detail::get_vec2(rs[i], "/r_star/" + std::to_string(i)));
  }
  if (root.contains("estimation")) {
    const auto& e = root.at("estimation");
    detail::reject_unknown(e, "/estimation", {"strategy", "alpha", "dt", "window", "max_steps", "excitation", "n_prime"});
    c.estimation.strategy = detail::get_strategy(e, "/estimation", c.estimation.strategy);
    c.estimation.alpha = get(e, "/estimation", "alpha", c.estimation.alpha);
    c.estimation.dt = get(e, "/estimation", "dt", c.estimation.dt);
    c.estimation.window = get(e, "/estimation", "window", c.estimation.window);
    c.estimation.max_steps = get(e, "/estimation", "max_steps", c.estimation.max_steps);
    if (e.contains("excitation")) c.estimation.excitation = detail::get_vec2(e.at("excitation"), "/estimation/excitation");
    if (e.contains("n_prime")) c.estimation.n_prime = get<std::size_t>(e, "/estimation", "n_prime", 0);
  }
  if (root.contains("formation")) {
    const auto& f = root.at("formation");
    detail::reject_unknown(f, "/formation", {"alpha", "dt", "sigma", "horizon", "tolerance"});
    c.formation.alpha = get(f, "/formation", "alpha", c.formation.alpha);
    c.formation.dt = get(f, "/formation", "dt", c.formation.dt);
    c.formation.sigma = get(f, "/formation", "sigma", c.formation.sigma);
    c.formation.horizon = get(f, "/formation", "horizon", c.formation.horizon);
    c.formation.tolerance = get(f, "/formation", "tolerance", c.formation.tolerance);
  }
  if (root.contains("sweep")) {
    const auto& s = root.at("sweep");
    detail::reject_unknown(s, "/sweep", {"n_min", "n_max", "reps", "dt", "safety", "sensitivity_beta",
                                         "simulate_sensitivity", "window"});
    c.sweep.n_min = get(s, "/sweep", "n_min", c.sweep.n_min);
    c.sweep.n_max = get(s, "/sweep", "n_max", c.sweep.n_max);
    c.sweep.reps = get(s, "/sweep", "reps", c.sweep.reps);
    c.sweep.dt = get(s, "/sweep", "dt", c.sweep.dt);
    c.sweep.safety = get(s, "/sweep", "safety", c.sweep.safety);
    c.sweep.sensitivity_beta = get(s, "/sweep", "sensitivity_beta", c.sweep.sensitivity_beta);
    c.sweep.simulate_sensitivity = get(s, "/sweep", "simulate_sensitivity", c.sweep.simulate_sensitivity);
    c.sweep.window = get(s, "/sweep", "window", c.sweep.window);
  }
  if (root.contains("spectral")) {
    const auto& s = root.at("spectral");
    detail::reject_unknown(s, "/spectral", {"n_prime", "alpha", "dt"});
    c.spectral.n_prime = get(s, "/spectral", "n_prime", c.spectral.n_prime);
    c.spectral.alpha = get(s, "/spectral", "alpha", c.spectral.alpha);
    c.spectral.dt = get(s, "/spectral", "dt", c.spectral.dt);
  }
  c.seed = get(root, "", "seed", c.seed);
  c.initial_box = get(root, "", "initial_box", c.initial_box);
  c.output_dir = get(root, "", "output_dir", c.output_dir);
  c.stride = get(root, "", "stride", c.stride);
  return c;
}

/// Domain checks that need the whole config; every failure names its field path.
inline void validate(const RunConfig& c) {
  auto check = [](bool ok, const char* path, const std::string& msg) {
    if (!ok) throw ConfigError(path, msg);
  };
  check(c.stride >= 1, "/stride", "must be at least 1");
  check(c.initial_box >= 0.0, "/initial_box", "must be non-negative");
  check(!c.output_dir.empty(), "/output_dir", "must not be empty");

  const bool needs_estimation = c.mode == Mode::Estimate || c.mode == Mode::Pipeline;
  const bool needs_formation = c.mode == Mode::Form || c.mode == Mode::Pipeline;
  const bool needs_topology = needs_formation || (c.mode == Mode::Estimate && !c.estimation.n_prime);

  if (needs_estimation) {
    check(c.estimation.alpha > 0.0, "/estimation/alpha", "must be positive");
    check(c.estimation.dt > 0.0, "/estimation/dt", "must be positive");
    const double beta = c.estimation.alpha * c.estimation.dt / 2.0;
    check(beta < 1.0, "/estimation", "alpha*dt/2 must be below 1 for the readout formulas");
    check(c.estimation.window >= 2, "/estimation/window", "must be at least 2");
    check(c.estimation.max_steps > c.estimation.window, "/estimation/max_steps", "must exceed the stop window");
    check(c.estimation.excitation.norm() > 0.0, "/estimation/excitation", "must be nonzero");
    if (c.estimation.n_prime) check(*c.estimation.n_prime >= 1, "/estimation/n_prime", "must be at least 1");
  }
  if (needs_formation) {
    check(c.formation.alpha > 0.0, "/formation/alpha", "must be positive");
    check(c.formation.dt > 0.0, "/formation/dt", "must be positive");
    check(c.formation.sigma == 1 || c.formation.sigma == 2, "/formation/sigma", "must be 1 or 2");
    check(c.formation.horizon > 0.0, "/formation/horizon", "must be positive");
    check(c.formation.tolerance > 0.0, "/formation/tolerance", "must be positive");
  }
  if (needs_topology) {
    check(c.n_total.has_value(), "/topology/n_total", "required for this mode");
    check(*c.n_total >= 3, "/topology/n_total", "ring needs at least 3 robots");
    try {
      validate_vertex_set(RingTopology(*c.n_total), c.vertex_set);
    } catch (const InvalidArgument& e) {
      throw ConfigError("/topology/vertex_set", e.what());
    }
  }
  if (needs_formation) {
    check(c.r_star.size() == c.vertex_set.size(), "/r_star", "needs one [x, y] entry per vertex robot");
    PolygonSpec spec{c.vertex_set, c.r_star};
    check(validate_polygon_closure(spec), "/r_star", "polygon does not close: displacements must sum to zero");
  }
  if (c.mode == Mode::Sweep) {
    check(c.sweep.n_min >= 2, "/sweep/n_min", "must be at least 2");
    check(c.sweep.n_max >= c.sweep.n_min, "/sweep/n_max", "must be >= n_min");
    check(c.sweep.reps >= 1, "/sweep/reps", "must be at least 1");
    check(c.sweep.window == 0 || c.sweep.window >= 2, "/sweep/window", "must be 0 (automatic) or at least 2");
    check(c.sweep.dt > 0.0, "/sweep/dt", "must be positive");
    check(c.sweep.safety > 0.0 && c.sweep.safety < 1.0, "/sweep/safety", "must lie in (0, 1)");
    check(c.sweep.sensitivity_beta > 0.0 && c.sweep.sensitivity_beta < 1.0, "/sweep/sensitivity_beta",
          "must lie in (0, 1)");
  }
  if (c.mode == Mode::Spectral) {
    check(c.spectral.n_prime >= 1, "/spectral/n_prime", "must be at least 1");
    check(c.spectral.alpha > 0.0, "/spectral/alpha", "must be positive");
    check(c.spectral.dt > 0.0, "/spectral/dt", "must be positive");
  }
}

inline RunConfig load_config(const std::string& path, std::optional<Mode> mode_override = std::nullopt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path, "cannot open config file");
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path, std::string("parse error: ") + e.what());
  }
  RunConfig c = parse_config(root, mode_override);
  validate(c);
  return c;
}

/// Fully resolved config (defaults applied); parse_config(to_json(c)) reproduces c.
inline nlohmann::json to_json(const RunConfig& c) {
  using nlohmann::json;
  auto vec = [](const Vec2& v) { return json::array({v.x(), v.y()}); };
  json j;
  j["mode"] = to_string(c.mode);
  if (c.n_total) {
    j["topology"]["n_total"] = *c.n_total;
    j["topology"]["vertex_set"] = c.vertex_set;
  }
  if (!c.r_star.empty()) {
    j["r_star"] = json::array();
    for (const auto& r : c.r_star) j["r_star"].push_back(vec(r));
  }
  json e;
  e["strategy"] = ringform::to_string(c.estimation.strategy);
  e["alpha"] = c.estimation.alpha;
  e["dt"] = c.estimation.dt;
  e["window"] = c.estimation.window;
  e["max_steps"] = c.estimation.max_steps;
  e["excitation"] = vec(c.estimation.excitation);
  if (c.estimation.n_prime) e["n_prime"] = *c.estimation.n_prime;
  j["estimation"] = e;
  j["formation"] = {{"alpha", c.formation.alpha},
                    {"dt", c.formation.dt},
                    {"sigma", c.formation.sigma},
                    {"horizon", c.formation.horizon},
                    {"tolerance", c.formation.tolerance}};
  j["sweep"] = {{"n_min", c.sweep.n_min},
                {"n_max", c.sweep.n_max},
                {"reps", c.sweep.reps},
                {"dt", c.sweep.dt},
                {"safety", c.sweep.safety},
                {"sensitivity_beta", c.sweep.sensitivity_beta},
                {"simulate_sensitivity", c.sweep.simulate_sensitivity},
                {"window", c.sweep.window}};
  j["spectral"] = {{"n_prime", c.spectral.n_prime}, {"alpha", c.spectral.alpha}, {"dt", c.spectral.dt}};
  j["seed"] = c.seed;
  j["initial_box"] = c.initial_box;
  j["output_dir"] = c.output_dir;
  j["stride"] = c.stride;
  return j;
}

// ---------------------------------------------------------------------------
// Output files
// ---------------------------------------------------------------------------

inline constexpr const char* kEstimateHeader = "step,chain_id,ratio,estimate_raw,estimate_rounded,converged";
inline constexpr const char* kTraceHeader = "step,time,robot_id,px,py,vx,vy";
inline constexpr const char* kErrorsHeader = "step,time,edge_id,error";
inline constexpr const char* kSweepHeader = "n,strategy,reps,mean_steps,all_correct";
inline constexpr const char* kSensitivityHeader = "n_prime,ratio_s1_closed,ratio_s2_closed,ratio_s1_sim,ratio_s2_sim";

/// Rows ordered by step, then chain id.
inline void write_estimates(const std::filesystem::path& path, const std::vector<EstimateTrace>& traces) {
  csv::Writer w(path.string(), kEstimateHeader);
  std::vector<std::size_t> cursor(traces.size(), 0);
  for (bool more = true; more;) {
    more = false;
    std::size_t step = SIZE_MAX;
    for (std::size_t c = 0; c < traces.size(); ++c)
      if (cursor[c] < traces[c].records.size()) step = std::min(step, traces[c].records[cursor[c]].k);
    if (step == SIZE_MAX) break;
    for (std::size_t c = 0; c < traces.size(); ++c) {
      if (cursor[c] >= traces[c].records.size() || traces[c].records[cursor[c]].k != step) continue;
      const auto& r = traces[c].records[cursor[c]++];
      w.row({csv::num(r.k), csv::num(c), csv::num(r.ratio), csv::num(r.raw), csv::num(r.rounded),
             r.converged ? "1" : "0"});
      more = true;
    }
  }
}

/// Streams formation rows as they are produced so an aborted run leaves valid files.
class FormationWriter {
 public:
  FormationWriter(const std::filesystem::path& dir, std::size_t stride)
      : trace_((dir / "trace.csv").string(), kTraceHeader), errors_((dir / "errors.csv").string(), kErrorsHeader),
        stride_(stride) {}

  void on_step(std::size_t k, double time, const SwarmState& s, const std::vector<double>& e, bool last) {
    const std::string ks = csv::num(k);
    const std::string ts = csv::num(time);
    if (k % stride_ == 0 || last) {
      for (std::size_t i = 0; i < s.size(); ++i) {
        trace_.row({ks, ts, csv::num(i), csv::num(s.positions[i].x()), csv::num(s.positions[i].y()),
                    csv::num(s.velocities[i].x()), csv::num(s.velocities[i].y())});
      }
    }
    for (std::size_t i = 0; i < e.size(); ++i) errors_.row({ks, ts, csv::num(i), csv::num(e[i])});
  }

 private:
  csv::Writer trace_;
  csv::Writer errors_;
  std::size_t stride_;
};

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
}

inline nlohmann::json spectral_report(std::size_t n_prime, double alpha, double dt) {
  const EstimationParams p(alpha, dt);
  nlohmann::json j;
  j["n_prime"] = n_prime;
  j["alpha"] = alpha;
  j["dt"] = dt;
  j["beta"] = p.beta();
  j["bound_s1"] = stability_bound(n_prime, Strategy::S1);
  j["bound_s2"] = stability_bound(n_prime, Strategy::S2);
  j["rho_A"] = spectral_radius(build_A(n_prime, p).dense);
  j["rho_Ar"] = spectral_radius(build_Ar(n_prime, p).dense);
  // A_f needs a follower plus the terminal vertex.
  j["rho_Af"] = n_prime >= 2 ? nlohmann::json(spectral_radius(build_Af(n_prime, p).dense)) : nlohmann::json(nullptr);
  j["satisfies_s1"] = satisfies_bound(n_prime, p, Strategy::S1);
  j["satisfies_s2"] = satisfies_bound(n_prime, p, Strategy::S2);
  return j;
}

struct RunOutcome {
  int exit_code = kOk;
  std::string message;
  nlohmann::json summary;
};

namespace detail {

inline EstimatorConfig estimator_config(const RunConfig& c) {
  EstimatorConfig e;
  e.strategy = c.estimation.strategy;
  e.params = EstimationParams(c.estimation.alpha, c.estimation.dt);
  e.window = c.estimation.window;
  e.max_steps = c.estimation.max_steps;
  e.excitation_init = c.estimation.excitation;
  return e;
}

inline FormationConfig formation_config(const RunConfig& c) {
  const RingTopology ring(*c.n_total);
  FormationConfig f = FormationConfig::make(ring, PolygonSpec{c.vertex_set, c.r_star},
                                            EstimationParams(c.formation.alpha, c.formation.dt), c.formation.sigma);
  f.tolerance = c.formation.tolerance;
  f.stride = c.stride;
  return f;
}

inline std::size_t horizon_steps(const RunConfig& c) {
  return static_cast<std::size_t>(std::llround(c.formation.horizon / c.formation.dt));
}

inline nlohmann::json estimate_summary(const std::vector<EstimateTrace>& traces) {
  nlohmann::json arr = nlohmann::json::array();
  for (std::size_t i = 0; i < traces.size(); ++i) {
    arr.push_back({{"chain_id", i},
                   {"converged", traces[i].converged},
                   {"estimate", traces[i].estimate},
                   {"steps_to_convergence", traces[i].steps_to_convergence},
                   {"first_stable_step", traces[i].first_stable_step}});
  }
  return arr;
}

/// Streams a formation run into trace.csv / errors.csv.
inline FormationTrace run_formation_streaming(const SwarmState& initial, const FormationConfig& f,
                                              std::size_t horizon, const std::filesystem::path& dir) {
  FormationWriter writer(dir, f.stride);
  f.validate();
  const FormationLaw law(f);
  SwarmState state = initial;
  FormationTrace trace;
  const double dt = f.params.dt;
  for (std::size_t k = 0;; ++k) {
    auto e = relative_distance_errors(state, f.spec);
    writer.on_step(k, static_cast<double>(k) * dt, state, e, k == horizon);
    const double worst = *std::max_element(e.begin(), e.end());
    if (worst < f.tolerance) {
      if (!trace.first_within_tolerance) trace.first_within_tolerance = k;
    } else {
      trace.first_within_tolerance.reset();
    }
    trace.errors.push_back({k, static_cast<double>(k) * dt, std::move(e)});
    if (k == horizon) break;
    state = law(state);
  }
  trace.converged = trace.final_max_error() < f.tolerance;
  trace.final_state = std::move(state);
  return trace;
}

inline nlohmann::json formation_summary(const FormationTrace& t, const FormationConfig& f) {
  double vmax = 0.0;
  for (auto s : f.spec.vertex_set) vmax = std::max(vmax, t.final_state.velocities[s].norm());
  nlohmann::json j;
  j["converged"] = t.converged;
  j["final_errors"] = t.errors.back().errors;
  j["max_vertex_speed"] = vmax;
  j["max_spacing_deviation"] = spacing_deviation(t.final_state, f);
  j["first_within_tolerance_step"] =
      t.first_within_tolerance ? nlohmann::json(*t.first_within_tolerance) : nlohmann::json(nullptr);
  return j;
}

}  // namespace detail

/// Runs the configured mode and writes its artifacts plus manifest.json and
/// resolved_config.json into config.output_dir.
inline RunOutcome execute(const RunConfig& config) {
  namespace fs = std::filesystem;
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path dir(config.output_dir);
  fs::create_directories(dir);
  const nlohmann::json resolved = to_json(config);
  write_json(dir / "resolved_config.json", resolved);

  RunOutcome out;
  try {
    switch (config.mode) {
      case Mode::Spectral: {
        const auto rep = spectral_report(config.spectral.n_prime, config.spectral.alpha, config.spectral.dt);
        write_json(dir / "spectral.json", rep);
        out.summary = rep;
        break;
      }
      case Mode::Estimate: {
        const auto ec = detail::estimator_config(config);
        std::vector<EstimateTrace> traces;
        if (config.estimation.n_prime) {
          traces.push_back(run_estimation(*config.estimation.n_prime, ec));
        } else {
          const RingTopology ring(*config.n_total);
          const SwarmState swarm = random_swarm(ring.size(), config.seed, config.initial_box);
          for (const auto& seg : cut_ring(ring, PolygonSpec{config.vertex_set, {}}))
            traces.push_back(run_estimation(seg.cardinality, ec, chain_frame_positions(swarm, seg)));
        }
        write_estimates(dir / "estimate.csv", traces);
        out.summary["estimates"] = detail::estimate_summary(traces);
        for (std::size_t i = 0; i < traces.size(); ++i) {
          if (!traces[i].converged) {
            out.exit_code = kNotConverged;
            out.message = "chain " + std::to_string(i) + " did not converge within max_steps";
          }
        }
        break;
      }
      case Mode::Form: {
        const auto f = detail::formation_config(config);
        const SwarmState swarm = random_swarm(*config.n_total, config.seed, config.initial_box);
        const auto trace = detail::run_formation_streaming(swarm, f, detail::horizon_steps(config), dir);
        out.summary["formation"] = detail::formation_summary(trace, f);
        if (!trace.converged) {
          out.exit_code = kNotConverged;
          out.message = "formation error above tolerance at the horizon";
        }
        break;
      }
      case Mode::Pipeline: {
        const RingTopology ring(*config.n_total);
        const PolygonSpec spec{config.vertex_set, config.r_star};
        const auto ec = detail::estimator_config(config);
        const SwarmState swarm = random_swarm(ring.size(), config.seed, config.initial_box);
        const auto segs = cut_ring(ring, spec);
        std::vector<EstimateTrace> traces;
        for (const auto& seg : segs) traces.push_back(run_estimation(seg.cardinality, ec, chain_frame_positions(swarm, seg)));
        write_estimates(dir / "estimate.csv", traces);
        out.summary["estimates"] = detail::estimate_summary(traces);
        for (std::size_t i = 0; i < segs.size(); ++i) {
          if (!traces[i].converged || traces[i].estimate != static_cast<long long>(segs[i].cardinality)) {
            out.exit_code = kNotConverged;
            out.message = "segment " + std::to_string(i) + " estimate " + std::to_string(traces[i].estimate) +
                          (traces[i].converged ? " does not match the ring cut" : " did not converge");
            break;
          }
        }
        if (out.exit_code != kOk) break;
        auto f = detail::formation_config(config);
        f.anchor_position = swarm.positions[spec.vertex_set[0]];
        const auto trace = detail::run_formation_streaming(swarm, f, detail::horizon_steps(config), dir);
        out.summary["formation"] = detail::formation_summary(trace, f);
        if (!trace.converged) {
          out.exit_code = kNotConverged;
          out.message = "formation error above tolerance at the horizon";
        }
        break;
      }
      case Mode::Sweep: {
        SweepParams sp;
        sp.n_min = config.sweep.n_min;
        sp.n_max = config.sweep.n_max;
        sp.reps = config.sweep.reps;
        sp.dt = config.sweep.dt;
        sp.safety = config.sweep.safety;
        sp.half_width = config.initial_box;
        sp.seed = config.seed;
        sp.window = config.sweep.window;
        sp.max_steps = config.estimation.max_steps;
        const auto sweep = sweep_convergence(sp);
        {
          csv::Writer w((dir / "sweep.csv").string(), kSweepHeader);
          for (const auto& r : sweep.rows)
            w.row({csv::num(r.n_robots), ringform::to_string(r.strategy), csv::num(r.reps), csv::num(r.mean_steps),
                   r.all_correct ? "1" : "0"});
        }
        const std::size_t np_min = std::max<std::size_t>(1, config.sweep.n_min - 1);
        const auto curve = sensitivity_curves(np_min, config.sweep.n_max - 1, config.sweep.sensitivity_beta,
                                              config.sweep.simulate_sensitivity);
        {
          csv::Writer w((dir / "sensitivity.csv").string(), kSensitivityHeader);
          for (const auto& r : curve.rows)
            w.row({csv::num(r.n_prime), csv::num(r.ratio_s1_closed), csv::num(r.ratio_s2_closed),
                   csv::num(r.ratio_s1_sim), csv::num(r.ratio_s2_sim)});
        }
        nlohmann::json failing = nlohmann::json::array();
        for (const auto& r : sweep.rows)
          for (auto s : r.failing_seeds)
            failing.push_back({{"n", r.n_robots}, {"strategy", ringform::to_string(r.strategy)}, {"seed", s}});
        nlohmann::json rows = nlohmann::json::array();
        for (const auto& r : sweep.rows)
          rows.push_back({{"n", r.n_robots},
                          {"strategy", ringform::to_string(r.strategy)},
                          {"mean_steps", r.mean_steps},
                          {"mean_seconds", r.mean_seconds},
                          {"mean_first_stable_steps", r.mean_first_stable_steps}});
        out.summary["rows"] = rows;
        out.summary["alpha"] = sweep.params.alpha;
        out.summary["dt"] = sweep.params.dt;
        out.summary["all_correct"] = sweep.all_correct();
        out.summary["failing"] = failing;
        out.summary["total_variation_s1"] = curve.total_variation_s1;
        out.summary["total_variation_s2"] = curve.total_variation_s2;
        out.summary["more_sensitive"] = ringform::to_string(curve.more_sensitive());
        if (!sweep.all_correct()) {
          out.exit_code = kNotConverged;
          out.message = "sweep produced incorrect or non-converged estimates";
        }
        break;
      }
    }
  } catch (const DivergenceError& e) {
    out.exit_code = kDiverged;
    out.message = e.what();
  }

  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  nlohmann::json manifest;
  manifest["tool"] = "ringform";
  manifest["version"] = kVersion;
  manifest["mode"] = to_string(config.mode);
  manifest["seed"] = config.seed;
  manifest["resolved_config"] = resolved;
  manifest["exit_code"] = out.exit_code;
  manifest["message"] = out.message;
  manifest["summary"] = out.summary;
  manifest["wall_time_seconds"] = wall;
  write_json(dir / "manifest.json", manifest);
  return out;
}

}  // namespace ringform::cli
