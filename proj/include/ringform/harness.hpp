#pragma once

#include "ringform/estimation.hpp"
#include "ringform/formation.hpp"
#include "ringform/rng.hpp"
#include "ringform/spectral.hpp"
#include "ringform/topology.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace ringform {

// ---------------------------------------------------------------------------
// Convergence-time sweep
// ---------------------------------------------------------------------------

struct SweepParams {
  std::size_t n_min = 5;  // robots per chain, anchor included (n' = n - 1)
  std::size_t n_max = 30;
  std::size_t reps = 5;
  double dt = 0.01;
  double safety = 0.9;  // alpha*dt = safety * min(bound_s1, bound_s2) at n_max
  double half_width = 5.0;
  std::uint64_t seed = 1;
  std::size_t window = 0;  // 0: settling_window() of each chain
  std::size_t max_steps = 2'000'000;
  unsigned threads = 0;  // 0: RINGFORM_THREADS or hardware concurrency

  EstimationParams params() const {
    const std::size_t np = n_max - 1;
    const double adt = safety * std::min(stability_bound(np, Strategy::S1), stability_bound(np, Strategy::S2));
    return EstimationParams(adt / dt, dt);
  }
};

struct SweepCell {
  std::size_t n_robots = 0;
  Strategy strategy = Strategy::S1;
  std::size_t rep = 0;
  std::uint64_t seed = 0;
  bool converged = false;
  long long estimate = 0;
  std::size_t steps = 0;
  std::size_t first_stable_step = 0;
};

struct SweepRow {
  std::size_t n_robots = 0;
  Strategy strategy = Strategy::S1;
  std::size_t reps = 0;
  double mean_steps = 0.0;
  double mean_seconds = 0.0;
  double mean_first_stable_steps = 0.0;
  bool all_correct = true;
  std::vector<std::uint64_t> failing_seeds;
};

struct SweepResult {
  EstimationParams params;
  std::vector<SweepRow> rows;  // sorted by (n, strategy)
  std::vector<SweepCell> cells;

  bool all_correct() const {
    return std::all_of(rows.begin(), rows.end(), [](const SweepRow& r) { return r.all_correct; });
  }
};

inline unsigned resolve_threads(unsigned requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("RINGFORM_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Seed of repetition `rep` at chain size n; shared by both strategies.
inline std::uint64_t sweep_seed(std::uint64_t base, std::size_t n, std::size_t rep) {
  return CounterRng(base, n).at(rep);
}

/// Runs `count` independent jobs on up to `threads` workers.
template <typename Job>
void parallel_for(std::size_t count, unsigned threads, Job&& job) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        job(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const unsigned t = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(count)));
  std::vector<std::thread> pool;
  for (unsigned i = 1; i < t; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

inline SweepResult sweep_convergence(const SweepParams& sp) {
  require(sp.n_min >= 2 && sp.n_max >= sp.n_min, "sweep range must satisfy 2 <= n_min <= n_max");
  require(sp.reps >= 1, "sweep needs at least one repetition");
  SweepResult result;
  result.params = sp.params();

  for (std::size_t n = sp.n_min; n <= sp.n_max; ++n)
    for (Strategy s : {Strategy::S1, Strategy::S2})
      for (std::size_t rep = 0; rep < sp.reps; ++rep) {
        SweepCell c;
        c.n_robots = n;
        c.strategy = s;
        c.rep = rep;
        c.seed = sweep_seed(sp.seed, n, rep);
        result.cells.push_back(c);
      }

  parallel_for(result.cells.size(), resolve_threads(sp.threads), [&](std::size_t i) {
    SweepCell& c = result.cells[i];
    EstimatorConfig cfg;
    cfg.strategy = c.strategy;
    cfg.params = result.params;
    cfg.window = sp.window > 0 ? sp.window : settling_window(c.n_robots - 1, result.params, c.strategy);
    cfg.max_steps = std::max(sp.max_steps, cfg.window + 1);
    cfg.record_steps = false;
    const std::size_t np = c.n_robots - 1;
    const auto trace = run_estimation(np, cfg, random_positions(np, c.seed, sp.half_width));
    c.converged = trace.converged;
    c.estimate = trace.estimate;
    c.steps = trace.steps_to_convergence;
    c.first_stable_step = trace.first_stable_step;
  });

  for (std::size_t n = sp.n_min; n <= sp.n_max; ++n) {
    for (Strategy s : {Strategy::S1, Strategy::S2}) {
      SweepRow row;
      row.n_robots = n;
      row.strategy = s;
      double steps = 0.0;
      double stable = 0.0;
      for (const auto& c : result.cells) {
        if (c.n_robots != n || c.strategy != s) continue;
        ++row.reps;
        steps += static_cast<double>(c.steps);
        stable += static_cast<double>(c.first_stable_step);
        if (!c.converged || c.estimate != static_cast<long long>(n - 1)) {
          row.all_correct = false;
          row.failing_seeds.push_back(c.seed);
        }
      }
      row.mean_steps = steps / static_cast<double>(row.reps);
      row.mean_seconds = row.mean_steps * result.params.dt;
      row.mean_first_stable_steps = stable / static_cast<double>(row.reps);
      result.rows.push_back(std::move(row));
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Sensitivity of the steady velocity ratio to chain length
// ---------------------------------------------------------------------------

struct SensitivityRow {
  std::size_t n_prime = 0;
  double ratio_s1_closed = 0.0;
  double ratio_s2_closed = 0.0;
  double ratio_s1_sim = std::nan("");
  double ratio_s2_sim = std::nan("");
};

struct SensitivityCurve {
  double beta = 0.0;
  std::vector<SensitivityRow> rows;
  double total_variation_s1 = 0.0;
  double total_variation_s2 = 0.0;

  Strategy more_sensitive() const {
    return total_variation_s1 >= total_variation_s2 ? Strategy::S1 : Strategy::S2;
  }
  double max_sim_deviation() const {
    double worst = 0.0;
    for (const auto& r : rows) {
      const double d1 = std::abs(r.ratio_s1_sim - r.ratio_s1_closed);
      const double d2 = std::abs(r.ratio_s2_sim - r.ratio_s2_closed);
      if (std::isnan(d1) || std::isnan(d2)) return std::numeric_limits<double>::infinity();
      worst = std::max({worst, d1, d2});
    }
    return worst;
  }
};

/// Closed-form ratios per n' and, when `simulate`, the settled simulated ratios
/// (dt fixed at 0.01, alpha = 2 beta / dt).
inline SensitivityCurve sensitivity_curves(std::size_t n_prime_min, std::size_t n_prime_max, double beta,
                                           bool simulate = true, unsigned threads = 0) {
  require_beta(beta);
  require(n_prime_min >= 1 && n_prime_max >= n_prime_min, "sensitivity range must satisfy 1 <= min <= max");
  SensitivityCurve curve;
  curve.beta = beta;
  for (std::size_t np = n_prime_min; np <= n_prime_max; ++np) {
    SensitivityRow row;
    row.n_prime = np;
    row.ratio_s1_closed = steady_ratio_s1(np, beta);
    row.ratio_s2_closed = steady_ratio_s2(np, beta);
    curve.rows.push_back(row);
  }
  if (simulate) {
    const double dt = 0.01;
    const EstimationParams p(2.0 * beta / dt, dt);
    parallel_for(curve.rows.size() * 2, resolve_threads(threads), [&](std::size_t i) {
      auto& row = curve.rows[i / 2];
      EstimatorConfig cfg;
      cfg.params = p;
      cfg.strategy = i % 2 == 0 ? Strategy::S1 : Strategy::S2;
      const double r = simulate_steady_ratio(row.n_prime, cfg);
      (i % 2 == 0 ? row.ratio_s1_sim : row.ratio_s2_sim) = r;
    });
  }
  for (std::size_t i = 1; i < curve.rows.size(); ++i) {
    curve.total_variation_s1 += std::abs(curve.rows[i].ratio_s1_closed - curve.rows[i - 1].ratio_s1_closed);
    curve.total_variation_s2 += std::abs(curve.rows[i].ratio_s2_closed - curve.rows[i - 1].ratio_s2_closed);
  }
  return curve;
}

// ---------------------------------------------------------------------------
// Scenarios
// ---------------------------------------------------------------------------

inline PolygonSpec hexagon_spec() {
  PolygonSpec spec;
  spec.vertex_set = {1, 21, 41, 61, 81, 101};
  spec.r_star = {Vec2(-4, -8), Vec2(-8, 0), Vec2(-4, 8), Vec2(4, 8), Vec2(8, 0), Vec2(4, -8)};
  return spec;
}

inline PolygonSpec triangle_spec() {
  PolygonSpec spec;
  spec.vertex_set = {0, 2, 5};
  spec.r_star = {Vec2(1, -2), Vec2(2, 2), Vec2(-3, 0)};
  return spec;
}

struct ScenarioReport {
  PipelineResult pipeline;
  std::vector<double> final_errors;
  double max_vertex_speed = 0.0;
  double max_spacing_deviation = 0.0;    // consecutive-robot spacing vs -l*_i
  double max_equilibrium_deviation = 0.0;  // all robots vs cascade prediction
  bool converged = false;
};

/// Worst deviation of consecutive-robot displacement from -l*_i along every segment.
inline double spacing_deviation(const SwarmState& state, const FormationConfig& config) {
  const auto segs = cut_ring(config.ring, config.spec);
  const auto ls = config.l_star();
  double worst = 0.0;
  for (std::size_t i = 0; i < segs.size(); ++i) {
    std::size_t prev = segs[i].anchor;
    for (auto robot : segs[i].members) {
      const Vec2 step = state.positions[robot] - state.positions[prev];
      worst = std::max(worst, (step + ls[i]).norm());
      prev = robot;
    }
  }
  return worst;
}

inline double equilibrium_deviation(const SwarmState& state, const FormationConfig& config) {
  const SwarmState eq = predicted_equilibrium(config);
  double worst = 0.0;
  for (std::size_t i = 0; i < state.size(); ++i)
    worst = std::max(worst, (state.positions[i] - eq.positions[i]).norm());
  return worst;
}

inline ScenarioReport summarize(PipelineResult pipeline) {
  ScenarioReport rep;
  const auto& fin = pipeline.trace.final_state;
  rep.final_errors = pipeline.trace.errors.back().errors;
  for (auto s : pipeline.formation.spec.vertex_set)
    rep.max_vertex_speed = std::max(rep.max_vertex_speed, fin.velocities[s].norm());
  rep.max_spacing_deviation = spacing_deviation(fin, pipeline.formation);
  rep.max_equilibrium_deviation = equilibrium_deviation(fin, pipeline.formation);
  rep.converged = pipeline.trace.converged;
  rep.pipeline = std::move(pipeline);
  return rep;
}

struct HexagonOptions {
  double half_width = 5.0;
  double horizon_seconds = 150.0;
  std::size_t stride = 1;
  Strategy strategy = Strategy::S1;
};

/// 120 robots, six chains of 20, alpha = 0.5, dt = 0.05 for formation. The
/// estimation phase uses dt = 0.01 with alpha*dt at 0.9x the tighter bound for n' = 20.
inline ScenarioReport scenario_hexagon(std::uint64_t seed, const HexagonOptions& opt = {}) {
  const RingTopology ring(120);
  const PolygonSpec spec = hexagon_spec();
  EstimatorConfig est;
  est.strategy = opt.strategy;
  const double adt = 0.9 * std::min(stability_bound(20, Strategy::S1), stability_bound(20, Strategy::S2));
  est.params = EstimationParams(adt / 0.01, 0.01);
  est.record_steps = true;

  FormationConfig form = FormationConfig::make(ring, spec, EstimationParams(0.5, 0.05), 1);
  form.stride = opt.stride;
  const auto horizon = static_cast<std::size_t>(std::llround(opt.horizon_seconds / 0.05));
  return summarize(run_pipeline(ring, spec, est, form, random_swarm(120, seed, opt.half_width), horizon));
}

struct TriangleOptions {
  double half_width = 2.0;
  double horizon_seconds = 100.0;
  std::size_t stride = 1;
  Strategy strategy = Strategy::S1;
  int sigma = 1;
};

/// 7 robots, S = {0, 2, 5}; estimation alpha = 0.1, dt = 1; formation alpha = 0.3, dt = 0.2.
inline ScenarioReport scenario_triangle(std::uint64_t seed, const TriangleOptions& opt = {}) {
  const RingTopology ring(7);
  const PolygonSpec spec = triangle_spec();
  EstimatorConfig est;
  est.strategy = opt.strategy;
  est.params = EstimationParams(0.1, 1.0);

  FormationConfig form = FormationConfig::make(ring, spec, EstimationParams(0.3, 0.2), opt.sigma);
  form.stride = opt.stride;
  const auto horizon = static_cast<std::size_t>(std::llround(opt.horizon_seconds / 0.2));
  return summarize(run_pipeline(ring, spec, est, form, random_swarm(7, seed, opt.half_width), horizon));
}

}  // namespace ringform
