#pragma once

#include "ringform/common.hpp"
#include "ringform/rng.hpp"
#include "ringform/spectral.hpp"

#include <algorithm>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

namespace ringform {

/// One estimation chain: index 0 is the still anchor at the origin, 1..n' move,
/// and the virtual robot n'+1 only contributes its alternating velocity.
struct ChainSimState {
  std::size_t k = 0;
  std::vector<Vec2> positions;
  std::vector<Vec2> velocities;
  std::vector<Vec2> velocities_prev;
  Vec2 excitation = Vec2(1.0, 0.0);

  std::size_t n_prime() const noexcept { return positions.size() - 1; }

  /// Chain at rest; `movable` (size n') seeds robots 1..n' when given.
  static ChainSimState at_rest(std::size_t n_prime, const Vec2& excitation,
                               const std::vector<Vec2>& movable = {}) {
    require(n_prime >= 1, "estimation chain needs n' >= 1");
    require(movable.empty() || movable.size() == n_prime,
            "initial positions must list exactly n' robots");
    ChainSimState s;
    s.positions.assign(n_prime + 1, Vec2::Zero());
    s.velocities.assign(n_prime + 1, Vec2::Zero());
    s.velocities_prev.assign(n_prime + 1, Vec2::Zero());
    for (std::size_t i = 0; i < movable.size(); ++i) s.positions[i + 1] = movable[i];
    s.excitation = excitation;
    return s;
  }
};

struct EstimatorConfig {
  Strategy strategy = Strategy::S1;
  EstimationParams params;
  Vec2 excitation_init = Vec2(1.0, 0.0);
  std::size_t window = 50;
  std::size_t max_steps = 2'000'000;
  double divergence_limit = 1e6;
  bool record_steps = true;

  void validate() const {
    require(window >= 2, "stop window must be at least 2 steps");
    require(max_steps > window, "max_steps must exceed the stop window");
    require(excitation_init.norm() > 0.0 && all_finite(excitation_init),
            "excitation must be a finite nonzero vector");
  }
};

struct EstimateRecord {
  std::size_t k = 0;
  double ratio = 0.0;
  double raw = std::numeric_limits<double>::quiet_NaN();
  long long rounded = 0;
  bool converged = false;
};

struct EstimateTrace {
  std::vector<EstimateRecord> records;
  bool converged = false;
  long long estimate = 0;
  std::size_t steps_to_convergence = 0;
  /// First step from which the rounded estimate equals the final one without interruption.
  std::size_t first_stable_step = 0;
  double final_ratio = 0.0;
};

/// One synchronous controller update followed by position integration.
inline ChainSimState step_estimator(const ChainSimState& state, const EstimatorConfig& config) {
  const std::size_t np = state.n_prime();
  const double alpha = config.params.alpha;
  const double dt = config.params.dt;
  const auto& q = state.positions;
  const auto& src = config.strategy == Strategy::S1 ? state.velocities : state.velocities_prev;

  ChainSimState next;
  next.k = state.k + 1;
  next.velocities.assign(np + 1, Vec2::Zero());
  for (std::size_t i = 1; i <= np; ++i) {
    const Vec2 right_q = i < np ? q[i + 1] : Vec2::Zero();
    // The virtual robot enters through b v_{n'+1}(k) in both strategies.
    const Vec2 right_v = i < np ? src[i + 1] : state.excitation;
    next.velocities[i] = 0.5 * alpha * (right_q + q[i - 1] - 2.0 * q[i]) + 0.5 * (right_v + src[i - 1]);
  }
  next.positions = q;
  for (std::size_t i = 1; i <= np; ++i) {
    next.positions[i] += dt * state.velocities[i];
    if (!all_finite(next.positions[i]) || !all_finite(next.velocities[i]) ||
        next.positions[i].norm() > config.divergence_limit) {
      throw DivergenceError("estimation chain diverged at step " + std::to_string(next.k) +
                            " (robot " + std::to_string(i) + "); check alpha*dt against the stability bound");
    }
  }
  next.velocities_prev = state.velocities;
  next.excitation = -state.excitation;
  return next;
}

/// Maps a steady velocity ratio ||v_n'|| / ||v_{n'+1}|| to the real-valued n'.
/// Returns nullopt while the ratio is outside the formula's domain (not converged yet).
inline std::optional<double> readout(double ratio, double beta, Strategy s) {
  require_beta(beta);
  if (!std::isfinite(ratio) || ratio <= 0.0) return std::nullopt;
  if (s == Strategy::S1) {
    const double f1 = 1.0 / (1.0 + beta);
    const double f2 = (1.0 + beta) / ((1.0 + beta) * (1.0 + beta) - (1.0 - beta) * (1.0 - beta) / 4.0);
    // The steady ratio of any chain lies below half the attracting fixed point.
    if (!(2.0 * ratio < f_fixed_points(beta).second)) return std::nullopt;
    const double fb = f_bar(2.0 * ratio, beta);
    if (!(fb > 0.0) || !std::isfinite(fb)) return std::nullopt;
    const double l1 = std::log(f_bar(f1, beta));
    const double l2 = std::log(f_bar(f2, beta));
    return (std::log(fb) - l1) / (l2 - l1) + 1.0;
  }
  const double x = (1.0 + beta) * ratio;
  const double den = 1.0 - x;
  if (!(den > 0.0)) return std::nullopt;
  return x / den;
}

/// Seeded uniform placement of n' robots in [-half_width, half_width]^2.
inline std::vector<Vec2> random_positions(std::size_t count, std::uint64_t seed, double half_width,
                                          std::uint64_t stream = 0) {
  CounterRng rng(seed, stream);
  std::vector<Vec2> out(count);
  for (auto& p : out) {
    const double x = rng.uniform(-half_width, half_width);
    const double y = rng.uniform(-half_width, half_width);
    p = Vec2(x, y);
  }
  return out;
}

/// Sliding-window stop rule: W consecutive valid estimates spanning less than one
/// unit and rounding to the same positive integer.
class StopRule {
 public:
  explicit StopRule(std::size_t window) : window_(window) { buf_.reserve(window); }

  /// Feeds one raw estimate; returns true once the rule holds.
  bool push(std::optional<double> raw) {
    if (!raw) {
      buf_.clear();
      head_ = 0;
      return false;
    }
    if (buf_.size() < window_) {
      buf_.push_back(*raw);
    } else {
      buf_[head_] = *raw;
      head_ = (head_ + 1) % window_;
    }
    if (buf_.size() < window_) return false;
    const auto [lo, hi] = std::minmax_element(buf_.begin(), buf_.end());
    if (!(*hi - *lo < 1.0)) return false;
    const long long r = std::llround(buf_.front());
    if (r <= 0) return false;
    return std::all_of(buf_.begin(), buf_.end(), [r](double x) { return std::llround(x) == r; });
  }

 private:
  std::size_t window_;
  std::vector<double> buf_;
  std::size_t head_ = 0;
};

/// One e-folding time of the slowest estimator mode, ceil(1 / (1 - rho)), in steps.
/// A stop window this long cannot be satisfied by a transient that is still drifting
/// at the dominant rate.
inline std::size_t settling_window(std::size_t n_prime, const EstimationParams& p, Strategy s) {
  const double rho = spectral_radius(s == Strategy::S1 ? build_A(n_prime, p).dense : build_Ar(n_prime, p).dense);
  require(rho < 1.0, "estimator is not Schur at n' = " + std::to_string(n_prime));
  return std::max<std::size_t>(2, static_cast<std::size_t>(std::ceil(1.0 / (1.0 - rho))));
}

/// Runs one chain until the stop rule fires or max_steps is reached.
inline EstimateTrace run_estimation(std::size_t n_prime_true, const EstimatorConfig& config,
                                    const std::vector<Vec2>& initial_positions = {}) {
  config.validate();
  const double beta = config.params.beta();
  require_beta(beta);

  ChainSimState state = ChainSimState::at_rest(n_prime_true, config.excitation_init, initial_positions);
  StopRule rule(config.window);
  EstimateTrace trace;
  long long last_rounded = 0;
  std::size_t run_start = 0;

  for (std::size_t step = 0; step < config.max_steps; ++step) {
    state = step_estimator(state, config);
    EstimateRecord rec;
    rec.k = state.k;
    rec.ratio = state.velocities[n_prime_true].norm() / state.excitation.norm();
    const auto raw = readout(rec.ratio, beta, config.strategy);
    if (raw) {
      rec.raw = *raw;
      rec.rounded = std::llround(*raw);
    }
    if (rec.rounded != last_rounded) {
      last_rounded = rec.rounded;
      run_start = rec.k;
    }
    rec.converged = rule.push(raw);
    trace.final_ratio = rec.ratio;
    if (config.record_steps) trace.records.push_back(rec);
    if (rec.converged) {
      trace.converged = true;
      trace.estimate = rec.rounded;
      trace.steps_to_convergence = rec.k;
      trace.first_stable_step = run_start;
      return trace;
    }
  }
  return trace;
}

/// Iterates a chain from rest until the velocity ratio settles; used for sensitivity curves.
inline double simulate_steady_ratio(std::size_t n_prime, const EstimatorConfig& config,
                                    double tolerance = 1e-13, std::size_t max_steps = 5'000'000) {
  ChainSimState state = ChainSimState::at_rest(n_prime, config.excitation_init);
  double last = -1.0;
  std::size_t calm = 0;
  for (std::size_t step = 0; step < max_steps; ++step) {
    state = step_estimator(state, config);
    const double r = state.velocities[n_prime].norm() / state.excitation.norm();
    calm = std::abs(r - last) <= tolerance * std::max(1.0, std::abs(r)) ? calm + 1 : 0;
    last = r;
    if (calm >= 4) return r;
  }
  throw NumericalError("velocity ratio did not settle within " + std::to_string(max_steps) + " steps");
}

}  // namespace ringform
