#pragma once

#include "ringform/common.hpp"
#include "ringform/estimation.hpp"
#include "ringform/spectral.hpp"
#include "ringform/topology.hpp"

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ringform {

/// Positions and velocities of every robot in the ring at one step. The
/// previous velocity layer feeds the sigma = 2 (one-step delayed) law.
struct SwarmState {
  std::vector<Vec2> positions;
  std::vector<Vec2> velocities;
  std::vector<Vec2> velocities_prev;

  std::size_t size() const noexcept { return positions.size(); }

  static SwarmState at_rest(std::vector<Vec2> positions) {
    SwarmState s;
    s.velocities.assign(positions.size(), Vec2::Zero());
    s.velocities_prev.assign(positions.size(), Vec2::Zero());
    s.positions = std::move(positions);
    return s;
  }
};

struct FormationConfig {
  RingTopology ring{3};
  PolygonSpec spec;
  EstimationParams params{0.5, 0.05};
  int sigma = 1;
  std::vector<std::size_t> n_s;  // per-segment cardinalities
  Vec2 anchor_position = Vec2::Zero();
  double tolerance = 1e-2;
  std::size_t stride = 1;
  double divergence_limit = 1e6;

  /// Fills n_s from the ring cut when not given and validates everything.
  static FormationConfig make(const RingTopology& ring, PolygonSpec spec, const EstimationParams& params,
                              int sigma = 1, std::vector<std::size_t> n_s = {}) {
    FormationConfig c;
    c.ring = ring;
    c.spec = std::move(spec);
    c.params = params;
    c.sigma = sigma;
    c.n_s = n_s.empty() ? cardinalities(cut_ring(ring, c.spec)) : std::move(n_s);
    c.validate();
    return c;
  }

  void validate() const {
    require(sigma == 1 || sigma == 2, "sigma must be 1 or 2, got " + std::to_string(sigma));
    const auto segs = cut_ring(ring, spec);
    require(spec.r_star.size() == spec.m(), "r_star must have one entry per vertex robot");
    require(validate_polygon_closure(spec), "r_star does not close the polygon (sum is not zero)");
    require(n_s == cardinalities(segs), "n_s does not match the ring cut cardinalities");
    require(stride >= 1, "stride must be at least 1");
    require(tolerance > 0.0, "tolerance must be positive");
  }

  /// Per-link spacing l*_i = r*_i / n^s_i.
  std::vector<Vec2> l_star() const {
    std::vector<Vec2> out(spec.m());
    for (std::size_t i = 0; i < spec.m(); ++i) out[i] = spec.r_star[i] / static_cast<double>(n_s[i]);
    return out;
  }
};

/// Precomputed roles for the synchronous formation update.
class FormationLaw {
 public:
  explicit FormationLaw(const FormationConfig& config)
      : config_(config), role_(config.ring.size(), Role::Follower), link_(config.ring.size(), Vec2::Zero()) {
    const auto& s = config.spec.vertex_set;
    const auto ls = config.l_star();
    role_[s[0]] = Role::Pinned;
    for (std::size_t i = 1; i < s.size(); ++i) {
      role_[s[i]] = Role::Vertex;
      link_[s[i]] = ls[i - 1];
    }
  }

  SwarmState operator()(const SwarmState& state) const {
    const std::size_t n = config_.ring.size();
    require(state.size() == n, "swarm state size does not match the ring");
    const double alpha = config_.params.alpha;
    const double dt = config_.params.dt;
    const auto& q = state.positions;
    const auto& src = config_.sigma == 1 ? state.velocities : state.velocities_prev;

    SwarmState next;
    next.velocities.assign(n, Vec2::Zero());
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t lo = config_.ring.prev(i);
      const std::size_t hi = config_.ring.next(i);
      switch (role_[i]) {
        case Role::Pinned:
          break;
        case Role::Vertex:
          next.velocities[i] = alpha * (q[lo] - q[i] - link_[i]) + src[lo];
          break;
        case Role::Follower:
          next.velocities[i] = 0.5 * alpha * (q[hi] + q[lo] - 2.0 * q[i]) + 0.5 * (src[hi] + src[lo]);
          break;
      }
    }
    next.positions.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      next.positions[i] = q[i] + dt * state.velocities[i];
      if (!all_finite(next.positions[i]) || !all_finite(next.velocities[i]) ||
          next.positions[i].norm() > config_.divergence_limit) {
        throw DivergenceError("formation diverged at robot " + std::to_string(i) +
                              "; check alpha*dt against the stability bound");
      }
    }
    next.velocities_prev = state.velocities;
    return next;
  }

 private:
  enum class Role : std::uint8_t { Follower, Vertex, Pinned };
  const FormationConfig& config_;
  std::vector<Role> role_;
  std::vector<Vec2> link_;
};

inline SwarmState step_formation(const SwarmState& state, const FormationConfig& config) {
  return FormationLaw(config)(state);
}

/// e_i = || (q_{s_i} - q_{s_{i+1}}) - r*_i ||.
inline std::vector<double> relative_distance_errors(const SwarmState& state, const PolygonSpec& spec) {
  const auto& s = spec.vertex_set;
  std::vector<double> e(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    const Vec2 r = state.positions[s[i]] - state.positions[s[(i + 1) % s.size()]];
    e[i] = (r - spec.r_star[i]).norm();
  }
  return e;
}

/// Cascade equilibrium: chain i sits at q_{s_i} - j l*_i, j = 1..n^s_i.
inline SwarmState predicted_equilibrium(const FormationConfig& config) {
  const auto segs = cut_ring(config.ring, config.spec);
  const auto ls = config.l_star();
  std::vector<Vec2> pos(config.ring.size(), Vec2::Zero());
  Vec2 anchor = config.anchor_position;
  pos[segs[0].anchor] = anchor;
  for (std::size_t i = 0; i < segs.size(); ++i) {
    for (std::size_t j = 1; j <= segs[i].cardinality; ++j) {
      const std::size_t robot = segs[i].members[j - 1];
      if (robot == segs[0].anchor) continue;  // last chain closes on the pinned anchor
      pos[robot] = anchor - static_cast<double>(j) * ls[i];
    }
    anchor = anchor - config.spec.r_star[i];
  }
  return SwarmState::at_rest(std::move(pos));
}

struct Snapshot {
  std::size_t k = 0;
  double time = 0.0;
  SwarmState state;
};

struct ErrorRecord {
  std::size_t k = 0;
  double time = 0.0;
  std::vector<double> errors;
};

struct FormationTrace {
  std::vector<Snapshot> snapshots;  // every `stride` steps plus the final step
  std::vector<ErrorRecord> errors;  // every step, including k = 0
  SwarmState final_state;
  bool converged = false;
  std::optional<std::size_t> first_within_tolerance;

  double final_max_error() const {
    const auto& e = errors.back().errors;
    return *std::max_element(e.begin(), e.end());
  }
};

/// Runs `horizon` synchronous steps. converged means max_i e_i < tolerance at the last step.
inline FormationTrace run_formation(const SwarmState& initial, const FormationConfig& config, std::size_t horizon) {
  config.validate();
  const FormationLaw law(config);
  FormationTrace trace;
  SwarmState state = initial;
  const double dt = config.params.dt;

  auto record = [&](std::size_t k) {
    ErrorRecord er{k, static_cast<double>(k) * dt, relative_distance_errors(state, config.spec)};
    const double worst = *std::max_element(er.errors.begin(), er.errors.end());
    if (worst < config.tolerance) {
      if (!trace.first_within_tolerance) trace.first_within_tolerance = k;
    } else {
      trace.first_within_tolerance.reset();
    }
    trace.errors.push_back(std::move(er));
    if (k % config.stride == 0 || k == horizon) trace.snapshots.push_back({k, static_cast<double>(k) * dt, state});
  };

  record(0);
  for (std::size_t k = 1; k <= horizon; ++k) {
    state = law(state);
    record(k);
  }
  trace.converged = trace.final_max_error() < config.tolerance;
  trace.final_state = std::move(state);
  return trace;
}

/// Non-converged estimate or a cardinality mismatch stops the pipeline before phase 2.
class PipelineError : public std::runtime_error {
 public:
  PipelineError(const std::string& what, std::vector<EstimateTrace> estimates)
      : std::runtime_error(what), estimates_(std::move(estimates)) {}
  const std::vector<EstimateTrace>& estimates() const noexcept { return estimates_; }

 private:
  std::vector<EstimateTrace> estimates_;
};

struct PipelineResult {
  std::vector<ChainSegment> segments;
  std::vector<EstimateTrace> estimates;
  SwarmState initial;
  FormationConfig formation;
  FormationTrace trace;
};

/// Seeded uniform placement of the whole ring, anchor included.
inline SwarmState random_swarm(std::size_t n_total, std::uint64_t seed, double half_width) {
  return SwarmState::at_rest(random_positions(n_total, seed, half_width, /*stream=*/0));
}

/// Chain-frame positions for segment estimation: members relative to the anchor.
inline std::vector<Vec2> chain_frame_positions(const SwarmState& swarm, const ChainSegment& seg) {
  std::vector<Vec2> out;
  out.reserve(seg.members.size());
  for (auto idx : seg.members) out.push_back(swarm.positions[idx] - swarm.positions[seg.anchor]);
  return out;
}

/// Phase 1: each terminal vertex estimates its segment's cardinality. Phase 2:
/// formation with the estimated n^s from the initial configuration.
inline PipelineResult run_pipeline(const RingTopology& ring, const PolygonSpec& spec,
                                   const EstimatorConfig& est_config, FormationConfig form_config,
                                   const SwarmState& initial, std::size_t horizon) {
  PipelineResult result;
  result.segments = cut_ring(ring, spec);
  result.initial = initial;
  require(initial.size() == ring.size(), "initial swarm size does not match the ring");

  for (const auto& seg : result.segments) {
    result.estimates.push_back(run_estimation(seg.cardinality, est_config, chain_frame_positions(initial, seg)));
  }
  std::vector<std::size_t> n_s;
  for (std::size_t i = 0; i < result.segments.size(); ++i) {
    const auto& tr = result.estimates[i];
    if (!tr.converged) {
      throw PipelineError("estimation for segment " + std::to_string(i) + " did not converge within " +
                              std::to_string(est_config.max_steps) + " steps",
                          result.estimates);
    }
    if (tr.estimate != static_cast<long long>(result.segments[i].cardinality)) {
      throw PipelineError("segment " + std::to_string(i) + " estimated " + std::to_string(tr.estimate) +
                              " robots, ring cut has " + std::to_string(result.segments[i].cardinality),
                          result.estimates);
    }
    n_s.push_back(static_cast<std::size_t>(tr.estimate));
  }

  form_config.ring = ring;
  form_config.spec = spec;
  form_config.n_s = std::move(n_s);
  form_config.anchor_position = initial.positions[spec.vertex_set[0]];
  form_config.validate();
  result.trace = run_formation(initial, form_config, horizon);
  result.formation = std::move(form_config);
  return result;
}

}  // namespace ringform
