#include "ringform/formation.hpp"
#include "ringform/harness.hpp"

#include <gtest/gtest.h>

using namespace ringform;

namespace {

FormationConfig triangle(int sigma = 1) {
  return FormationConfig::make(RingTopology(7), triangle_spec(), EstimationParams(0.3, 0.2), sigma);
}

}  // namespace

TEST(FormationConfig, SpacingFromCardinalities) {
  const auto cfg = triangle();
  EXPECT_EQ(cfg.n_s, (std::vector<std::size_t>{2, 3, 2}));
  const auto l = cfg.l_star();
  EXPECT_NEAR((l[0] - Vec2(0.5, -1.0)).norm(), 0.0, 1e-15);
  EXPECT_NEAR((l[1] - Vec2(2.0 / 3.0, 2.0 / 3.0)).norm(), 0.0, 1e-15);
  EXPECT_NEAR((l[2] - Vec2(-1.5, 0.0)).norm(), 0.0, 1e-15);
}

TEST(FormationConfig, Rejections) {
  auto spec = triangle_spec();
  spec.r_star[0].x() += 0.1;
  EXPECT_THROW(FormationConfig::make(RingTopology(7), spec, EstimationParams(0.3, 0.2)), InvalidArgument);
  EXPECT_THROW(FormationConfig::make(RingTopology(7), triangle_spec(), EstimationParams(0.3, 0.2), 3),
               InvalidArgument);
  EXPECT_THROW(FormationConfig::make(RingTopology(7), triangle_spec(), EstimationParams(0.3, 0.2), 1, {2, 2, 3}),
               InvalidArgument);
  auto short_spec = triangle_spec();
  short_spec.r_star.pop_back();
  EXPECT_THROW(FormationConfig::make(RingTopology(7), short_spec, EstimationParams(0.3, 0.2)), InvalidArgument);
}

TEST(Formation, CascadeEquilibriumIsAFixedPoint) {
  for (int sigma : {1, 2}) {
    auto cfg = triangle(sigma);
    cfg.anchor_position = Vec2(1.5, -0.5);
    const SwarmState eq = predicted_equilibrium(cfg);
    const SwarmState next = step_formation(eq, cfg);
    for (std::size_t i = 0; i < eq.size(); ++i) {
      EXPECT_NEAR((next.positions[i] - eq.positions[i]).norm(), 0.0, 1e-14);
      EXPECT_NEAR(next.velocities[i].norm(), 0.0, 1e-14);
    }
    for (double e : relative_distance_errors(eq, cfg.spec)) EXPECT_NEAR(e, 0.0, 1e-14);
  }
}

TEST(Formation, TrianglePredictionMatchesHandComputedPoints) {
  const SwarmState eq = predicted_equilibrium(triangle());
  const std::vector<Vec2> want = {Vec2(0, 0),       Vec2(-0.5, 1),       Vec2(-1, 2),   Vec2(-5.0 / 3, 4.0 / 3),
                                  Vec2(-7.0 / 3, 2.0 / 3), Vec2(-3, 0), Vec2(-1.5, 0)};
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR((eq.positions[i] - want[i]).norm(), 0.0, 1e-14) << i;
}

// With the anchor pinned, the first segment evolves exactly as
// s(k+1) = A_f s(k) + B_f [q_anchor, 0, l*_0].
TEST(Formation, FirstSegmentMatchesDenseChainMatrix) {
  const RingTopology ring(12);
  PolygonSpec spec{{0, 5, 8}, {Vec2(2, -1), Vec2(1, 3), Vec2(-3, -2)}};
  const auto cfg = FormationConfig::make(ring, spec, EstimationParams(0.4, 0.1));
  const auto sys = build_Af(5, cfg.params);
  SwarmState st = SwarmState::at_rest(random_positions(12, 5, 4.0));
  const Vec2 l0 = cfg.l_star()[0];
  const Vec2 anchor = st.positions[0];
  auto stack = [&](int axis) {
    Vector v(10);
    for (int j = 0; j < 5; ++j) {
      v(j) = st.positions[j + 1][axis];
      v(5 + j) = st.velocities[j + 1][axis];
    }
    return v;
  };
  Vector x = stack(0), y = stack(1);
  Vector ux(3), uy(3);
  ux << anchor.x(), 0.0, l0.x();
  uy << anchor.y(), 0.0, l0.y();
  for (int k = 0; k < 200; ++k) {
    x = sys.dense * x + sys.input * ux;
    y = sys.dense * y + sys.input * uy;
    st = step_formation(st, cfg);
    ASSERT_LT((stack(0) - x).cwiseAbs().maxCoeff(), 1e-12) << k;
    ASSERT_LT((stack(1) - y).cwiseAbs().maxCoeff(), 1e-12) << k;
  }
}

TEST(Formation, TriangleConvergesForBothLags) {
  for (int sigma : {1, 2}) {
    const auto cfg = triangle(sigma);
    const auto tr = run_formation(random_swarm(7, 3, 2.0), cfg, 500);
    EXPECT_TRUE(tr.converged) << sigma;
    EXPECT_LT(tr.final_max_error(), 1e-6);
    EXPECT_TRUE(tr.first_within_tolerance.has_value());
  }
}

TEST(Formation, TranslationEquivariance) {
  const auto cfg = triangle();
  SwarmState a = random_swarm(7, 8, 2.0);
  SwarmState b = a;
  const Vec2 shift(10.0, -3.0);
  for (auto& p : b.positions) p += shift;
  for (int k = 0; k < 100; ++k) {
    a = step_formation(a, cfg);
    b = step_formation(b, cfg);
  }
  for (std::size_t i = 0; i < 7; ++i) {
    EXPECT_NEAR((b.positions[i] - a.positions[i] - shift).norm(), 0.0, 1e-9);
    EXPECT_NEAR((b.velocities[i] - a.velocities[i]).norm(), 0.0, 1e-9);
  }
}

TEST(Formation, ConvergesToPredictedEquilibrium) {
  auto cfg = triangle();
  const SwarmState init = random_swarm(7, 21, 2.0);
  cfg.anchor_position = init.positions[0];
  const auto tr = run_formation(init, cfg, 500);
  EXPECT_LT(equilibrium_deviation(tr.final_state, cfg), 1e-6);
  EXPECT_LT(spacing_deviation(tr.final_state, cfg), 1e-6);
}

TEST(Formation, StrideControlsSnapshots) {
  auto cfg = triangle();
  cfg.stride = 10;
  const auto tr = run_formation(random_swarm(7, 1, 2.0), cfg, 25);
  ASSERT_EQ(tr.snapshots.size(), 4u);  // 0, 10, 20, 25
  EXPECT_EQ(tr.snapshots.back().k, 25u);
  EXPECT_EQ(tr.errors.size(), 26u);
}

TEST(Formation, DivergenceGuard) {
  auto cfg = FormationConfig::make(RingTopology(7), triangle_spec(), EstimationParams(40.0, 1.0));
  cfg.divergence_limit = 1e4;
  EXPECT_THROW(run_formation(random_swarm(7, 1, 2.0), cfg, 10'000), DivergenceError);
}

TEST(Pipeline, RejectsWrongEstimates) {
  EstimatorConfig est;
  est.params = EstimationParams(0.1, 1.0);
  est.max_steps = 60;  // too short for the stop rule
  const auto cfg = triangle();
  EXPECT_THROW(run_pipeline(RingTopology(7), triangle_spec(), est, cfg, random_swarm(7, 1, 2.0), 10), PipelineError);
}

TEST(Pipeline, EstimatesFeedFormation) {
  EstimatorConfig est;
  est.params = EstimationParams(0.1, 1.0);
  const auto res = run_pipeline(RingTopology(7), triangle_spec(), est, triangle(), random_swarm(7, 2, 2.0), 500);
  ASSERT_EQ(res.estimates.size(), 3u);
  EXPECT_EQ(res.formation.n_s, (std::vector<std::size_t>{2, 3, 2}));
  EXPECT_TRUE(res.trace.converged);
}
