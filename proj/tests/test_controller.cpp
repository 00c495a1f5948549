#include <gtest/gtest.h>

#include "pivot/controller.hpp"
#include "pivot/errors.hpp"
#include "support.hpp"

using namespace pivot;

namespace {

ControllerState running(double goal, int cmd, double t_prev) {
  auto cs = make_controller(goal, cmd);
  cs.t_prev = t_prev;
  return cs;
}

}  // namespace

TEST(ForwardPredict, Examples) {
  EXPECT_NEAR(forward_predict(30, 100, 0.83), 113.0, 1e-12);
  EXPECT_NEAR(forward_predict(45, 20, 0.83), 61.6, 1e-12);
  for (double a : {-3.0, 0.0, 17.25, 179.0}) EXPECT_EQ(forward_predict(a, 0.0, 0.83), a);
  EXPECT_EQ(forward_predict(10.0, -4.0, 0.5), 8.0);
}

TEST(ControlStep, CloseNearGoal) {
  const ControllerConfig cfg;
  const auto out = control_step(running(45, 120, 0.0), {44.2, 1.0}, 5.0, cfg);
  EXPECT_EQ(out.action, Action::Close);
  EXPECT_EQ(out.cmd, 255);
  EXPECT_EQ(out.state.phase, Phase::Closing);
  EXPECT_EQ(out.state.t_prev, 0.0);
  // closing wins over the opening guard
  EXPECT_EQ(control_step(running(45, 120, 4.9), {45.0, 0.0}, 5.0, cfg).action, Action::Close);
}

TEST(ControlStep, OpenWhenStalled) {
  const ControllerConfig cfg;
  const auto out = control_step(running(90, 120, 4.0), {10.0, 0.0}, 5.0, cfg);
  EXPECT_EQ(out.action, Action::Open);
  EXPECT_EQ(out.cmd, 118);
  EXPECT_EQ(out.state.current_cmd, 118);
  EXPECT_EQ(out.state.t_prev, 5.0);
  EXPECT_EQ(out.state.phase, Phase::Running);
}

TEST(ControlStep, HoldWhileMoving) {
  const ControllerConfig cfg;
  const auto cs = running(170, 120, 0.0);
  for (double w : {20.0, 21.0, 300.0}) {
    const auto out = control_step(cs, {10.0, w}, 5.0, cfg);
    EXPECT_EQ(out.action, Action::Hold);
    EXPECT_EQ(out.cmd, 120);
    EXPECT_EQ(out.state, cs);
  }
}

TEST(ControlStep, WaitGuard) {
  const ControllerConfig cfg;
  EXPECT_EQ(control_step(running(90, 120, 4.25), {10.0, 0.0}, 5.0, cfg).action, Action::Hold);  // exactly t_wait
  EXPECT_EQ(control_step(running(90, 120, 4.5), {10.0, 0.0}, 5.0, cfg).action, Action::Hold);
  EXPECT_EQ(control_step(running(90, 120, 4.0), {10.0, 0.0}, 5.0, cfg).action, Action::Open);
  // the first opening is never blocked
  EXPECT_EQ(control_step(make_controller(90, 120), {10.0, 0.0}, 0.0, cfg).action, Action::Open);
}

TEST(ControlStep, SaturatesAtZero) {
  const ControllerConfig cfg;
  EXPECT_EQ(control_step(running(90, 1, 0.0), {10.0, 0.0}, 5.0, cfg).cmd, 0);
  const auto out = control_step(running(90, 0, 0.0), {10.0, 0.0}, 5.0, cfg);
  EXPECT_EQ(out.cmd, 0);
  EXPECT_EQ(out.action, Action::Open);
}

TEST(ControlStep, InertOutsideRunning) {
  const ControllerConfig cfg;
  for (Phase p : {Phase::Closing, Phase::Done, Phase::Failed}) {
    auto cs = running(45, 80, 0.0);
    cs.phase = p;
    const auto out = control_step(cs, {45.0, 0.0}, 5.0, cfg);
    EXPECT_EQ(out.action, Action::Hold);
    EXPECT_EQ(out.state, cs);
    EXPECT_EQ(out.cmd, 80);
  }
}

TEST(ControlStep, ExhaustiveTable) {
  const auto r = support::controller_table();
  EXPECT_GT(r.cases, 10000);
  EXPECT_EQ(r.failures, 0) << r.first_failure;
}

TEST(Controller, Validation) {
  EXPECT_THROW(make_controller(200, 100), RangeError);
  EXPECT_THROW(make_controller(0, 100), RangeError);
  EXPECT_THROW(make_controller(-5, 100), RangeError);
  EXPECT_THROW(make_controller(45, 256), RangeError);
  EXPECT_NO_THROW(make_controller(180, 0));
  ControllerConfig c;
  c.t_wait = 0;
  EXPECT_THROW(c.validate(), RangeError);
  ControllerConfig o;
  o.open_step = 0;
  EXPECT_THROW(o.validate(), RangeError);
}

TEST(GripLoop, OracleReachesGoal) {
  const Plant plant = support::plant_for("Toothpaste");
  OracleEstimator est;
  const auto res = run_episode(plant, 90.0, est, 45.0);
  EXPECT_EQ(res.failure, FailureKind::None);
  EXPECT_LT(res.target_error, 5.0);
  EXPECT_EQ(res.target_error, std::abs(res.final_alpha_gt - 45.0));
  EXPECT_GE(res.close_tick, 0);
  EXPECT_EQ(res.trace.size(), res.states.size());
  EXPECT_EQ(res.trace.size(), res.frames.size());
  EXPECT_EQ(res.trace.back().phase, Phase::Done);
}

TEST(GripLoop, TinyGoalClosesImmediately) {
  const Plant plant = support::plant_for("Shampoo");
  OracleEstimator est;
  const auto res = run_episode(plant, 90.0, est, 0.5);
  EXPECT_EQ(res.failure, FailureKind::None);
  EXPECT_EQ(res.close_tick, 30);  // first tick after the initial hold
  EXPECT_NEAR(res.final_alpha_gt, 0.0, 1e-12);
  for (const auto& row : res.trace) EXPECT_NE(row.action, Action::Open);
}

TEST(GripLoop, ConstantMotionIsStuck) {
  const Plant plant = support::plant_for("Toothpaste");
  ConstantEstimator est(0.0, 21.0);
  const auto res = run_episode(plant, 90.0, est, 60.0);
  EXPECT_EQ(res.failure, FailureKind::Stuck);
  EXPECT_EQ(res.trace.back().phase, Phase::Failed);
  // detected once the 2 s window has elapsed after the initial hold
  EXPECT_NEAR(res.trace.back().t, 0.5 + 2.0, 2.0 / 60.0);
}

TEST(GripLoop, InvalidGoalThrows) {
  const Plant plant = support::plant_for("Toothpaste");
  OracleEstimator est;
  EXPECT_THROW(run_episode(plant, 90.0, est, 200.0), RangeError);
  EXPECT_THROW(run_episode(plant, 90.0, est, 0.0), RangeError);
}

TEST(GripLoop, TraceInvariants) {
  const ControllerConfig cfg;
  for (const char* name : {"Toothpaste", "Spray1", "Magnet", "Pill"}) {
    for (double approach : {-30.0, 0.0, 30.0}) {
      for (double goal : {30.0, 60.0}) {
        OracleEstimator est;
        const auto res = run_episode(support::plant_for(name, approach), 90.0 + approach, est, goal);
        double last_open = -1e9;
        int prev_cmd = res.trace.front().cmd;
        bool closed = false;
        for (const auto& row : res.trace) {
          if (row.action == Action::Open) {
            EXPECT_GT(row.t - last_open, cfg.t_wait) << name;
            EXPECT_LT(row.omega_est, cfg.omega_min) << name;
            last_open = row.t;
          }
          if (row.action == Action::Close) {
            closed = true;
            EXPECT_LE(std::abs(forward_predict(row.alpha_est, row.omega_est, cfg.d) - goal), cfg.eps_alpha);
            EXPECT_EQ(row.cmd, 255);
          }
          if (!closed) {
            EXPECT_LE(row.cmd, prev_cmd) << name;
            prev_cmd = row.cmd;
          } else {
            EXPECT_EQ(row.cmd, 255);
          }
        }
        if (res.failure == FailureKind::None) EXPECT_TRUE(closed);
      }
    }
  }
}

TEST(GripLoop, Deterministic) {
  const Plant plant = support::plant_for("Deodorant", 30.0);
  EpisodeConfig cfg;
  cfg.sensor.seed = 77;
  OracleEstimator a, b;
  const auto ra = run_episode(plant, 120.0, a, 45.0, cfg);
  const auto rb = run_episode(plant, 120.0, b, 45.0, cfg);
  EXPECT_EQ(ra.states, rb.states);
  EXPECT_EQ(ra.frames, rb.frames);
}
