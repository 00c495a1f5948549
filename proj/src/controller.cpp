#include "pivot/controller.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "pivot/errors.hpp"

namespace pivot {

void ControllerConfig::validate() const {
  if (!(eps_alpha > 0.0) || !(omega_min > 0.0) || !(t_wait > 0.0) || !(d > 0.0) || open_step <= 0) {
    throw RangeError("controller parameters must all be positive");
  }
  if (close_cmd < 0 || close_cmd > 255) throw RangeError("close_cmd must be in 0..255");
}

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::Running: return "running";
    case Phase::Closing: return "closing";
    case Phase::Done: return "done";
    case Phase::Failed: return "failed";
  }
  return "?";
}

std::string_view to_string(Action a) {
  switch (a) {
    case Action::Hold: return "hold";
    case Action::Open: return "open";
    case Action::Close: return "close";
  }
  return "?";
}

std::string_view to_string(FailureKind f) {
  switch (f) {
    case FailureKind::None: return "none";
    case FailureKind::Dropped: return "dropped";
    case FailureKind::Stuck: return "stuck";
    case FailureKind::Timeout: return "timeout";
  }
  return "?";
}

ControllerState make_controller(double goal, int initial_cmd) {
  if (!(goal > 0.0 && goal <= 180.0)) {
    throw RangeError("goal must be in (0, 180] degrees, got " + std::to_string(goal));
  }
  if (initial_cmd < 0 || initial_cmd > 255) throw RangeError("grip command must be in 0..255");
  ControllerState cs;
  cs.goal = goal;
  cs.current_cmd = initial_cmd;
  return cs;
}

double forward_predict(double alpha, double omega, double d) { return alpha + d * omega; }

ControlOutput control_step(const ControllerState& cs, const nn::Estimate& est, double t_now,
                           const ControllerConfig& cfg) {
  ControlOutput out{cs, cs.current_cmd, Action::Hold};
  if (cs.phase != Phase::Running) return out;
  const double error = std::abs(forward_predict(est.alpha, est.omega, cfg.d) - cs.goal);
  if (error <= cfg.eps_alpha) {
    out.state.phase = Phase::Closing;
    out.state.current_cmd = cfg.close_cmd;
    out.cmd = cfg.close_cmd;
    out.action = Action::Close;
  } else if (est.omega < cfg.omega_min && t_now - cs.t_prev > cfg.t_wait) {
    out.state.current_cmd = std::max(0, cs.current_cmd - cfg.open_step);
    out.state.t_prev = t_now;
    out.cmd = out.state.current_cmd;
    out.action = Action::Open;
  }
  return out;
}

nn::Estimate OracleEstimator::estimate(const SimState& truth, const TactileFrame&) {
  return {truth.alpha, truth.omega};
}

ModelEstimator::ModelEstimator(nn::ModelParams params) : params_(std::move(params)), stream_(params_) {}

void ModelEstimator::reset() { stream_.reset(); }

nn::Estimate ModelEstimator::estimate(const SimState&, const TactileFrame& frame) {
  const auto e = stream_.step(frame.channels);
  return e ? *e : nn::Estimate{};
}

std::string ModelEstimator::name() const { return std::string(nn::to_string(params_.hyper.arch)); }

EpisodeResult run_episode(const Plant& plant, double phi_start, Estimator& estimator, double goal,
                          const EpisodeConfig& cfg) {
  cfg.controller.validate();
  const int cmd0 = hold_command(plant, phi_start, cfg.hold_margin);
  ControllerState cs = make_controller(goal, cmd0);
  SimState s = initial_state(plant, phi_start, cmd0);
  estimator.reset();
  std::mt19937_64 rng(cfg.sensor.seed);

  const double dt = cfg.timing.dt;
  const long hold_ticks = std::lround(cfg.timing.initial_hold_s / dt);
  const long terminal_ticks = std::lround(cfg.timing.terminal_hold_s / dt);
  const long max_ticks = std::lround(cfg.timing.max_duration_s / dt);
  const long stuck_ticks = std::lround(cfg.stuck_window_s / dt);

  EpisodeResult res;
  res.goal = goal;
  int cmd = cmd0;
  long stuck_run = 0;
  long settled_at = -1;
  while (true) {
    const TactileFrame frame = render_frame(s, plant, cfg.sensor, rng);
    const nn::Estimate est = estimator.estimate(s, frame);
    Action action = Action::Hold;
    if (s.tick >= hold_ticks && cs.phase == Phase::Running) {
      const ControlOutput out = control_step(cs, est, s.t, cfg.controller);
      cs = out.state;
      cmd = out.cmd;
      action = out.action;
      if (action == Action::Close) {
        res.close_tick = s.tick;
      } else {
        stuck_run = (est.omega > cfg.controller.omega_min && s.at_rest) ? stuck_run + 1 : 0;
        const double normal = grip_normal_force(plant.object, s.grip_width, plant.gripper);
        const double miss = std::abs(forward_predict(est.alpha, est.omega, cfg.controller.d) - goal);
        if (stuck_run >= stuck_ticks) {
          res.failure = FailureKind::Stuck;
        } else if ((normal <= 0.0 || s.phi <= 0.0) && miss > cfg.controller.eps_alpha) {
          res.failure = FailureKind::Dropped;
        }
        if (res.failure != FailureKind::None) cs.phase = Phase::Failed;
      }
    }
    res.trace.push_back({s.t, s.alpha, s.omega, est.alpha, est.omega, cmd, cs.phase, action});
    res.states.push_back(s);
    res.frames.push_back(frame);
    if (cs.phase == Phase::Failed) break;

    if (cs.phase == Phase::Closing) {
      const bool settled = s.at_rest && s.pending.empty() && std::abs(s.grip_width - s.width_target) < 1e-12;
      if (settled_at < 0 && settled) settled_at = s.tick;
      if (settled_at >= 0 && s.tick - settled_at >= terminal_ticks) {
        cs.phase = Phase::Done;
        res.trace.back().phase = Phase::Done;
        break;
      }
    }
    if (s.tick >= max_ticks) {
      res.failure = FailureKind::Timeout;
      cs.phase = Phase::Failed;
      res.trace.back().phase = Phase::Failed;
      break;
    }
    s = step(s, cmd, dt, plant);
  }
  res.final_alpha_gt = s.alpha;
  res.target_error = std::abs(s.alpha - goal);
  return res;
}

}  // namespace pivot
