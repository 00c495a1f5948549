#include "pivot/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "pivot/errors.hpp"

namespace pivot {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kRadToDeg = 180.0 / std::numbers::pi;
constexpr double kTimeTol = 1e-9;

// Fourth-order Yoshida composition of leapfrog.
const double kYoshidaW1 = 1.0 / (2.0 - std::cbrt(2.0));
const double kYoshidaW0 = -std::cbrt(2.0) / (2.0 - std::cbrt(2.0));

void check_command(int cmd) {
  if (cmd < 0 || cmd > 255) {
    throw RangeError("grip command " + std::to_string(cmd) + " outside 0..255");
  }
}

struct Dynamics {
  double inertia;      // kg m^2
  double gravity_mgr;  // N m, lever already scaled by cos(approach)
};

Dynamics dynamics_of(const Plant& p) {
  return {p.object.pivot_inertia(),
          p.object.mass * p.options.gravity * p.object.com_offset *
              std::cos(p.approach_deg * kDegToRad)};
}

// Exact solution of d|w|/dt = -(a + b|w|) over `tau`; returns 0 if the slip stops.
double apply_friction(double w, double a, double b, double tau) {
  if (w == 0.0 || a <= 0.0) return w;
  const double mag = std::abs(w);
  double next;
  if (b > 0.0) {
    const double ratio = a / b;
    next = (mag + ratio) * std::exp(-b * tau) - ratio;
  } else {
    next = mag - a * tau;
  }
  if (next <= 0.0) return 0.0;
  return std::copysign(next, w);
}

// Conservative pendulum update, phi in rad, w = -dphi/dt in rad/s.
void leapfrog(double& phi, double& w, double tau, const Dynamics& d) {
  phi -= 0.5 * tau * w;
  w += tau * d.gravity_mgr * std::sin(phi) / d.inertia;
  phi -= 0.5 * tau * w;
}

void yoshida(double& phi, double& w, double h, const Dynamics& d) {
  leapfrog(phi, w, kYoshidaW1 * h, d);
  leapfrog(phi, w, kYoshidaW0 * h, d);
  leapfrog(phi, w, kYoshidaW1 * h, d);
}

bool finite_state(const SimState& s) {
  return std::isfinite(s.phi) && std::isfinite(s.omega) && std::isfinite(s.grip_width) &&
         std::isfinite(s.t) && std::isfinite(s.alpha);
}

}  // namespace

double width_from_command(int cmd, const GripperModel& g) {
  check_command(cmd);
  const double top = static_cast<double>(g.increments - 1);
  return g.max_width_mm * (top - cmd) / top;
}

double grip_normal_force(const ObjectProfile& object, double grip_width_mm, const GripperModel& g) {
  const double gap = grip_width_mm - 2.0 * g.pad_thickness_mm;
  return g.pad_stiffness_n_per_mm * std::max(0.0, object.grip_thickness_mm() - gap);
}

double gravity_torque(const ObjectProfile& object, double phi_deg, double approach_deg,
                      double gravity) {
  return object.mass * gravity * object.com_offset * std::cos(approach_deg * kDegToRad) *
         std::sin(phi_deg * kDegToRad);
}

double friction_torque_cap(const ObjectProfile& object, double normal_force, bool at_rest) {
  const double mu = at_rest ? object.mu_static : object.mu_kinetic;
  return 2.0 * mu * normal_force * object.pad_contact_radius;
}

double kinetic_friction_torque(const ObjectProfile& object, double normal_force,
                               double omega_deg_s, const GripperModel& g) {
  return friction_torque_cap(object, normal_force, false) *
         (1.0 + std::abs(omega_deg_s) / g.slip_rate_ref_deg_s);
}

double mechanical_energy(const Plant& plant, const SimState& s) {
  const Dynamics d = dynamics_of(plant);
  const double w = s.omega * kDegToRad;
  return 0.5 * d.inertia * w * w - d.gravity_mgr * std::cos(s.phi * kDegToRad);
}

SimState initial_state(const Plant& plant, double phi_start_deg, int cmd) {
  if (!(phi_start_deg > 0.0 && phi_start_deg <= 180.0)) {
    throw RangeError("phi_start " + std::to_string(phi_start_deg) + " outside (0, 180]");
  }
  SimState s;
  s.phi = phi_start_deg;
  s.phi_start = phi_start_deg;
  s.alpha = 0.0;
  s.omega = 0.0;
  s.grip_cmd = cmd;
  s.grip_width = width_from_command(cmd, plant.gripper);
  s.width_target = s.grip_width;
  s.at_rest = true;
  return s;
}

SimState step(const SimState& state, int cmd, double dt, const Plant& plant) {
  check_command(cmd);
  if (!(dt > 0.0)) throw RangeError("dt must be positive");

  SimState s = state;
  const GripperModel& g = plant.gripper;
  const ObjectProfile& obj = plant.object;
  const Dynamics d = dynamics_of(plant);

  if (cmd != s.grip_cmd) {
    const double latency = cmd > s.grip_cmd ? g.close_latency_s : g.open_latency_s;
    s.pending.push_back({s.t + latency, cmd});
    s.grip_cmd = cmd;
  }

  const int n_sub = std::max(1, plant.options.substeps);
  const double h = dt / n_sub;
  const double rate_ref = g.slip_rate_ref_deg_s * kDegToRad;
  double phi = s.phi * kDegToRad;
  const double phi_in = phi;
  double w = s.omega * kDegToRad;

  for (int k = 0; k < n_sub; ++k) {
    const double t_sub = s.t + k * h;
    while (!s.pending.empty() && s.pending.front().apply_at <= t_sub + kTimeTol) {
      s.width_target = width_from_command(s.pending.front().cmd, g);
      s.pending.erase(s.pending.begin());
    }
    const double gap = s.width_target - s.grip_width;
    if (gap > 0.0) {
      s.grip_width += std::min(gap, g.open_slew_mm_s * h);
    } else if (gap < 0.0) {
      s.grip_width += std::max(gap, -g.close_slew_mm_s * h);
    }

    const double normal = grip_normal_force(obj, s.grip_width, g);
    const double static_cap = friction_torque_cap(obj, normal, true);
    const double kinetic0 = friction_torque_cap(obj, normal, false);

    if (s.at_rest) {
      if (std::abs(d.gravity_mgr * std::sin(phi)) <= static_cap) continue;
      s.at_rest = false;
      w = 0.0;
    }

    const double a = kinetic0 / d.inertia;
    const double b = rate_ref > 0.0 ? a / rate_ref : 0.0;
    // friction that stops the slip inside a half-step sticks if static friction can hold
    auto sticks = [&](double before, double after) {
      return before != 0.0 && after == 0.0 && std::abs(d.gravity_mgr * std::sin(phi)) <= static_cap;
    };
    const double w0 = w;
    w = apply_friction(w, a, b, 0.5 * h);
    if (sticks(w0, w)) {
      s.at_rest = true;
      continue;
    }
    yoshida(phi, w, h, d);
    const double w1 = w;
    w = apply_friction(w, a, b, 0.5 * h);
    if (sticks(w1, w)) {
      s.at_rest = true;
      continue;
    }

    if (plant.options.clamp_at_hanging && phi < 0.0) {
      phi = 0.0;
      w = 0.0;
      s.at_rest = true;
      continue;
    }
    if (std::abs(w) * kRadToDeg < plant.options.omega_eps_deg_s &&
        std::abs(d.gravity_mgr * std::sin(phi)) <= static_cap) {
      w = 0.0;
      s.at_rest = true;
    }
  }

  // a resting object keeps its angle bit for bit; the degree round trip is not exact
  if (phi != phi_in) s.phi = phi * kRadToDeg;
  s.omega = w * kRadToDeg;
  s.alpha = s.phi_start - s.phi;
  s.t = state.t + dt;
  s.tick = state.tick + 1;
  if (!finite_state(s)) {
    throw NumericError("non-finite simulator state at t=" + std::to_string(s.t));
  }
  return s;
}

int slip_command(const Plant& plant, double phi_deg) {
  const double torque =
      std::abs(gravity_torque(plant.object, phi_deg, plant.approach_deg, plant.options.gravity));
  int last_slip = -1;
  for (int c = 0; c < plant.gripper.increments; ++c) {
    const double normal =
        grip_normal_force(plant.object, width_from_command(c, plant.gripper), plant.gripper);
    if (friction_torque_cap(plant.object, normal, true) < torque) {
      last_slip = c;
    } else {
      break;
    }
  }
  return last_slip;
}

int hold_command(const Plant& plant, double phi_deg, int margin) {
  const int slip = slip_command(plant, phi_deg);
  const int hold = slip + margin;
  if (slip >= plant.gripper.increments - 1 || hold > plant.gripper.increments - 1) {
    throw RangeError("gripper cannot hold '" + plant.object.name + "' at phi=" +
                     std::to_string(phi_deg));
  }
  return std::max(hold, 0);
}

RawTrajectory simulate_episode(const Plant& plant, const SimState& init, const Policy& policy,
                               const EpisodeTiming& timing) {
  RawTrajectory out;
  out.states.push_back(init);
  SimState s = init;
  const long hold_ticks = std::lround(timing.initial_hold_s / timing.dt);
  const long terminal_ticks = std::lround(timing.terminal_hold_s / timing.dt);
  const long max_ticks = std::lround(timing.max_duration_s / timing.dt);

  int cmd = init.grip_cmd;
  bool policy_done = false;
  long settled_at = -1;
  while (s.tick < max_ticks) {
    if (s.tick >= hold_ticks && !policy_done) {
      const PolicyOutput po = policy(s);
      cmd = po.cmd;
      policy_done = po.done;
    }
    s = step(s, cmd, timing.dt, plant);
    out.states.push_back(s);

    const bool settled = policy_done && s.at_rest && s.pending.empty() &&
                         std::abs(s.grip_width - s.width_target) < 1e-12;
    if (settled_at < 0 && settled) settled_at = s.tick;
    if (settled_at >= 0 && s.tick - settled_at >= terminal_ticks) return out;
  }
  out.timed_out = true;
  return out;
}

Policy hold_policy() {
  return [](const SimState& s) { return PolicyOutput{s.grip_cmd, true}; };
}

Policy open_once_policy(int open_cmd) {
  check_command(open_cmd);
  return [open_cmd](const SimState&) { return PolicyOutput{open_cmd, true}; };
}

}  // namespace pivot
