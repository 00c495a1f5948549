#pragma once

#include <functional>
#include <vector>

#include "pivot/objects.hpp"

namespace pivot {

/// Parallel-jaw gripper with Robotiq-style 8-bit position commands.
struct GripperModel {
  double max_width_mm = 85.0;
  int increments = 256;
  double resolution_mm = 0.33;
  double close_latency_s = 0.83;
  double open_latency_s = 0.1;
  double close_slew_mm_s = 150.0;
  double open_slew_mm_s = 2.0;
  double pad_stiffness_n_per_mm = 0.25;
  /// Fingertip sensor thickness on each finger; the finger gap is width - 2 * this.
  double pad_thickness_mm = 2.5;
  /// Kinetic friction grows as mu_k * (1 + |omega| / slip_rate_ref) with slip speed.
  double slip_rate_ref_deg_s = 60.0;

  bool operator==(const GripperModel&) const = default;
};

struct SimOptions {
  int substeps = 60;
  double omega_eps_deg_s = 1.0;  ///< stiction re-latch speed
  bool clamp_at_hanging = true;  ///< hard stop at phi = 0; off only for pendulum diagnostics
  double gravity = 9.81;

  bool operator==(const SimOptions&) const = default;
};

/// Everything the integrator needs that stays fixed over an episode.
struct Plant {
  ObjectProfile object;
  GripperModel gripper;
  double approach_deg = 0.0;  ///< scales the gravity lever arm by cos(approach)
  SimOptions options;
};

struct PendingCommand {
  double apply_at = 0.0;
  int cmd = 0;
  bool operator==(const PendingCommand&) const = default;
};

/// Instantaneous plant state. Angles in degrees, omega = d(alpha)/dt in degrees/s.
struct SimState {
  double alpha = 0.0;      ///< phi_start - phi
  double phi = 90.0;       ///< long axis from hanging-down vertical
  double phi_start = 90.0;
  double omega = 0.0;
  double grip_width = 0.0;    ///< mm
  double width_target = 0.0;  ///< mm, last applied command
  int grip_cmd = 0;           ///< most recent command, possibly still pending
  double t = 0.0;
  long tick = 0;
  bool at_rest = true;
  std::vector<PendingCommand> pending;

  bool operator==(const SimState&) const = default;
};

/// Linear command-to-width map: 85 * (255 - c) / 255. Throws RangeError outside 0..255.
double width_from_command(int cmd, const GripperModel& g = {});

/// Linear pad spring: stiffness * max(0, thickness - (width - 2 * pad_thickness)).
double grip_normal_force(const ObjectProfile& object, double grip_width_mm, const GripperModel& g);

/// m g r sin(phi), with r scaled by cos(approach). Positive drives phi toward 0.
double gravity_torque(const ObjectProfile& object, double phi_deg, double approach_deg = 0.0,
                      double gravity = 9.81);

/// Coulomb cap over both fingertips: 2 mu N r, mu = mu_static at rest, mu_kinetic otherwise.
double friction_torque_cap(const ObjectProfile& object, double normal_force, bool at_rest);

/// Sliding friction torque magnitude at slip speed |omega|.
double kinetic_friction_torque(const ObjectProfile& object, double normal_force,
                               double omega_deg_s, const GripperModel& g);

/// Kinetic plus potential energy (zero potential at the pivot height), joules.
double mechanical_energy(const Plant& plant, const SimState& s);

/// At rest at `phi_start`, gripper settled at `cmd`.
SimState initial_state(const Plant& plant, double phi_start_deg, int cmd);

/// Advance one tick. A change of `cmd` is scheduled after the close/open latency.
/// Throws NumericError when the state becomes non-finite.
SimState step(const SimState& state, int cmd, double dt, const Plant& plant);

/// Largest (tightest) command at which static friction cannot hold the object at `phi`.
/// Returns -1 when even a fully open gripper holds it (phi = 0).
int slip_command(const Plant& plant, double phi_deg);

/// Slip threshold plus `margin` increments. Throws RangeError if the gripper cannot hold the object.
int hold_command(const Plant& plant, double phi_deg, int margin = 6);

struct PolicyOutput {
  int cmd = 0;
  bool done = false;  ///< policy finished; the episode ends once the plant settles
};

using Policy = std::function<PolicyOutput(const SimState&)>;

struct EpisodeTiming {
  double dt = 1.0 / 60.0;
  double initial_hold_s = 0.5;
  double terminal_hold_s = 1.0;
  double max_duration_s = 30.0;
};

struct RawTrajectory {
  std::vector<SimState> states;  ///< tick-aligned, states[0] is the initial state
  bool timed_out = false;
};

/// Hold for the initial period, run the policy, and once it reports done and the
/// plant is settled, record the terminal hold.
RawTrajectory simulate_episode(const Plant& plant, const SimState& init, const Policy& policy,
                               const EpisodeTiming& timing = {});

/// Keeps the initial command forever.
Policy hold_policy();
/// Switches to `open_cmd` once and reports done.
Policy open_once_policy(int open_cmd);

}  // namespace pivot
