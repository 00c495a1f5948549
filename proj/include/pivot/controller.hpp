#pragma once

#include <limits>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "pivot/nn/model.hpp"
#include "pivot/nn/network.hpp"
#include "pivot/sim.hpp"
#include "pivot/tactile.hpp"

namespace pivot {

struct ControllerConfig {
  double eps_alpha = 1.0;   ///< degrees
  double omega_min = 20.0;  ///< degrees/s
  double t_wait = 0.75;     ///< s between openings
  double d = 0.83;          ///< s of forward prediction
  int open_step = 2;        ///< increments per opening
  int close_cmd = 255;

  /// Throws RangeError unless every field is positive and close_cmd is a valid command.
  void validate() const;
};

enum class Phase { Running, Closing, Done, Failed };
enum class Action { Hold, Open, Close };

std::string_view to_string(Phase p);
std::string_view to_string(Action a);

struct ControllerState {
  double goal = 0.0;  ///< relative degrees
  double t_prev = -std::numeric_limits<double>::infinity();
  int current_cmd = 0;
  Phase phase = Phase::Running;

  bool operator==(const ControllerState&) const = default;
};

/// Throws RangeError unless goal is in (0, 180] and the command in 0..255.
ControllerState make_controller(double goal, int initial_cmd);

/// alpha + d * omega.
double forward_predict(double alpha, double omega, double d);

struct ControlOutput {
  ControllerState state;
  int cmd = 0;
  Action action = Action::Hold;
};

/// One pass of the grip loop. Outside Running the state is returned unchanged with a hold.
ControlOutput control_step(const ControllerState& cs, const nn::Estimate& est, double t_now,
                           const ControllerConfig& cfg);

/// Source of (alpha, omega) for the controller, fed one tick at a time.
class Estimator {
 public:
  virtual ~Estimator() = default;
  virtual void reset() = 0;
  /// `truth` is the simulator state for this tick; learned estimators only look at `frame`.
  virtual nn::Estimate estimate(const SimState& truth, const TactileFrame& frame) = 0;
  virtual std::string name() const = 0;
};

/// Reads the simulator's ground truth.
class OracleEstimator final : public Estimator {
 public:
  void reset() override {}
  nn::Estimate estimate(const SimState& truth, const TactileFrame& frame) override;
  std::string name() const override { return "oracle"; }
};

/// Streams tactile frames through a trained network. Returns zeros until the model emits.
class ModelEstimator final : public Estimator {
 public:
  explicit ModelEstimator(nn::ModelParams params);
  void reset() override;
  nn::Estimate estimate(const SimState& truth, const TactileFrame& frame) override;
  std::string name() const override;

 private:
  nn::ModelParams params_;
  nn::StreamingEstimator stream_;
};

/// Always reports the same estimate. Used to provoke stuck failures.
class ConstantEstimator final : public Estimator {
 public:
  ConstantEstimator(double alpha, double omega) : value_{alpha, omega} {}
  void reset() override {}
  nn::Estimate estimate(const SimState&, const TactileFrame&) override { return value_; }
  std::string name() const override { return "constant"; }

 private:
  nn::Estimate value_;
};

enum class FailureKind { None, Dropped, Stuck, Timeout };
std::string_view to_string(FailureKind f);

struct EpisodeConfig {
  ControllerConfig controller;
  EpisodeTiming timing;
  SensorConfig sensor;
  double stuck_window_s = 2.0;
  int hold_margin = 6;  ///< initial grip: slip threshold plus this many increments
};

struct TraceRow {
  double t = 0.0;
  double alpha_gt = 0.0;
  double omega_gt = 0.0;
  double alpha_est = 0.0;
  double omega_est = 0.0;
  int cmd = 0;  ///< command in force after this tick's decision
  Phase phase = Phase::Running;
  Action action = Action::Hold;
};

struct EpisodeResult {
  double goal = 0.0;
  double final_alpha_gt = 0.0;
  double target_error = 0.0;
  FailureKind failure = FailureKind::None;
  long close_tick = -1;
  std::vector<TraceRow> trace;
  std::vector<SimState> states;      ///< tick-aligned with trace
  std::vector<TactileFrame> frames;  ///< tick-aligned with trace
};

/// Run the grip loop at 60 Hz: plant, sensor, estimator, controller. Holds for the initial
/// period, then follows the controller until the close has settled (plus the terminal hold)
/// or a failure triggers. Throws RangeError for a goal outside (0, 180].
EpisodeResult run_episode(const Plant& plant, double phi_start, Estimator& estimator, double goal,
                          const EpisodeConfig& cfg = {});

}  // namespace pivot
