#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "pivot/controller.hpp"
#include "pivot/nn/training.hpp"
#include "pivot/objects.hpp"
#include "pivot/scenario.hpp"
#include "pivot/sim.hpp"
#include "pivot/tactile.hpp"

namespace pivot {

inline constexpr int kDatasetMajorVersion = 1;
inline constexpr int kDatasetMinorVersion = 0;

struct CollectionPlan {
  Protocol protocol = Protocol::RotateToStop;
  std::vector<double> approach_deg;
  std::vector<double> perturb_deg;
  std::vector<double> stop_deg;  ///< AngleGoal only
  int repeats = 1;
  std::vector<FrictionVariant> friction{FrictionVariant::Nominal};
  std::uint64_t seed = 0;

  /// Throws RangeError: empty sets, repeats < 1, AngleGoal without stop angles.
  void validate() const;
  bool operator==(const CollectionPlan&) const = default;
};

/// approach {-30,-15,0,15,30} x perturb {-45,0,15,30,45,60}, once.
CollectionPlan rotate_to_stop_plan(std::uint64_t seed = 0);
/// approach {-15,0} x perturb {0,30,45,60} x stop {15,30,45}, twice.
CollectionPlan angle_goal_plan(std::uint64_t seed = 0);

/// Cartesian product objects x friction x approach x perturb x stop x repeats, in that order.
/// Scenario seeds are derived from the plan seed and the position in the product.
/// Throws RangeError for an empty or unknown object set.
std::vector<Scenario> generate_plan(const CollectionPlan& plan, std::span<const std::string> objects);

struct SequenceMeta {
  std::string id;
  Scenario scenario;
  double sample_rate = 60.0;
  int open_cmd = -1;  ///< RotateToStop opening command, -1 otherwise

  bool operator==(const SequenceMeta&) const = default;
};

struct TrajectorySequence {
  SequenceMeta meta;
  std::vector<TactileFrame> frames;
  std::vector<int> grip_cmd;
  std::vector<double> alpha_gt;
  std::vector<double> omega_gt;

  int length() const { return static_cast<int>(frames.size()); }
  /// Throws ShapeError when the per-tick arrays disagree in length.
  void validate() const;
  bool operator==(const TrajectorySequence&) const = default;
};

struct CollectStats {
  int requested = 0;
  int kept = 0;
  std::map<std::string, int> filtered;  ///< reason -> count

  bool operator==(const CollectStats&) const = default;
};

struct Dataset {
  std::vector<CollectionPlan> plans;
  std::vector<TrajectorySequence> sequences;
  CollectStats stats;

  /// Distinct object names in first-appearance order.
  std::vector<std::string> objects() const;
  bool operator==(const Dataset&) const = default;
};

struct CollectOptions {
  int jobs = 1;
  GripperModel gripper;
  SimOptions sim;
  SensorConfig sensor;     ///< seed is replaced per scenario
  EpisodeConfig episode;   ///< AngleGoal controller settings
  int hold_margin = 6;     ///< increments above the slip threshold while held
  int open_below_slip = 4; ///< RotateToStop opens to slip threshold minus this
  double goal_tolerance_deg = 10.0;  ///< AngleGoal episodes missing the goal by more are filtered
};

/// Per-scenario result before filtering.
struct CollectOutcome {
  bool kept = false;
  std::string reason;  ///< why it was filtered
  TrajectorySequence sequence;
};

/// Simulate one scenario, render it and annotate the ground truth.
CollectOutcome collect_scenario(const Scenario& sc, const std::string& id, const CollectOptions& opt);

/// Run every scenario (in parallel with opt.jobs workers) and keep the valid ones, in plan order.
/// A scenario that throws is filtered with its message as the reason.
Dataset collect(const CollectionPlan& plan, std::span<const std::string> objects, const CollectOptions& opt = {});

/// Concatenate datasets. Throws IntegrityError on duplicate sequence ids.
Dataset merge(std::span<const Dataset> parts);

/// Build an annotated sequence from a closed-loop episode (estimator in the loop).
TrajectorySequence sequence_from_episode(const EpisodeResult& ep, const Scenario& sc, const std::string& id);

/// Directory layout: manifest.json, channels.csv, sequences/<id>.csv. The manifest is written last.
void save_dataset(const Dataset& ds, const std::filesystem::path& dir);
/// Throws IntegrityError (version, counts, missing files) or ParseError (file and line).
Dataset load_dataset(const std::filesystem::path& dir);

/// Column header of sequence files: t, c000..c141, grip_cmd, alpha_gt, omega_gt.
std::vector<std::string> sequence_columns();

/// Per-tick episode record in the sequence format plus alpha_est, omega_est, phase, action.
void save_episode_trace(const EpisodeResult& ep, const std::filesystem::path& path);

struct Random80_20 {
  std::uint64_t seed = 0;
};
struct LeaveOneObjectOut {
  std::string object;
};
/// Same class on both sides splits that class 80/20 with `seed`.
struct ClassTransfer {
  ObjectClass train = ObjectClass::Box;
  ObjectClass test = ObjectClass::Cylinder;
  std::uint64_t seed = 0;
};
using SplitStrategy = std::variant<Random80_20, LeaveOneObjectOut, ClassTransfer>;

struct SplitIndices {
  std::vector<int> train;
  std::vector<int> test;
};

/// Partition at sequence granularity. Throws RangeError for an object or class with no sequences.
SplitIndices split(const Dataset& ds, const SplitStrategy& strategy);

/// Throws IntegrityError when the two index sets share a sequence id.
void assert_no_leakage(const Dataset& ds, const SplitIndices& s);

/// Frames as a T x 142 matrix with targets, for the estimators.
nn::TrainingSample to_sample(const TrajectorySequence& seq);
std::vector<nn::TrainingSample> to_samples(const Dataset& ds, std::span<const int> indices);

}  // namespace pivot
