#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "pivot/controller.hpp"
#include "pivot/dataset.hpp"
#include "pivot/nn/model.hpp"
#include "pivot/nn/training.hpp"

namespace pivot {

/// IS = [0, is_end), DR = [is_end, dr_end), SS = [dr_end, T).
struct SegmentBounds {
  int is_end = 0;
  int dr_end = 0;
  bool operator==(const SegmentBounds&) const = default;
};

enum class Segment { IS, DR, SS };
inline constexpr std::array<Segment, 3> kSegments = {Segment::IS, Segment::DR, Segment::SS};
std::string_view to_string(Segment s);

/// is_end: first tick of the first run of `hold` consecutive ticks with |omega| > threshold.
/// dr_end: last tick of the final such run plus `hold`, capped at T.
/// No such run: is_end = dr_end = T. Throws RangeError on an empty series.
SegmentBounds segment(std::span<const double> omega_gt, double threshold = 5.0, int hold = 3);

/// Angle and velocity MAE of one segment; nullopt when the segment has no evaluated ticks.
struct SegmentMae {
  std::optional<double> angle;
  std::optional<double> velocity;
  bool operator==(const SegmentMae&) const = default;
};

using SegmentMaes = std::array<SegmentMae, 3>;

/// Predictions cover ticks [offset, T) of the ground truth (MLP warm-up); segment ticks before
/// `offset` are not evaluated. Throws ShapeError on length mismatch.
SegmentMaes mae_by_segment(std::span<const double> pred_alpha, std::span<const double> pred_omega,
                           std::span<const double> gt_alpha, std::span<const double> gt_omega,
                           const SegmentBounds& bounds, int offset = 0);

/// Pooled absolute-error sums per segment; combine sequences before taking the mean.
struct SegmentErrorSums {
  std::array<double, 3> angle{};
  std::array<double, 3> velocity{};
  std::array<long, 3> count{};

  void add(std::span<const double> pred_alpha, std::span<const double> pred_omega,
           std::span<const double> gt_alpha, std::span<const double> gt_omega, const SegmentBounds& bounds,
           int offset = 0);
  void merge(const SegmentErrorSums& other);
  SegmentMaes mae() const;
};

/// Pooled per-segment MAE of a model over whole test sequences.
SegmentMaes evaluate_model(const nn::ModelParams& params, std::span<const nn::TrainingSample> samples);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  ///< sample standard deviation, 0 for a single value
  int n = 0;
  bool operator==(const MeanStd&) const = default;
};

/// Empty input gives n = 0.
MeanStd mean_std(std::span<const double> values);

/// Per-segment statistics across runs; a segment absent from every run stays n = 0.
struct SegmentSummary {
  std::array<MeanStd, 3> angle;
  std::array<MeanStd, 3> velocity;
};

SegmentSummary summarize(std::span<const SegmentMaes> runs);

struct StudyRow {
  std::string label;
  int train_sequences = 0;
  int test_sequences = 0;
  int excluded = 0;  ///< sequences too short for the model
  SegmentSummary summary;
  std::vector<double> per_sequence_angle_mae;  ///< first run, one value per test sequence
};

struct StudyConfig {
  nn::Hyper hyper;
  nn::TrainConfig train;
  int repeats = 3;  ///< trainings per condition with seeds train.seed + k
  int jobs = 1;
};

/// One train/eval cycle per held-out object (leave-one-object-out).
std::vector<StudyRow> unseen_object_study(const StudyConfig& cfg, const Dataset& ds);

/// Box->Box, Box->Cylinder, Cylinder->Cylinder, Cylinder->Box.
std::vector<StudyRow> class_transfer_study(const StudyConfig& cfg, const Dataset& ds);

/// Random 80/20 split and one evaluation per repeat; the row used by the unseen-data table.
StudyRow random_split_study(const StudyConfig& cfg, const Dataset& ds, std::uint64_t split_seed);

/// One MLP per window on the same random 80/20 split. Sequences shorter than a window are
/// excluded for that row and counted in `excluded`.
std::vector<StudyRow> window_ablation(const StudyConfig& cfg, const Dataset& ds,
                                      std::span<const int> windows = std::array<int, 5>{5, 15, 30, 60, 90},
                                      std::uint64_t split_seed = 0);

using EstimatorFactory = std::function<std::unique_ptr<Estimator>()>;

struct ClosedLoopConfig {
  std::vector<std::string> objects;
  std::vector<double> approach_deg{-30.0, 0.0, 30.0};
  std::vector<double> perturb_deg{0.0};
  std::vector<double> goals_deg{30.0, 45.0, 60.0};
  int trials = 1;
  std::uint64_t seed = 0;  ///< sensor noise seeds derive from this
  EpisodeConfig episode;
  GripperModel gripper;
  SimOptions sim;
  FrictionVariant friction = FrictionVariant::Nominal;
  int jobs = 1;
};

struct EpisodeSummary {
  std::string object;
  double approach_deg = 0.0;
  double perturb_deg = 0.0;
  double goal_deg = 0.0;
  int trial = 0;
  std::uint64_t seed = 0;
  double final_alpha = 0.0;
  double target_error = 0.0;
  FailureKind failure = FailureKind::None;
  double duration_s = 0.0;
};

struct ClosedLoopReport {
  std::string label;
  std::vector<EpisodeSummary> episodes;
  MeanStd target_error;          ///< over every episode
  MeanStd target_error_success;  ///< over episodes without failure
  double failure_rate = 0.0;     ///< percent
  SegmentMaes tracking;          ///< estimator vs simulator truth, pooled over episodes
};

/// Grid objects x approach x perturb x goal x trials, in that order.
std::vector<Scenario> closed_loop_grid(const ClosedLoopConfig& cfg);

ClosedLoopReport closed_loop_suite(const EstimatorFactory& make_estimator, const ClosedLoopConfig& cfg,
                                   const std::string& label = "");

/// Runs the estimator in the loop on the grid and returns the annotated sequences.
Dataset collect_in_loop(const EstimatorFactory& make_estimator, const ClosedLoopConfig& cfg);

struct FinetuneConfig {
  ClosedLoopConfig eval;         ///< evaluation grid (before and after)
  ClosedLoopConfig collection;   ///< in-loop data grid; seed should differ from eval.seed
  nn::TrainConfig train;         ///< epochs default to 20 in make_finetune_config
};

FinetuneConfig make_finetune_config(const std::vector<std::string>& objects, std::uint64_t seed);

struct FinetuneResult {
  ClosedLoopReport before;
  ClosedLoopReport after;
  nn::ModelParams tuned;
  int in_loop_sequences = 0;
};

/// Collect in-loop data with the base model, continue training on it, and re-run the grid.
FinetuneResult finetune_experiment(const nn::ModelParams& base, const FinetuneConfig& cfg);

/// Delimiter-separated report tables.
void write_study_table(const std::vector<StudyRow>& rows, const std::filesystem::path& path);
void write_closed_loop_table(const std::vector<ClosedLoopReport>& reports, const std::filesystem::path& path);
void write_episode_table(const ClosedLoopReport& report, const std::filesystem::path& path);
/// Per-tick traces for plotting: id, t, alpha_gt, alpha_pred, omega_gt, omega_pred, segment.
void write_prediction_traces(const nn::ModelParams& params, std::span<const nn::TrainingSample> samples,
                             const std::filesystem::path& path);

}  // namespace pivot
