#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

namespace pivot {

/// Constant-velocity model over [alpha, omega] with a position-only measurement.
struct KalmanParams {
  Eigen::Matrix2d A;
  Eigen::RowVector2d C;
  Eigen::Matrix2d Q;
  double R = 0.0;
  Eigen::Matrix2d Sigma0;

  /// Values used to annotate the 60 Hz angle track.
  static KalmanParams ground_truth_default();
};

struct KalmanState {
  Eigen::Vector2d x;  ///< [alpha deg, omega deg/s]
  Eigen::Matrix2d Sigma;
};

KalmanState kalman_init(double z0, const KalmanParams& p);

/// Predict then update with measurement `z`. Throws NumericError on non-finite input.
KalmanState kalman_step(const KalmanState& s, double z, const KalmanParams& p);

/// Kalman-filtered track of a measured angle series (first sample initialises).
std::vector<double> kalman_filter_series(std::span<const double> z, const KalmanParams& p);

/// Central difference times `rate` inside, one-sided at both ends. Needs at least 2 samples.
std::vector<double> derivative_velocity(std::span<const double> alpha, double rate = 60.0);

/// Zero-phase triangular smoother. Weights (c - |k|), c = (window + 1) / 2, normalised;
/// near the edges the truncated window is renormalised. Throws RangeError for even windows.
std::vector<double> triangular_smooth(std::span<const double> series, int window = 9);

struct AnnotatedTrack {
  std::vector<double> alpha;
  std::vector<double> omega;
};

/// alpha = Kalman track of the raw angle; omega = triangular_smooth(derivative(alpha), 9).
AnnotatedTrack annotate_ground_truth(std::span<const double> raw_alpha,
                                     const KalmanParams& p = KalmanParams::ground_truth_default(),
                                     double rate = 60.0);

}  // namespace pivot
