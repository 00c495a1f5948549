#include "pivot/filters.hpp"

#include <cmath>
#include <string>

#include "pivot/errors.hpp"

namespace pivot {

KalmanParams KalmanParams::ground_truth_default() {
  KalmanParams p;
  p.A << 1.0, 1.0 / 60.0, 0.0, 1.0;
  p.C << 1.0, 0.0;
  p.Q << 3.25e-6, 6.5e-5, 6.5e-5, 1.3e-3;
  p.R = 1e-5;
  p.Sigma0 << 1e-5, 0.0, 0.0, 1e-5;
  return p;
}

KalmanState kalman_init(double z0, const KalmanParams& p) {
  return {Eigen::Vector2d(z0, 0.0), p.Sigma0};
}

KalmanState kalman_step(const KalmanState& s, double z, const KalmanParams& p) {
  if (!std::isfinite(z) || !s.x.allFinite() || !s.Sigma.allFinite()) {
    throw NumericError("kalman_step: non-finite input");
  }
  const Eigen::Vector2d x_pred = p.A * s.x;
  const Eigen::Matrix2d sigma_pred = p.A * s.Sigma * p.A.transpose() + p.Q;
  const double innovation_var = (p.C * sigma_pred * p.C.transpose())(0, 0) + p.R;
  const Eigen::Vector2d gain = sigma_pred * p.C.transpose() / innovation_var;

  KalmanState out;
  out.x = x_pred + gain * (z - (p.C * x_pred)(0, 0));
  out.Sigma = (Eigen::Matrix2d::Identity() - gain * p.C) * sigma_pred;
  // Remove round-off asymmetry.
  out.Sigma = 0.5 * (out.Sigma + out.Sigma.transpose()).eval();
  return out;
}

std::vector<double> kalman_filter_series(std::span<const double> z, const KalmanParams& p) {
  std::vector<double> out;
  if (z.empty()) return out;
  out.reserve(z.size());
  KalmanState s = kalman_init(z[0], p);
  out.push_back(s.x[0]);
  for (std::size_t i = 1; i < z.size(); ++i) {
    s = kalman_step(s, z[i], p);
    out.push_back(s.x[0]);
  }
  return out;
}

std::vector<double> derivative_velocity(std::span<const double> alpha, double rate) {
  const std::size_t n = alpha.size();
  if (n < 2) throw RangeError("derivative_velocity: need at least 2 samples");
  std::vector<double> v(n);
  v[0] = (alpha[1] - alpha[0]) * rate;
  v[n - 1] = (alpha[n - 1] - alpha[n - 2]) * rate;
  for (std::size_t i = 1; i + 1 < n; ++i) v[i] = 0.5 * (alpha[i + 1] - alpha[i - 1]) * rate;
  return v;
}

std::vector<double> triangular_smooth(std::span<const double> series, int window) {
  if (window < 1 || window % 2 == 0) {
    throw RangeError("triangular_smooth: window must be odd and >= 1, got " + std::to_string(window));
  }
  const long half = window / 2;
  const double peak = half + 1.0;
  const long n = static_cast<long>(series.size());
  std::vector<double> out(series.size());
  for (long i = 0; i < n; ++i) {
    // weighted offsets from the centre sample, so a constant input comes back bit-exact
    double acc = 0.0;
    double wsum = 0.0;
    for (long k = -half; k <= half; ++k) {
      const long j = i + k;
      if (j < 0 || j >= n) continue;
      const double w = peak - std::abs(static_cast<double>(k));
      acc += w * (series[j] - series[i]);
      wsum += w;
    }
    out[i] = series[i] + acc / wsum;
  }
  return out;
}

AnnotatedTrack annotate_ground_truth(std::span<const double> raw_alpha, const KalmanParams& p,
                                     double rate) {
  if (raw_alpha.empty()) throw RangeError("annotate_ground_truth: empty series");
  AnnotatedTrack track;
  track.alpha = kalman_filter_series(raw_alpha, p);
  if (track.alpha.size() < 2) {
    track.omega.assign(track.alpha.size(), 0.0);
    return track;
  }
  track.omega = triangular_smooth(derivative_velocity(track.alpha, rate), 9);
  return track;
}

}  // namespace pivot
