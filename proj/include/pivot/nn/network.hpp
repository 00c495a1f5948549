#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "pivot/nn/model.hpp"

namespace pivot::nn {

/// Per-step estimates in degrees and degrees/s. Steps before `first_step` have no output
/// (MLP warm-up); the vectors hold T - first_step entries.
struct Prediction {
  std::vector<double> alpha;
  std::vector<double> omega;
  OutputMode mode = OutputMode::Both;
  int first_step = 0;
};

/// A sequence is T rows of input_size raw channels.
using Sequence = Eigen::MatrixXd;

/// Time-major batch of equal-length sequences.
struct Batch {
  std::vector<Eigen::MatrixXd> inputs;  ///< T entries of input_size x B raw frames
  Eigen::MatrixXd alpha;                ///< T x B, degrees
  Eigen::MatrixXd omega;                ///< T x B, degrees/s

  int steps() const { return static_cast<int>(inputs.size()); }
  int size() const { return inputs.empty() ? 0 : static_cast<int>(inputs.front().cols()); }
};

/// Build a batch of one from a T x input_size sequence and its targets.
Batch single_batch(const Sequence& seq, std::span<const double> alpha, std::span<const double> omega);

/// Whole-sequence inference. Dropout is applied only when `train_mode` is set, with masks
/// drawn from `rng`. Throws ShapeError on a wrong channel width or a too-short MLP input.
Prediction forward(const ModelParams& params, const Sequence& seq, bool train_mode = false,
                   std::mt19937_64* rng = nullptr);

/// Normalized outputs for a batch: one output_size x B matrix per emitted step.
std::vector<Eigen::MatrixXd> forward_batch(const ModelParams& params, const Batch& batch,
                                           bool train_mode, std::mt19937_64* rng);

/// Sum over trained outputs of mean|e| + mean e^2 on normalized targets, from first_step on.
/// `alpha` and `omega` are full-length (T) targets. Throws ShapeError on length mismatch.
double loss(const Prediction& pred, std::span<const double> alpha, std::span<const double> omega,
            const TargetNorm& norm);

struct LossGrad {
  double loss = 0.0;
  Grads grads;
};

/// Loss over every (step, member) entry of the batch, without gradients.
double batch_loss(const ModelParams& params, const Batch& batch, bool train_mode,
                  std::mt19937_64* rng);

/// Loss and its analytic gradient (backpropagation through time). One dropout mask per call.
/// Throws NumericError naming the tensor when a gradient is not finite.
LossGrad loss_and_grad(const ModelParams& params, const Batch& batch, bool train_mode,
                       std::mt19937_64* rng);

/// Gradients for one sequence, inference mode.
Grads backward(const ModelParams& params, const Sequence& seq, std::span<const double> alpha,
               std::span<const double> omega);

/// Cumulative trapezoid from 0 at 60 Hz.
std::vector<double> integrate_omega(std::span<const double> omega, double rate = 60.0);
/// Central difference times `rate`, one-sided at the ends. A single sample gives 0.
std::vector<double> differentiate_alpha(std::span<const double> alpha, double rate = 60.0);

struct Estimate {
  double alpha = 0.0;
  double omega = 0.0;
};

/// Frame-by-frame inference at 60 Hz. Recurrent models carry hidden state; the MLP keeps a
/// ring of the last window frames and returns nothing until it is full. For single-output
/// models the missing quantity is recovered causally (running trapezoid / backward difference).
class StreamingEstimator {
 public:
  explicit StreamingEstimator(const ModelParams& params);

  /// Raw normalized outputs of the network for this frame, as forward() computes them.
  std::optional<Eigen::VectorXd> step_raw(std::span<const double> frame);
  std::optional<Estimate> step(std::span<const double> frame);
  void reset();

 private:
  const ModelParams* params_;
  std::vector<Eigen::MatrixXd> h_;
  std::vector<Eigen::MatrixXd> c_;
  std::deque<Eigen::VectorXd> window_;
  long steps_ = 0;
  double last_alpha_ = 0.0;
  double last_omega_ = 0.0;
};

}  // namespace pivot::nn
