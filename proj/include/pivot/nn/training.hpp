#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pivot/nn/model.hpp"
#include "pivot/nn/network.hpp"

namespace pivot::nn {

struct OptimizerState {
  std::vector<Eigen::MatrixXd> m;
  std::vector<Eigen::MatrixXd> v;
  long step = 0;
  double lr = 5e-4;
  double weight_decay = 1e-6;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

OptimizerState make_optimizer(const ModelParams& params, double lr = 5e-4, double weight_decay = 1e-6);

/// Bias-corrected Adam; weight_decay * theta is added to the gradient. Throws ShapeError.
void adam_step(ModelParams& params, const Grads& grads, OptimizerState& opt);

/// One labelled sequence: T x input_size frames with per-step targets.
struct TrainingSample {
  Sequence frames;
  std::vector<double> alpha;
  std::vector<double> omega;
  std::string id;
  std::string object;

  int length() const { return static_cast<int>(frames.rows()); }
};

/// Shuffle (seeded), group, and crop every member to the group's shortest length using a
/// random contiguous window. Throws RangeError on an empty dataset or batch_size < 1.
std::vector<Batch> make_batches(std::span<const TrainingSample> samples, int batch_size,
                                std::mt19937_64& rng);

/// Per-channel mean and standard deviation over all frames; constant channels get scale 1.
void fit_input_norm(ModelParams& params, std::span<const TrainingSample> samples);

struct TrainConfig {
  int epochs = 100;
  int batch_size = 16;
  double lr = 5e-4;
  double weight_decay = 1e-6;
  std::uint64_t seed = 0;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;      ///< mean batch loss over the epoch
  double val_alpha_mae = -1.0;  ///< degrees; -1 when no validation data
  double val_omega_mae = -1.0;

  bool operator==(const EpochRecord&) const = default;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochRecord> history;
  double initial_loss = 0.0;  ///< inference-mode loss over the training set before any update
  double final_loss = 0.0;    ///< same measure after the last epoch
};

/// Samples the model can consume (MLP needs at least window frames).
std::vector<TrainingSample> usable_samples(const Hyper& hyper, std::span<const TrainingSample> samples);

/// Mean inference-mode loss over whole sequences.
double dataset_loss(const ModelParams& params, std::span<const TrainingSample> samples);

struct MaePair {
  double alpha = 0.0;
  double omega = 0.0;
};

/// Mean absolute error over every emitted step of every sample.
MaePair dataset_mae(const ModelParams& params, std::span<const TrainingSample> samples);

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Initialise from cfg.seed, fit input normalisation on `train_set`, and train.
/// Throws NumericError naming the epoch when the loss diverges.
TrainResult train(const Hyper& hyper, std::span<const TrainingSample> train_set,
                  std::span<const TrainingSample> validation, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

/// Continue training existing parameters (normalisation kept) with a fresh optimizer.
TrainResult continue_training(ModelParams params, std::span<const TrainingSample> train_set,
                              std::span<const TrainingSample> validation, const TrainConfig& cfg,
                              const EpochCallback& on_epoch = {});

}  // namespace pivot::nn
