#include "pivot/nn/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pivot/errors.hpp"

namespace pivot::nn {

OptimizerState make_optimizer(const ModelParams& params, double lr, double weight_decay) {
  OptimizerState opt;
  opt.lr = lr;
  opt.weight_decay = weight_decay;
  opt.m = zero_grads(params);
  opt.v = zero_grads(params);
  return opt;
}

void adam_step(ModelParams& params, const Grads& grads, OptimizerState& opt) {
  const std::size_t n = params.tensors.size();
  if (grads.size() != n || opt.m.size() != n || opt.v.size() != n) {
    throw ShapeError("adam_step: " + std::to_string(grads.size()) + " gradients for " + std::to_string(n) +
                     " tensors");
  }
  for (std::size_t i = 0; i < n; ++i) {
    const auto& p = params.tensors[i].value;
    if (grads[i].rows() != p.rows() || grads[i].cols() != p.cols() || opt.m[i].rows() != p.rows() ||
        opt.m[i].cols() != p.cols()) {
      throw ShapeError("adam_step: shape mismatch on '" + params.tensors[i].name + "'");
    }
  }
  ++opt.step;
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
  for (std::size_t i = 0; i < n; ++i) {
    auto& p = params.tensors[i].value;
    const Eigen::MatrixXd g = grads[i] + opt.weight_decay * p;
    opt.m[i] = opt.beta1 * opt.m[i] + (1.0 - opt.beta1) * g;
    opt.v[i] = opt.beta2 * opt.v[i] + (1.0 - opt.beta2) * g.cwiseProduct(g);
    p.array() -= opt.lr * (opt.m[i].array() / bc1) / ((opt.v[i].array() / bc2).sqrt() + opt.eps);
  }
}

std::vector<Batch> make_batches(std::span<const TrainingSample> samples, int batch_size, std::mt19937_64& rng) {
  if (samples.empty()) throw RangeError("make_batches: empty dataset");
  if (batch_size < 1) throw RangeError("make_batches: batch_size must be >= 1");
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);

  std::vector<Batch> batches;
  for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
    int len = samples[order[start]].length();
    for (std::size_t k = start; k < end; ++k) len = std::min(len, samples[order[k]].length());
    if (len < 1) throw RangeError("make_batches: empty sequence in dataset");
    const Eigen::Index B = static_cast<Eigen::Index>(end - start);
    const Eigen::Index cols = samples[order[start]].frames.cols();

    Batch b;
    b.inputs.assign(static_cast<std::size_t>(len), Eigen::MatrixXd(cols, B));
    b.alpha.resize(len, B);
    b.omega.resize(len, B);
    for (Eigen::Index j = 0; j < B; ++j) {
      const TrainingSample& s = samples[order[start + static_cast<std::size_t>(j)]];
      if (s.frames.cols() != cols) throw ShapeError("make_batches: samples disagree in channel count");
      if (s.alpha.size() != static_cast<std::size_t>(s.length()) ||
          s.omega.size() != static_cast<std::size_t>(s.length())) {
        throw ShapeError("make_batches: sample '" + s.id + "' targets do not match its frames");
      }
      std::uniform_int_distribution<int> pick(0, s.length() - len);
      const int off = pick(rng);
      for (int t = 0; t < len; ++t) {
        b.inputs[t].col(j) = s.frames.row(off + t).transpose();
        b.alpha(t, j) = s.alpha[off + t];
        b.omega(t, j) = s.omega[off + t];
      }
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

void fit_input_norm(ModelParams& params, std::span<const TrainingSample> samples) {
  const Eigen::Index c = params.hyper.input_size;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(c);
  Eigen::VectorXd sq = Eigen::VectorXd::Zero(c);
  double n = 0.0;
  for (const auto& s : samples) {
    if (s.frames.cols() != c) throw ShapeError("fit_input_norm: sample '" + s.id + "' has wrong width");
    sum += s.frames.colwise().sum().transpose();
    n += static_cast<double>(s.frames.rows());
  }
  if (n == 0.0) throw RangeError("fit_input_norm: no frames");
  const Eigen::VectorXd mean = sum / n;
  for (const auto& s : samples) {
    sq += (s.frames.rowwise() - mean.transpose()).array().square().matrix().colwise().sum().transpose();
  }
  Eigen::VectorXd scale = (sq / n).array().sqrt().matrix();
  for (Eigen::Index i = 0; i < c; ++i) {
    if (!(scale[i] > 1e-12)) scale[i] = 1.0;
  }
  params.input_mean = mean;
  params.input_scale = scale;
}

std::vector<TrainingSample> usable_samples(const Hyper& hyper, std::span<const TrainingSample> samples) {
  const int min_len = hyper.recurrent() ? 1 : hyper.window_size;
  std::vector<TrainingSample> out;
  for (const auto& s : samples) {
    if (s.length() >= min_len) out.push_back(s);
  }
  return out;
}

double dataset_loss(const ModelParams& params, std::span<const TrainingSample> samples) {
  if (samples.empty()) return 0.0;
  double acc = 0.0;
  for (const auto& s : samples) acc += batch_loss(params, single_batch(s.frames, s.alpha, s.omega), false, nullptr);
  return acc / static_cast<double>(samples.size());
}

MaePair dataset_mae(const ModelParams& params, std::span<const TrainingSample> samples) {
  double ea = 0.0, ew = 0.0, n = 0.0;
  for (const auto& s : samples) {
    const Prediction p = forward(params, s.frames);
    for (std::size_t j = 0; j < p.alpha.size(); ++j) {
      const std::size_t t = j + static_cast<std::size_t>(p.first_step);
      ea += std::abs(p.alpha[j] - s.alpha[t]);
      ew += std::abs(p.omega[j] - s.omega[t]);
      n += 1.0;
    }
  }
  if (n == 0.0) return {};
  return {ea / n, ew / n};
}

namespace {

TrainResult run_training(ModelParams params, std::span<const TrainingSample> train_raw,
                         std::span<const TrainingSample> val_raw, const TrainConfig& cfg,
                         const EpochCallback& on_epoch) {
  const auto train_set = usable_samples(params.hyper, train_raw);
  const auto val_set = usable_samples(params.hyper, val_raw);
  if (train_set.empty()) throw RangeError("train: no usable training sequences");
  if (cfg.epochs < 0) throw RangeError("train: epochs must be >= 0");

  TrainResult result;
  result.initial_loss = dataset_loss(params, train_set);
  OptimizerState opt = make_optimizer(params, cfg.lr, cfg.weight_decay);
  // Separate streams so dropout does not shift the batch order.
  std::mt19937_64 batch_rng(cfg.seed * 0x9E3779B97F4A7C15ULL + 1);
  std::mt19937_64 drop_rng(cfg.seed * 0x9E3779B97F4A7C15ULL + 2);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto batches = make_batches(train_set, cfg.batch_size, batch_rng);
    double total = 0.0;
    for (const auto& b : batches) {
      LossGrad lg;
      try {
        lg = loss_and_grad(params, b, true, &drop_rng);
      } catch (const NumericError& e) {
        throw NumericError("training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
      }
      total += lg.loss;
      adam_step(params, lg.grads, opt);
    }
    try {
      check_finite(params);
    } catch (const NumericError& e) {
      throw NumericError("training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = total / static_cast<double>(batches.size());
    if (!val_set.empty()) {
      const MaePair mae = dataset_mae(params, val_set);
      rec.val_alpha_mae = mae.alpha;
      rec.val_omega_mae = mae.omega;
    }
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  result.final_loss = dataset_loss(params, train_set);
  result.params = std::move(params);
  return result;
}

}  // namespace

TrainResult train(const Hyper& hyper, std::span<const TrainingSample> train_set,
                  std::span<const TrainingSample> validation, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  ModelParams params = init_params(hyper, cfg.seed);
  const auto usable = usable_samples(hyper, train_set);
  if (usable.empty()) throw RangeError("train: no usable training sequences");
  fit_input_norm(params, usable);
  return run_training(std::move(params), train_set, validation, cfg, on_epoch);
}

TrainResult continue_training(ModelParams params, std::span<const TrainingSample> train_set,
                              std::span<const TrainingSample> validation, const TrainConfig& cfg,
                              const EpochCallback& on_epoch) {
  return run_training(std::move(params), train_set, validation, cfg, on_epoch);
}

}  // namespace pivot::nn
