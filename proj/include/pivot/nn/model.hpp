#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace pivot::nn {

enum class Architecture { LSTM, GRU, RNN, MLP };
enum class OutputMode { Both, AlphaOnly, OmegaOnly };
enum class Activation { Tanh, Relu };

std::string_view to_string(Architecture a);
std::string_view to_string(OutputMode m);
std::string_view to_string(Activation a);
Architecture architecture_from_string(std::string_view s);
OutputMode output_mode_from_string(std::string_view s);
Activation activation_from_string(std::string_view s);

struct Hyper {
  Architecture arch = Architecture::LSTM;
  OutputMode mode = OutputMode::Both;
  int input_size = 142;    ///< per frame; the MLP sees input_size * window_size
  int hidden_size = 500;   ///< recurrent width, or MLP layer width
  int num_layers = 3;      ///< recurrent layers, or MLP linear layers
  double dropout = 0.15;
  int head_layers = 2;     ///< linear layers after the recurrent stack
  int head_hidden = 500;
  Activation activation = Activation::Tanh;
  int window_size = 15;    ///< MLP only

  int output_size() const { return mode == OutputMode::Both ? 2 : 1; }
  bool recurrent() const { return arch != Architecture::MLP; }
  bool operator==(const Hyper&) const = default;
};

/// 142 -> LSTM(500, 3 layers, dropout 0.15) -> 2 x 500 head.
Hyper lstm_hyper();
/// Same shape as the LSTM.
Hyper gru_hyper();
/// LSTM shape without dropout.
Hyper rnn_hyper();
/// 142 * window inputs, 4 tanh layers of 500, dropout 0.15.
Hyper mlp_hyper(int window = 15);
/// Small version of `base` for tests and desk-scale runs.
Hyper toy_hyper(Architecture arch, int hidden = 32, int layers = 2);

/// Targets are trained as alpha / alpha_scale and omega / omega_scale.
struct TargetNorm {
  double alpha_scale = 180.0;
  double omega_scale = 750.0;
  bool operator==(const TargetNorm&) const = default;
};

struct Tensor {
  std::string name;
  Eigen::MatrixXd value;
};

struct ModelParams {
  Hyper hyper;
  TargetNorm norm;
  std::vector<Tensor> tensors;
  /// Per-channel input standardisation (not trained): (x - mean) / scale.
  Eigen::VectorXd input_mean;
  Eigen::VectorXd input_scale;

  int index_of(std::string_view name) const;  ///< throws ShapeError when absent
  const Eigen::MatrixXd& at(std::string_view name) const;
  std::size_t parameter_count() const;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero-mean unit-scale input norm.
ModelParams init_params(const Hyper& hyper, std::uint64_t seed);

/// Tensor shapes implied by `hyper`, in storage order.
std::vector<std::pair<std::string, std::pair<int, int>>> tensor_shapes(const Hyper& hyper);

using Grads = std::vector<Eigen::MatrixXd>;
Grads zero_grads(const ModelParams& params);

/// Throws NumericError naming the first non-finite tensor.
void check_finite(const ModelParams& params);

}  // namespace pivot::nn
