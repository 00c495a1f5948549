#include "pivot/nn/model.hpp"

#include <cmath>
#include <random>

#include "pivot/errors.hpp"

namespace pivot::nn {

std::string_view to_string(Architecture a) {
  switch (a) {
    case Architecture::LSTM: return "lstm";
    case Architecture::GRU: return "gru";
    case Architecture::RNN: return "rnn";
    case Architecture::MLP: return "mlp";
  }
  return "?";
}

std::string_view to_string(OutputMode m) {
  switch (m) {
    case OutputMode::Both: return "both";
    case OutputMode::AlphaOnly: return "alpha";
    case OutputMode::OmegaOnly: return "omega";
  }
  return "?";
}

std::string_view to_string(Activation a) { return a == Activation::Tanh ? "tanh" : "relu"; }

Architecture architecture_from_string(std::string_view s) {
  if (s == "lstm" || s == "LSTM") return Architecture::LSTM;
  if (s == "gru" || s == "GRU") return Architecture::GRU;
  if (s == "rnn" || s == "RNN") return Architecture::RNN;
  if (s == "mlp" || s == "MLP") return Architecture::MLP;
  throw RangeError("unknown architecture '" + std::string(s) + "' (expected lstm, gru, rnn, mlp)");
}

OutputMode output_mode_from_string(std::string_view s) {
  if (s == "both") return OutputMode::Both;
  if (s == "alpha" || s == "alpha-only") return OutputMode::AlphaOnly;
  if (s == "omega" || s == "omega-only") return OutputMode::OmegaOnly;
  throw RangeError("unknown output mode '" + std::string(s) + "' (expected both, alpha, omega)");
}

Activation activation_from_string(std::string_view s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "relu") return Activation::Relu;
  throw RangeError("unknown activation '" + std::string(s) + "'");
}

Hyper lstm_hyper() { return Hyper{}; }

Hyper gru_hyper() {
  Hyper h;
  h.arch = Architecture::GRU;
  return h;
}

Hyper rnn_hyper() {
  Hyper h;
  h.arch = Architecture::RNN;
  h.dropout = 0.0;
  return h;
}

Hyper mlp_hyper(int window) {
  Hyper h;
  h.arch = Architecture::MLP;
  h.hidden_size = 500;
  h.num_layers = 4;
  h.dropout = 0.15;
  h.head_layers = 0;
  h.head_hidden = 0;
  h.window_size = window;
  return h;
}

Hyper toy_hyper(Architecture arch, int hidden, int layers) {
  Hyper h;
  switch (arch) {
    case Architecture::LSTM: h = lstm_hyper(); break;
    case Architecture::GRU: h = gru_hyper(); break;
    case Architecture::RNN: h = rnn_hyper(); break;
    case Architecture::MLP: h = mlp_hyper(); break;
  }
  h.hidden_size = hidden;
  h.num_layers = layers;
  if (h.recurrent()) h.head_hidden = hidden;
  return h;
}

namespace {

int gate_count(Architecture a) {
  switch (a) {
    case Architecture::LSTM: return 4;
    case Architecture::GRU: return 3;
    default: return 1;
  }
}

}  // namespace

std::vector<std::pair<std::string, std::pair<int, int>>> tensor_shapes(const Hyper& h) {
  std::vector<std::pair<std::string, std::pair<int, int>>> out;
  const int out_dim = h.output_size();
  if (h.arch == Architecture::MLP) {
    int in = h.input_size * h.window_size;
    for (int k = 0; k < h.num_layers; ++k) {
      const int width = k + 1 == h.num_layers ? out_dim : h.hidden_size;
      const std::string p = "mlp." + std::to_string(k);
      out.push_back({p + ".w", {width, in}});
      out.push_back({p + ".b", {width, 1}});
      in = width;
    }
    return out;
  }
  const std::string tag(to_string(h.arch));
  const int g = gate_count(h.arch) * h.hidden_size;
  for (int l = 0; l < h.num_layers; ++l) {
    const int in = l == 0 ? h.input_size : h.hidden_size;
    const std::string p = tag + ".l" + std::to_string(l);
    out.push_back({p + ".w_ih", {g, in}});
    out.push_back({p + ".w_hh", {g, h.hidden_size}});
    if (h.arch == Architecture::GRU) {
      out.push_back({p + ".b_ih", {g, 1}});
      out.push_back({p + ".b_hh", {g, 1}});
    } else {
      out.push_back({p + ".b", {g, 1}});
    }
  }
  int in = h.hidden_size;
  for (int k = 0; k < h.head_layers; ++k) {
    const int width = k + 1 == h.head_layers ? out_dim : h.head_hidden;
    const std::string p = "head." + std::to_string(k);
    out.push_back({p + ".w", {width, in}});
    out.push_back({p + ".b", {width, 1}});
    in = width;
  }
  return out;
}

ModelParams init_params(const Hyper& hyper, std::uint64_t seed) {
  if (hyper.input_size <= 0 || hyper.hidden_size <= 0 || hyper.num_layers <= 0) {
    throw RangeError("init_params: sizes must be positive");
  }
  if (hyper.recurrent() && hyper.head_layers <= 0) {
    throw RangeError("init_params: recurrent models need at least one head layer");
  }
  if (!hyper.recurrent() && hyper.window_size <= 0) {
    throw RangeError("init_params: MLP window must be positive");
  }
  ModelParams p;
  p.hyper = hyper;
  std::mt19937_64 rng(seed);
  for (const auto& [name, shape] : tensor_shapes(hyper)) {
    // Recurrent weights and biases use the hidden width as fan-in, as in common LSTM inits.
    const bool rec = hyper.recurrent() && name.rfind("head.", 0) != 0;
    const int fan_in = rec ? hyper.hidden_size : (name.back() == 'b' ? shape.first : shape.second);
    const int fan = name.ends_with(".b") ? (rec ? hyper.hidden_size : 0) : fan_in;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan > 0 ? fan : 1));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Eigen::MatrixXd m(shape.first, shape.second);
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = dist(rng);
    }
    // Non-recurrent biases start at zero.
    if (name.ends_with(".b") && !rec) m.setZero();
    p.tensors.push_back({name, std::move(m)});
  }
  p.input_mean = Eigen::VectorXd::Zero(hyper.input_size);
  p.input_scale = Eigen::VectorXd::Ones(hyper.input_size);
  return p;
}

int ModelParams::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    if (tensors[i].name == name) return static_cast<int>(i);
  }
  throw ShapeError("no tensor named '" + std::string(name) + "'");
}

const Eigen::MatrixXd& ModelParams::at(std::string_view name) const {
  return tensors[index_of(name)].value;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += static_cast<std::size_t>(t.value.size());
  return n;
}

Grads zero_grads(const ModelParams& params) {
  Grads g;
  g.reserve(params.tensors.size());
  for (const auto& t : params.tensors) g.push_back(Eigen::MatrixXd::Zero(t.value.rows(), t.value.cols()));
  return g;
}

void check_finite(const ModelParams& params) {
  for (const auto& t : params.tensors) {
    if (!t.value.allFinite()) throw NumericError("tensor '" + t.name + "' is not finite");
  }
}

}  // namespace pivot::nn
