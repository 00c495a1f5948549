#include "pivot/nn/network.hpp"

#include <cmath>
#include <string>

#include "pivot/errors.hpp"

namespace pivot::nn {

using Eigen::MatrixXd;

namespace {

/// Tensor indices by role.
struct Layout {
  std::vector<int> w_ih, w_hh, b, b_ih, b_hh;
  std::vector<int> dw, db;

  explicit Layout(const ModelParams& p) {
    const Hyper& h = p.hyper;
    if (h.recurrent()) {
      const std::string tag(to_string(h.arch));
      for (int l = 0; l < h.num_layers; ++l) {
        const std::string pre = tag + ".l" + std::to_string(l);
        w_ih.push_back(p.index_of(pre + ".w_ih"));
        w_hh.push_back(p.index_of(pre + ".w_hh"));
        if (h.arch == Architecture::GRU) {
          b_ih.push_back(p.index_of(pre + ".b_ih"));
          b_hh.push_back(p.index_of(pre + ".b_hh"));
        } else {
          b.push_back(p.index_of(pre + ".b"));
        }
      }
    }
    const std::string dense = h.recurrent() ? "head." : "mlp.";
    const int n = h.recurrent() ? h.head_layers : h.num_layers;
    for (int k = 0; k < n; ++k) {
      dw.push_back(p.index_of(dense + std::to_string(k) + ".w"));
      db.push_back(p.index_of(dense + std::to_string(k) + ".b"));
    }
  }
};

void check_shapes(const ModelParams& p) {
  const auto shapes = tensor_shapes(p.hyper);
  if (shapes.size() != p.tensors.size()) {
    throw ShapeError("model has " + std::to_string(p.tensors.size()) + " tensors, hyper implies " +
                     std::to_string(shapes.size()));
  }
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    const auto& t = p.tensors[i];
    if (t.name != shapes[i].first || t.value.rows() != shapes[i].second.first ||
        t.value.cols() != shapes[i].second.second) {
      throw ShapeError("tensor '" + t.name + "' does not match hyper (expected '" + shapes[i].first +
                       "' " + std::to_string(shapes[i].second.first) + "x" +
                       std::to_string(shapes[i].second.second) + ")");
    }
  }
  if (p.input_mean.size() != p.hyper.input_size || p.input_scale.size() != p.hyper.input_size) {
    throw ShapeError("input normalisation size does not match input_size");
  }
}

MatrixXd sigmoid(const MatrixXd& a) { return (1.0 / (1.0 + (-a.array()).exp())).matrix(); }

MatrixXd activate(const MatrixXd& z, Activation act) {
  if (act == Activation::Tanh) return z.array().tanh().matrix();
  return z.cwiseMax(0.0);
}

/// Derivative of the activation expressed through its output.
MatrixXd activation_grad(const MatrixXd& a, Activation act) {
  if (act == Activation::Tanh) return (1.0 - a.array().square()).matrix();
  return (a.array() > 0.0).cast<double>().matrix();
}

MatrixXd dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double keep = 1.0 / (1.0 - p);
  MatrixXd m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c) {
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = u(rng) < p ? 0.0 : keep;
  }
  return m;
}

MatrixXd standardise(const ModelParams& p, const MatrixXd& raw) {
  if (raw.rows() != p.hyper.input_size) {
    throw ShapeError("frame has " + std::to_string(raw.rows()) + " channels, model expects " +
                     std::to_string(p.hyper.input_size));
  }
  return ((raw.colwise() - p.input_mean).array().colwise() / p.input_scale.array()).matrix();
}

struct RecCache {
  MatrixXd x;       ///< layer input (after dropout)
  MatrixXd mask;    ///< dropout mask that produced x, empty when none
  MatrixXd h_prev, c_prev;
  MatrixXd gates;   ///< activated gates
  MatrixXd hn;      ///< GRU: W_hn h + b_hn
  MatrixXd tanh_c;
  MatrixXd h;
};

struct DenseCache {
  std::vector<MatrixXd> in;    ///< input of each layer (after dropout)
  std::vector<MatrixXd> act;   ///< activated output of each hidden layer
  std::vector<MatrixXd> mask;  ///< dropout mask after each hidden layer, empty when none
};

struct Cache {
  std::vector<std::vector<RecCache>> rec;  ///< [t][layer]
  std::vector<DenseCache> dense;           ///< per emitted step
};

const MatrixXd& T(const ModelParams& p, int i) { return p.tensors[static_cast<std::size_t>(i)].value; }

void recurrent_step(const ModelParams& p, const Layout& L, int l, const MatrixXd& x, MatrixXd& h,
                    MatrixXd& c, RecCache* rc) {
  const Hyper& hy = p.hyper;
  const Eigen::Index H = hy.hidden_size;
  if (rc) {
    rc->h_prev = h;
    if (hy.arch == Architecture::LSTM) rc->c_prev = c;
  }
  switch (hy.arch) {
    case Architecture::LSTM: {
      MatrixXd g = T(p, L.w_ih[l]) * x + T(p, L.w_hh[l]) * h;
      g.colwise() += T(p, L.b[l]).col(0);
      MatrixXd act(g.rows(), g.cols());
      act.topRows(H) = sigmoid(g.topRows(H));
      act.middleRows(H, H) = sigmoid(g.middleRows(H, H));
      act.middleRows(2 * H, H) = g.middleRows(2 * H, H).array().tanh().matrix();
      act.bottomRows(H) = sigmoid(g.bottomRows(H));
      c = (act.middleRows(H, H).array() * c.array() +
           act.topRows(H).array() * act.middleRows(2 * H, H).array()).matrix();
      MatrixXd tc = c.array().tanh().matrix();
      h = (act.bottomRows(H).array() * tc.array()).matrix();
      if (rc) {
        rc->gates = std::move(act);
        rc->tanh_c = std::move(tc);
      }
      break;
    }
    case Architecture::GRU: {
      MatrixXd gi = T(p, L.w_ih[l]) * x;
      gi.colwise() += T(p, L.b_ih[l]).col(0);
      MatrixXd gh = T(p, L.w_hh[l]) * h;
      gh.colwise() += T(p, L.b_hh[l]).col(0);
      MatrixXd act(gi.rows(), gi.cols());
      act.topRows(H) = sigmoid(gi.topRows(H) + gh.topRows(H));
      act.middleRows(H, H) = sigmoid(gi.middleRows(H, H) + gh.middleRows(H, H));
      act.bottomRows(H) =
          (gi.bottomRows(H).array() + act.topRows(H).array() * gh.bottomRows(H).array()).tanh().matrix();
      h = ((1.0 - act.middleRows(H, H).array()) * act.bottomRows(H).array() +
           act.middleRows(H, H).array() * h.array()).matrix();
      if (rc) {
        rc->hn = gh.bottomRows(H);
        rc->gates = std::move(act);
      }
      break;
    }
    case Architecture::RNN: {
      MatrixXd a = T(p, L.w_ih[l]) * x + T(p, L.w_hh[l]) * h;
      a.colwise() += T(p, L.b[l]).col(0);
      h = a.array().tanh().matrix();
      break;
    }
    case Architecture::MLP: break;
  }
  if (rc) {
    rc->x = x;
    rc->h = h;
  }
}

MatrixXd dense_forward(const ModelParams& p, const Layout& L, const MatrixXd& input, bool dropout_on,
                       std::mt19937_64* rng, DenseCache* dc) {
  const Hyper& hy = p.hyper;
  MatrixXd a = input;
  const std::size_t n = L.dw.size();
  for (std::size_t k = 0; k < n; ++k) {
    MatrixXd z = T(p, L.dw[k]) * a;
    z.colwise() += T(p, L.db[k]).col(0);
    if (dc) dc->in.push_back(a);
    if (k + 1 == n) return z;
    MatrixXd out = activate(z, hy.activation);
    if (dc) dc->act.push_back(out);
    if (dropout_on) {
      MatrixXd m = dropout_mask(out.rows(), out.cols(), hy.dropout, *rng);
      a = (out.array() * m.array()).matrix();
      if (dc) dc->mask.push_back(std::move(m));
    } else {
      a = std::move(out);
      if (dc) dc->mask.emplace_back();
    }
  }
  return a;
}

/// Backpropagate dy through the dense stack; returns the gradient w.r.t. its input.
MatrixXd dense_backward(const ModelParams& p, const Layout& L, const DenseCache& dc, MatrixXd dy,
                        Grads& g) {
  const std::size_t n = L.dw.size();
  MatrixXd d = std::move(dy);
  for (std::size_t k = n; k-- > 0;) {
    if (k + 1 < n) {
      if (dc.mask[k].size() > 0) d = (d.array() * dc.mask[k].array()).matrix();
      d = (d.array() * activation_grad(dc.act[k], p.hyper.activation).array()).matrix();
    }
    g[static_cast<std::size_t>(L.dw[k])].noalias() += d * dc.in[k].transpose();
    g[static_cast<std::size_t>(L.db[k])].col(0) += d.rowwise().sum();
    d = T(p, L.dw[k]).transpose() * d;
  }
  return d;
}

int first_step(const Hyper& h) { return h.recurrent() ? 0 : h.window_size - 1; }

std::vector<MatrixXd> run(const ModelParams& p, const Batch& batch, bool train_mode, std::mt19937_64* rng,
                          Cache* cache) {
  check_shapes(p);
  const Hyper& hy = p.hyper;
  const Layout L(p);
  const int steps = batch.steps();
  const Eigen::Index B = batch.size();
  if (steps < 1) throw ShapeError("forward: empty sequence");
  if (!hy.recurrent() && steps < hy.window_size) {
    throw ShapeError("forward: MLP needs at least " + std::to_string(hy.window_size) + " steps, got " +
                     std::to_string(steps));
  }
  const bool dropout_on = train_mode && hy.dropout > 0.0;
  if (dropout_on && rng == nullptr) throw Error("forward: train mode with dropout needs an rng");

  std::vector<MatrixXd> xs;
  xs.reserve(static_cast<std::size_t>(steps));
  for (const auto& raw : batch.inputs) {
    if (raw.cols() != B) throw ShapeError("forward: batch members disagree in count");
    xs.push_back(standardise(p, raw));
  }

  std::vector<MatrixXd> outputs;
  if (hy.recurrent()) {
    std::vector<MatrixXd> h(static_cast<std::size_t>(hy.num_layers), MatrixXd::Zero(hy.hidden_size, B));
    std::vector<MatrixXd> c = h;
    if (cache) cache->rec.resize(static_cast<std::size_t>(steps));
    for (int t = 0; t < steps; ++t) {
      if (cache) cache->rec[t].resize(static_cast<std::size_t>(hy.num_layers));
      for (int l = 0; l < hy.num_layers; ++l) {
        RecCache* rc = cache ? &cache->rec[t][l] : nullptr;
        if (l == 0) {
          recurrent_step(p, L, l, xs[t], h[0], c[0], rc);
        } else if (dropout_on) {
          MatrixXd m = dropout_mask(hy.hidden_size, B, hy.dropout, *rng);
          MatrixXd x = (h[l - 1].array() * m.array()).matrix();
          recurrent_step(p, L, l, x, h[l], c[l], rc);
          if (rc) rc->mask = std::move(m);
        } else {
          recurrent_step(p, L, l, h[l - 1], h[l], c[l], rc);
        }
      }
      DenseCache* dc = nullptr;
      if (cache) dc = &cache->dense.emplace_back();
      outputs.push_back(dense_forward(p, L, h.back(), dropout_on, rng, dc));
    }
  } else {
    const int W = hy.window_size;
    const Eigen::Index in = hy.input_size;
    for (int t = W - 1; t < steps; ++t) {
      MatrixXd x(in * W, B);
      for (int k = 0; k < W; ++k) x.middleRows(k * in, in) = xs[t - W + 1 + k];
      DenseCache* dc = nullptr;
      if (cache) dc = &cache->dense.emplace_back();
      outputs.push_back(dense_forward(p, L, x, dropout_on, rng, dc));
    }
  }
  for (const auto& y : outputs) {
    if (!y.allFinite()) throw NumericError("forward: non-finite network output");
  }
  return outputs;
}

struct TargetRows {
  int alpha = -1;
  int omega = -1;
};

TargetRows target_rows(OutputMode m) {
  switch (m) {
    case OutputMode::Both: return {0, 1};
    case OutputMode::AlphaOnly: return {0, -1};
    case OutputMode::OmegaOnly: return {-1, 0};
  }
  return {};
}

double sgn(double e) { return (e > 0.0) - (e < 0.0); }

/// Loss over emitted outputs; fills dY when non-null.
double batch_loss_from(const ModelParams& p, const Batch& batch, const std::vector<MatrixXd>& ys,
                       std::vector<MatrixXd>* dy) {
  const int first = first_step(p.hyper);
  const Eigen::Index B = batch.size();
  if (batch.alpha.rows() != batch.steps() || batch.omega.rows() != batch.steps() ||
      batch.alpha.cols() != B || batch.omega.cols() != B) {
    throw ShapeError("loss: targets do not match the batch shape");
  }
  const TargetRows rows = target_rows(p.hyper.mode);
  const double m = static_cast<double>(ys.size()) * static_cast<double>(B);
  double l1a = 0, l2a = 0, l1w = 0, l2w = 0;
  if (dy) dy->assign(ys.size(), MatrixXd());
  for (std::size_t j = 0; j < ys.size(); ++j) {
    const int t = first + static_cast<int>(j);
    if (dy) (*dy)[j] = MatrixXd::Zero(ys[j].rows(), B);
    for (Eigen::Index b = 0; b < B; ++b) {
      if (rows.alpha >= 0) {
        const double e = ys[j](rows.alpha, b) - batch.alpha(t, b) / p.norm.alpha_scale;
        l1a += std::abs(e);
        l2a += e * e;
        if (dy) (*dy)[j](rows.alpha, b) = (sgn(e) + 2.0 * e) / m;
      }
      if (rows.omega >= 0) {
        const double e = ys[j](rows.omega, b) - batch.omega(t, b) / p.norm.omega_scale;
        l1w += std::abs(e);
        l2w += e * e;
        if (dy) (*dy)[j](rows.omega, b) = (sgn(e) + 2.0 * e) / m;
      }
    }
  }
  return l1a / m + l2a / m + l1w / m + l2w / m;
}

Grads backprop(const ModelParams& p, const Cache& cache, std::vector<MatrixXd> dy) {
  const Hyper& hy = p.hyper;
  const Layout L(p);
  Grads g = zero_grads(p);
  const std::size_t steps = cache.dense.size();

  if (!hy.recurrent()) {
    for (std::size_t j = 0; j < steps; ++j) dense_backward(p, L, cache.dense[j], std::move(dy[j]), g);
    return g;
  }

  const Eigen::Index H = hy.hidden_size;
  std::vector<MatrixXd> d_above(steps);
  for (std::size_t t = 0; t < steps; ++t) d_above[t] = dense_backward(p, L, cache.dense[t], std::move(dy[t]), g);

  for (int l = hy.num_layers - 1; l >= 0; --l) {
    const Eigen::Index B = d_above.front().cols();
    MatrixXd dh_next = MatrixXd::Zero(H, B);
    MatrixXd dc_next = MatrixXd::Zero(H, B);
    std::vector<MatrixXd> d_below(l > 0 ? steps : 0);
    auto& gw_ih = g[static_cast<std::size_t>(L.w_ih[l])];
    auto& gw_hh = g[static_cast<std::size_t>(L.w_hh[l])];
    const MatrixXd& w_ih = T(p, L.w_ih[l]);
    const MatrixXd& w_hh = T(p, L.w_hh[l]);
    for (std::size_t t = steps; t-- > 0;) {
      const RecCache& rc = cache.rec[t][l];
      const MatrixXd dh = d_above[t] + dh_next;
      MatrixXd dx;
      switch (hy.arch) {
        case Architecture::LSTM: {
          const auto i = rc.gates.topRows(H).array();
          const auto f = rc.gates.middleRows(H, H).array();
          const auto gg = rc.gates.middleRows(2 * H, H).array();
          const auto o = rc.gates.bottomRows(H).array();
          const auto tc = rc.tanh_c.array();
          const Eigen::ArrayXXd dc = dc_next.array() + dh.array() * o * (1.0 - tc.square());
          MatrixXd da(4 * H, B);
          da.topRows(H) = (dc * gg * i * (1.0 - i)).matrix();
          da.middleRows(H, H) = (dc * rc.c_prev.array() * f * (1.0 - f)).matrix();
          da.middleRows(2 * H, H) = (dc * i * (1.0 - gg.square())).matrix();
          da.bottomRows(H) = (dh.array() * tc * o * (1.0 - o)).matrix();
          dc_next = (dc * f).matrix();
          gw_ih.noalias() += da * rc.x.transpose();
          gw_hh.noalias() += da * rc.h_prev.transpose();
          g[static_cast<std::size_t>(L.b[l])].col(0) += da.rowwise().sum();
          dx = w_ih.transpose() * da;
          dh_next = w_hh.transpose() * da;
          break;
        }
        case Architecture::GRU: {
          const auto r = rc.gates.topRows(H).array();
          const auto z = rc.gates.middleRows(H, H).array();
          const auto n = rc.gates.bottomRows(H).array();
          const Eigen::ArrayXXd dan = dh.array() * (1.0 - z) * (1.0 - n.square());
          const Eigen::ArrayXXd dz = dh.array() * (rc.h_prev.array() - n);
          MatrixXd dgi(3 * H, B);
          MatrixXd dgh(3 * H, B);
          dgi.topRows(H) = (dan * rc.hn.array() * r * (1.0 - r)).matrix();
          dgi.middleRows(H, H) = (dz * z * (1.0 - z)).matrix();
          dgi.bottomRows(H) = dan.matrix();
          dgh.topRows(2 * H) = dgi.topRows(2 * H);
          dgh.bottomRows(H) = (dan * r).matrix();
          gw_ih.noalias() += dgi * rc.x.transpose();
          gw_hh.noalias() += dgh * rc.h_prev.transpose();
          g[static_cast<std::size_t>(L.b_ih[l])].col(0) += dgi.rowwise().sum();
          g[static_cast<std::size_t>(L.b_hh[l])].col(0) += dgh.rowwise().sum();
          dx = w_ih.transpose() * dgi;
          dh_next = (dh.array() * z).matrix() + w_hh.transpose() * dgh;
          break;
        }
        case Architecture::RNN: {
          const MatrixXd da = (dh.array() * (1.0 - rc.h.array().square())).matrix();
          gw_ih.noalias() += da * rc.x.transpose();
          gw_hh.noalias() += da * rc.h_prev.transpose();
          g[static_cast<std::size_t>(L.b[l])].col(0) += da.rowwise().sum();
          dx = w_ih.transpose() * da;
          dh_next = w_hh.transpose() * da;
          break;
        }
        case Architecture::MLP: break;
      }
      if (l > 0) {
        if (rc.mask.size() > 0) dx = (dx.array() * rc.mask.array()).matrix();
        d_below[t] = std::move(dx);
      }
    }
    if (l > 0) d_above = std::move(d_below);
  }
  return g;
}

}  // namespace

Batch single_batch(const Sequence& seq, std::span<const double> alpha, std::span<const double> omega) {
  if (static_cast<Eigen::Index>(alpha.size()) != seq.rows() ||
      static_cast<Eigen::Index>(omega.size()) != seq.rows()) {
    throw ShapeError("targets have " + std::to_string(alpha.size()) + "/" + std::to_string(omega.size()) +
                     " steps, sequence has " + std::to_string(seq.rows()));
  }
  Batch b;
  b.inputs.reserve(static_cast<std::size_t>(seq.rows()));
  for (Eigen::Index t = 0; t < seq.rows(); ++t) b.inputs.push_back(seq.row(t).transpose());
  b.alpha = Eigen::Map<const MatrixXd>(alpha.data(), seq.rows(), 1);
  b.omega = Eigen::Map<const MatrixXd>(omega.data(), seq.rows(), 1);
  return b;
}

std::vector<MatrixXd> forward_batch(const ModelParams& params, const Batch& batch, bool train_mode,
                                    std::mt19937_64* rng) {
  return run(params, batch, train_mode, rng, nullptr);
}

Prediction forward(const ModelParams& params, const Sequence& seq, bool train_mode, std::mt19937_64* rng) {
  if (seq.cols() != params.hyper.input_size) {
    throw ShapeError("sequence has " + std::to_string(seq.cols()) + " channels, model expects " +
                     std::to_string(params.hyper.input_size));
  }
  Batch b;
  for (Eigen::Index t = 0; t < seq.rows(); ++t) b.inputs.push_back(seq.row(t).transpose());
  const auto ys = run(params, b, train_mode, rng, nullptr);

  Prediction pred;
  pred.mode = params.hyper.mode;
  pred.first_step = first_step(params.hyper);
  const TargetRows rows = target_rows(pred.mode);
  for (const auto& y : ys) {
    if (rows.alpha >= 0) pred.alpha.push_back(y(rows.alpha, 0) * params.norm.alpha_scale);
    if (rows.omega >= 0) pred.omega.push_back(y(rows.omega, 0) * params.norm.omega_scale);
  }
  if (pred.mode == OutputMode::AlphaOnly) pred.omega = differentiate_alpha(pred.alpha);
  if (pred.mode == OutputMode::OmegaOnly) pred.alpha = integrate_omega(pred.omega);
  return pred;
}

double loss(const Prediction& pred, std::span<const double> alpha, std::span<const double> omega,
            const TargetNorm& norm) {
  if (alpha.size() != omega.size()) throw ShapeError("loss: alpha and omega targets differ in length");
  const std::size_t n = pred.mode == OutputMode::OmegaOnly ? pred.omega.size() : pred.alpha.size();
  if (static_cast<std::size_t>(pred.first_step) + n != alpha.size()) {
    throw ShapeError("loss: prediction covers " + std::to_string(n) + " steps from " +
                     std::to_string(pred.first_step) + ", targets have " + std::to_string(alpha.size()));
  }
  const TargetRows rows = target_rows(pred.mode);
  double l1a = 0, l2a = 0, l1w = 0, l2w = 0;
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t t = j + static_cast<std::size_t>(pred.first_step);
    if (rows.alpha >= 0) {
      const double e = pred.alpha[j] / norm.alpha_scale - alpha[t] / norm.alpha_scale;
      l1a += std::abs(e);
      l2a += e * e;
    }
    if (rows.omega >= 0) {
      const double e = pred.omega[j] / norm.omega_scale - omega[t] / norm.omega_scale;
      l1w += std::abs(e);
      l2w += e * e;
    }
  }
  const double m = static_cast<double>(n);
  return l1a / m + l2a / m + l1w / m + l2w / m;
}

double batch_loss(const ModelParams& params, const Batch& batch, bool train_mode, std::mt19937_64* rng) {
  const auto ys = run(params, batch, train_mode, rng, nullptr);
  return batch_loss_from(params, batch, ys, nullptr);
}

LossGrad loss_and_grad(const ModelParams& params, const Batch& batch, bool train_mode, std::mt19937_64* rng) {
  Cache cache;
  const auto ys = run(params, batch, train_mode, rng, &cache);
  std::vector<MatrixXd> dy;
  LossGrad out;
  out.loss = batch_loss_from(params, batch, ys, &dy);
  if (!std::isfinite(out.loss)) throw NumericError("loss is not finite");
  out.grads = backprop(params, cache, std::move(dy));
  for (std::size_t i = 0; i < out.grads.size(); ++i) {
    if (!out.grads[i].allFinite()) {
      throw NumericError("gradient of tensor '" + params.tensors[i].name + "' is not finite");
    }
  }
  return out;
}

Grads backward(const ModelParams& params, const Sequence& seq, std::span<const double> alpha,
               std::span<const double> omega) {
  return loss_and_grad(params, single_batch(seq, alpha, omega), false, nullptr).grads;
}

std::vector<double> integrate_omega(std::span<const double> omega, double rate) {
  std::vector<double> alpha(omega.size(), 0.0);
  for (std::size_t i = 1; i < omega.size(); ++i) {
    alpha[i] = alpha[i - 1] + 0.5 * (omega[i - 1] + omega[i]) / rate;
  }
  return alpha;
}

std::vector<double> differentiate_alpha(std::span<const double> alpha, double rate) {
  const std::size_t n = alpha.size();
  std::vector<double> omega(n, 0.0);
  if (n < 2) return omega;
  omega[0] = (alpha[1] - alpha[0]) * rate;
  omega[n - 1] = (alpha[n - 1] - alpha[n - 2]) * rate;
  for (std::size_t i = 1; i + 1 < n; ++i) omega[i] = 0.5 * (alpha[i + 1] - alpha[i - 1]) * rate;
  return omega;
}

StreamingEstimator::StreamingEstimator(const ModelParams& params) : params_(&params) {
  check_shapes(params);
  reset();
}

void StreamingEstimator::reset() {
  const Hyper& hy = params_->hyper;
  h_.assign(hy.recurrent() ? static_cast<std::size_t>(hy.num_layers) : 0, MatrixXd::Zero(hy.hidden_size, 1));
  c_ = h_;
  window_.clear();
  steps_ = 0;
  last_alpha_ = 0.0;
  last_omega_ = 0.0;
}

std::optional<Eigen::VectorXd> StreamingEstimator::step_raw(std::span<const double> frame) {
  const ModelParams& p = *params_;
  const Hyper& hy = p.hyper;
  if (static_cast<int>(frame.size()) != hy.input_size) {
    throw ShapeError("frame has " + std::to_string(frame.size()) + " channels, model expects " +
                     std::to_string(hy.input_size));
  }
  const Layout L(p);
  const MatrixXd raw = Eigen::Map<const MatrixXd>(frame.data(), hy.input_size, 1);
  MatrixXd x = standardise(p, raw);
  ++steps_;
  MatrixXd y;
  if (hy.recurrent()) {
    for (int l = 0; l < hy.num_layers; ++l) {
      recurrent_step(p, L, l, l == 0 ? x : h_[l - 1], h_[l], c_[l], nullptr);
    }
    y = dense_forward(p, L, h_.back(), false, nullptr, nullptr);
  } else {
    window_.push_back(x.col(0));
    if (static_cast<int>(window_.size()) > hy.window_size) window_.pop_front();
    if (static_cast<int>(window_.size()) < hy.window_size) return std::nullopt;
    const Eigen::Index in = hy.input_size;
    MatrixXd stacked(in * hy.window_size, 1);
    for (int k = 0; k < hy.window_size; ++k) stacked.middleRows(k * in, in) = window_[k];
    y = dense_forward(p, L, stacked, false, nullptr, nullptr);
  }
  if (!y.allFinite()) throw NumericError("forward: non-finite network output");
  return Eigen::VectorXd(y.col(0));
}

std::optional<Estimate> StreamingEstimator::step(std::span<const double> frame) {
  const Hyper& hy = params_->hyper;
  const bool first = hy.recurrent() ? steps_ == 0
                                    : window_.size() + 1 == static_cast<std::size_t>(hy.window_size);
  const auto y = step_raw(frame);
  if (!y) return std::nullopt;
  const ModelParams& p = *params_;
  Estimate e;
  switch (p.hyper.mode) {
    case OutputMode::Both:
      e.alpha = (*y)(0) * p.norm.alpha_scale;
      e.omega = (*y)(1) * p.norm.omega_scale;
      break;
    case OutputMode::AlphaOnly:
      e.alpha = (*y)(0) * p.norm.alpha_scale;
      e.omega = first ? 0.0 : (e.alpha - last_alpha_) * 60.0;
      break;
    case OutputMode::OmegaOnly:
      e.omega = (*y)(0) * p.norm.omega_scale;
      e.alpha = first ? 0.0 : last_alpha_ + 0.5 * (last_omega_ + e.omega) / 60.0;
      break;
  }
  last_alpha_ = e.alpha;
  last_omega_ = e.omega;
  return e;
}

}  // namespace pivot::nn
