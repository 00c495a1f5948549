#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "pivot/errors.hpp"
#include "pivot/nn/checkpoint.hpp"
#include "pivot/nn/network.hpp"
#include "pivot/nn/training.hpp"
#include "support.hpp"

using namespace pivot;
using namespace pivot::nn;
namespace fs = std::filesystem;

namespace {

constexpr Architecture kArchs[] = {Architecture::LSTM, Architecture::GRU, Architecture::RNN, Architecture::MLP};

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("pivot_nn_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(Hyper, PaperDefaults) {
  const auto l = lstm_hyper();
  EXPECT_EQ(l.input_size, 142);
  EXPECT_EQ(l.hidden_size, 500);
  EXPECT_EQ(l.num_layers, 3);
  EXPECT_DOUBLE_EQ(l.dropout, 0.15);
  EXPECT_EQ(l.head_layers, 2);
  EXPECT_EQ(l.head_hidden, 500);
  auto g = gru_hyper();
  g.arch = Architecture::LSTM;
  EXPECT_EQ(g, l);
  auto r = rnn_hyper();
  EXPECT_EQ(r.dropout, 0.0);
  r.dropout = l.dropout;
  r.arch = Architecture::LSTM;
  EXPECT_EQ(r, l);
  const auto m = mlp_hyper();
  EXPECT_EQ(m.window_size, 15);
  EXPECT_EQ(m.input_size * m.window_size, 2130);
  EXPECT_EQ(m.num_layers, 4);
  EXPECT_EQ(m.activation, Activation::Tanh);
  const auto shapes = tensor_shapes(m);
  EXPECT_EQ(shapes.front().second.second, 2130);
}

TEST(Forward, SingleStepFinite) {
  for (auto arch : {Architecture::LSTM, Architecture::GRU, Architecture::RNN}) {
    const auto p = init_params(support::toy(arch), 1);
    const auto pred = forward(p, Sequence::Random(1, 142));
    ASSERT_EQ(pred.alpha.size(), 1u);
    EXPECT_TRUE(std::isfinite(pred.alpha[0]) && std::isfinite(pred.omega[0]));
  }
}

TEST(Forward, ZeroWeightsGiveZero) {
  for (auto arch : kArchs) {
    auto p = init_params(support::toy(arch), 2);
    for (auto& t : p.tensors) t.value.setZero();
    const auto pred = forward(p, Sequence::Random(20, 142));
    for (double a : pred.alpha) EXPECT_EQ(a, 0.0);
    for (double w : pred.omega) EXPECT_EQ(w, 0.0);
  }
}

TEST(Forward, DeterministicAndShapeChecked) {
  for (auto arch : kArchs) {
    const auto p = support::toy_params(support::toy(arch), 3);
    const Sequence s = Sequence::Random(30, 142);
    const auto a = forward(p, s), b = forward(p, s);
    EXPECT_EQ(a.alpha, b.alpha);
    EXPECT_EQ(a.omega, b.omega);
    EXPECT_THROW(forward(p, Sequence::Random(30, 141)), ShapeError);
  }
  const auto mlp = init_params(support::toy(Architecture::MLP), 1);
  EXPECT_THROW(forward(mlp, Sequence::Random(4, 142)), ShapeError);
  EXPECT_EQ(forward(mlp, Sequence::Random(5, 142)).first_step, 4);
}

TEST(Forward, DropoutOnlyInTrainMode) {
  const auto p = support::toy_params(support::toy(Architecture::LSTM, 16, 2), 4);
  const Sequence s = Sequence::Random(25, 142);
  std::mt19937_64 rng(1);
  const auto train = forward(p, s, true, &rng);
  const auto eval = forward(p, s);
  EXPECT_NE(train.alpha, eval.alpha);
  // no dropout in the plain RNN
  const auto r = support::toy_params(support::toy(Architecture::RNN), 4);
  std::mt19937_64 rng2(1);
  EXPECT_EQ(forward(r, s, true, &rng2).alpha, forward(r, s).alpha);
}

TEST(Forward, MlpWindowContract) {
  const auto p = support::toy_params(support::toy(Architecture::MLP), 5);
  Sequence s = Sequence::Random(20, 142);
  const auto base = forward(p, s);
  // output at t = 12 sees frames 8..12 only
  s.row(7).setConstant(1e3);
  const auto moved = forward(p, s);
  const int t = 12, j = t - base.first_step;
  EXPECT_EQ(moved.alpha[j], base.alpha[j]);
  EXPECT_NE(moved.alpha[j - 1], base.alpha[j - 1]);
}

TEST(Loss, ClosedForms) {
  Prediction pred;
  pred.alpha = {10, 20, 30};
  pred.omega = {1, 2, 3};
  const std::vector<double> a = {10, 20, 30}, w = {1, 2, 3};
  TargetNorm norm;
  EXPECT_EQ(loss(pred, a, w, norm), 0.0);
  const double e = 0.1;
  Prediction off = pred;
  for (auto& v : off.alpha) v += e * norm.alpha_scale;
  EXPECT_NEAR(loss(off, a, w, norm), e + e * e, 1e-12);
  TargetNorm twice = norm;
  twice.alpha_scale *= 2;
  EXPECT_NEAR(loss(off, a, w, twice), e / 2 + e * e / 4, 1e-12);
  EXPECT_THROW(loss(pred, std::vector<double>{1, 2}, w, norm), ShapeError);
}

TEST(Loss, SingleOutputModesIgnoreDerivedQuantity) {
  Prediction pred;
  pred.mode = OutputMode::AlphaOnly;
  pred.alpha = {0.0, 18.0};
  pred.omega = {999.0, 999.0};
  EXPECT_NEAR(loss(pred, std::vector<double>{0.0, 0.0}, std::vector<double>{0.0, 0.0}, TargetNorm{}),
              0.5 * 0.1 + 0.5 * 0.01, 1e-12);
}

TEST(Gradient, MatchesFiniteDifferences) {
  for (auto arch : kArchs) {
    for (std::uint64_t seed : {1u, 2u}) {
      const auto gc = support::gradient_check(arch, seed);
      EXPECT_LT(gc.max_rel, 1e-4) << to_string(arch) << " seed " << seed << " worst " << gc.worst;
    }
  }
}

TEST(Gradient, MatchesWithPinnedDropoutMask) {
  for (auto arch : {Architecture::LSTM, Architecture::MLP}) {
    const auto gc = support::gradient_check(arch, 3, 10, true);
    EXPECT_LT(gc.max_rel, 1e-4) << to_string(arch) << " worst " << gc.worst;
  }
}

TEST(Gradient, SingleOutputModes) {
  for (auto mode : {OutputMode::AlphaOnly, OutputMode::OmegaOnly}) {
    Hyper h = support::toy(Architecture::GRU);
    h.mode = mode;
    const auto p = support::toy_params(h, 8);
    std::mt19937_64 rng(8);
    const Sequence s = support::random_sequence(9, 142, rng);
    std::vector<double> a(9), w(9);
    for (int i = 0; i < 9; ++i) {
      a[i] = 5.0 * i;
      w[i] = 30.0 - i;
    }
    const Grads g = backward(p, s, a, w);
    ModelParams q = p;
    const double hstep = 1e-5;
    double worst = 0.0;
    for (std::size_t k = 0; k < q.tensors.size(); ++k) {
      for (Eigen::Index i = 0; i < q.tensors[k].value.size(); i += 7) {
        const double keep = q.tensors[k].value(i);
        q.tensors[k].value(i) = keep + hstep;
        const double up = loss(forward(q, s), a, w, q.norm);
        q.tensors[k].value(i) = keep - hstep;
        const double down = loss(forward(q, s), a, w, q.norm);
        q.tensors[k].value(i) = keep;
        const double num = (up - down) / (2 * hstep);
        worst = std::max(worst, std::abs(num - g[k](i)) / std::max({std::abs(num), std::abs(g[k](i)), 1e-6}));
      }
    }
    EXPECT_LT(worst, 1e-4) << to_string(mode);
  }
}

TEST(Gradient, BatchIsMeanOfMembers) {
  // duplicating every member leaves the mean loss and its gradient unchanged
  const auto p = support::toy_params(support::toy(Architecture::LSTM), 9);
  std::mt19937_64 rng(9);
  const Sequence s = support::random_sequence(7, 142, rng);
  std::vector<double> a(7, 12.0), w(7, -40.0);
  const Batch one = single_batch(s, a, w);
  Batch two = one;
  for (auto& m : two.inputs) {
    Eigen::MatrixXd d(m.rows(), 2);
    d << m, m;
    m = d;
  }
  two.alpha = Eigen::MatrixXd::Constant(7, 2, 12.0);
  two.omega = Eigen::MatrixXd::Constant(7, 2, -40.0);
  const auto g1 = loss_and_grad(p, one, false, nullptr);
  const auto g2 = loss_and_grad(p, two, false, nullptr);
  EXPECT_NEAR(g1.loss, g2.loss, 1e-14);
  for (std::size_t k = 0; k < g1.grads.size(); ++k) EXPECT_LT((g1.grads[k] - g2.grads[k]).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Streaming, BitExactWithWholeSequence) {
  for (auto arch : kArchs) EXPECT_EQ(support::streaming_mismatches(arch, 10, 21), 0) << to_string(arch);
  for (auto mode : {OutputMode::AlphaOnly, OutputMode::OmegaOnly}) {
    EXPECT_EQ(support::streaming_mismatches(Architecture::LSTM, 5, 22, mode), 0);
  }
}

TEST(Streaming, DegreesMatchForward) {
  const auto p = support::toy_params(support::toy(Architecture::GRU, 16, 2), 23);
  std::mt19937_64 rng(23);
  const Sequence s = support::random_sequence(40, 142, rng);
  const auto pred = forward(p, s);
  StreamingEstimator st(p);
  for (int t = 0; t < 40; ++t) {
    const Eigen::VectorXd f = s.row(t).transpose();
    const auto e = st.step(std::span<const double>(f.data(), f.size()));
    ASSERT_TRUE(e.has_value());
    EXPECT_EQ(e->alpha, pred.alpha[t]);
    EXPECT_EQ(e->omega, pred.omega[t]);
  }
}

TEST(Recover, IntegrateAndDifferentiate) {
  const std::vector<double> w(60, 60.0);
  const auto a = integrate_omega(w);
  EXPECT_DOUBLE_EQ(a.front(), 0.0);
  EXPECT_NEAR(a.back(), 60.0 * 59.0 / 60.0, 1e-12);
  std::vector<double> ramp(50);
  for (int i = 0; i < 50; ++i) ramp[i] = 2.0 * i;
  const auto back = integrate_omega(differentiate_alpha(ramp));
  for (int i = 1; i < 49; ++i) EXPECT_NEAR(back[i], ramp[i], 1e-9);
  for (double v : integrate_omega(std::vector<double>(30, 0.0))) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(differentiate_alpha(std::vector<double>{5.0}), std::vector<double>{0.0});
}

TEST(Recover, NormalisationRoundTrip) {
  const TargetNorm n;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-800, 800);
  for (int i = 0; i < 1000; ++i) {
    const double x = u(rng);
    EXPECT_NEAR((x / n.alpha_scale) * n.alpha_scale, x, 1e-12);
    EXPECT_NEAR((x / n.omega_scale) * n.omega_scale, x, 1e-12);
  }
}

TEST(Adam, FirstStepIsSignedLr) {
  auto p = init_params(support::toy(Architecture::RNN), 1);
  auto opt = make_optimizer(p, 1e-3, 0.0);
  Grads g = zero_grads(p);
  g[0](0) = 0.37;
  g[0](1) = -5.0;
  const double a0 = p.tensors[0].value(0), a1 = p.tensors[0].value(1), a2 = p.tensors[0].value(2);
  adam_step(p, g, opt);
  EXPECT_NEAR(p.tensors[0].value(0) - a0, -1e-3, 1e-10);
  EXPECT_NEAR(p.tensors[0].value(1) - a1, 1e-3, 1e-10);
  EXPECT_EQ(p.tensors[0].value(2), a2);
  EXPECT_EQ(opt.step, 1);
}

TEST(Adam, ZeroGradNoDecayIsNoop) {
  const auto p0 = init_params(support::toy(Architecture::LSTM), 2);
  auto p = p0;
  auto opt = make_optimizer(p, 1e-3, 0.0);
  for (int i = 0; i < 5; ++i) adam_step(p, zero_grads(p), opt);
  for (std::size_t k = 0; k < p.tensors.size(); ++k) EXPECT_EQ(p.tensors[k].value, p0.tensors[k].value);
  Grads bad = zero_grads(p);
  bad.pop_back();
  EXPECT_THROW(adam_step(p, bad, opt), ShapeError);
}

TEST(Adam, Deterministic) {
  auto a = init_params(support::toy(Architecture::GRU), 3), b = a;
  auto oa = make_optimizer(a), ob = make_optimizer(b);
  std::mt19937_64 rng(3);
  const Sequence s = support::random_sequence(6, 142, rng);
  const std::vector<double> al(6, 3.0), om(6, 1.0);
  for (int i = 0; i < 3; ++i) {
    adam_step(a, backward(a, s, al, om), oa);
    adam_step(b, backward(b, s, al, om), ob);
  }
  for (std::size_t k = 0; k < a.tensors.size(); ++k) EXPECT_EQ(a.tensors[k].value, b.tensors[k].value);
}

TEST(Batches, CropToShortest) {
  std::vector<TrainingSample> v;
  for (int len : {100, 80, 120}) v.push_back(support::random_samples(1, len, len, 142, len)[0]);
  std::mt19937_64 rng(1);
  const auto bs = make_batches(v, 3, rng);
  ASSERT_EQ(bs.size(), 1u);
  EXPECT_EQ(bs[0].steps(), 80);
  EXPECT_EQ(bs[0].size(), 3);

  std::vector<TrainingSample> eq = support::random_samples(5, 50, 50, 142, 2);
  std::mt19937_64 r2(2);
  const auto be = make_batches(eq, 2, r2);
  ASSERT_EQ(be.size(), 3u);
  for (const auto& b : be) EXPECT_EQ(b.steps(), 50);

  std::mt19937_64 x(7), y(7);
  const auto b1 = make_batches(v, 2, x), b2 = make_batches(v, 2, y);
  ASSERT_EQ(b1.size(), b2.size());
  for (std::size_t i = 0; i < b1.size(); ++i) EXPECT_EQ(b1[i].alpha, b2[i].alpha);

  std::mt19937_64 r3(0);
  EXPECT_THROW(make_batches(std::vector<TrainingSample>{}, 2, r3), RangeError);
  EXPECT_THROW(make_batches(v, 0, r3), RangeError);
}

TEST(Batches, CropKeepsContiguousWindow) {
  auto v = support::random_samples(2, 30, 30, 142, 4);
  v.push_back(support::random_samples(1, 90, 90, 142, 5)[0]);
  std::mt19937_64 rng(5);
  for (const auto& b : make_batches(v, 3, rng)) {
    for (int m = 0; m < b.size(); ++m) {
      // locate the source by its first alpha and check the window is contiguous
      bool found = false;
      for (const auto& s : v) {
        for (int off = 0; off + b.steps() <= s.length(); ++off) {
          bool same = true;
          for (int t = 0; t < b.steps() && same; ++t) same = s.alpha[off + t] == b.alpha(t, m);
          if (same) found = true;
        }
      }
      EXPECT_TRUE(found);
    }
  }
}

TEST(Training, LossDecreasesAndIsReproducible) {
  const auto data = support::random_samples(20, 30, 50, 142, 11);
  TrainConfig cfg;
  cfg.epochs = 8;
  cfg.batch_size = 4;
  cfg.lr = 3e-3;
  cfg.seed = 5;
  const auto h = support::toy(Architecture::LSTM, 16, 1);
  const auto r1 = train(h, data, data, cfg);
  EXPECT_LT(r1.final_loss, r1.initial_loss);
  ASSERT_EQ(r1.history.size(), 8u);
  EXPECT_GE(r1.history.back().val_alpha_mae, 0.0);
  const auto r2 = train(h, data, data, cfg);
  EXPECT_EQ(r1.history, r2.history);
  for (std::size_t k = 0; k < r1.params.tensors.size(); ++k) EXPECT_EQ(r1.params.tensors[k].value, r2.params.tensors[k].value);
}

TEST(Training, ZeroLearningRateKeepsParams) {
  const auto data = support::random_samples(6, 20, 30, 142, 12);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.lr = 0.0;
  cfg.seed = 1;
  const auto h = support::toy(Architecture::MLP);
  const auto r = train(h, data, {}, cfg);
  auto init = init_params(h, cfg.seed);
  for (std::size_t k = 0; k < init.tensors.size(); ++k) EXPECT_EQ(r.params.tensors[k].value, init.tensors[k].value);
  EXPECT_EQ(r.history.back().val_alpha_mae, -1.0);
  EXPECT_THROW(train(h, std::vector<TrainingSample>{}, {}, cfg), RangeError);
}

TEST(Training, InputNormFitted) {
  auto data = support::random_samples(4, 20, 20, 142, 13);
  for (auto& s : data) s.frames.col(3).setConstant(2.5);
  auto p = init_params(support::toy(Architecture::RNN), 1);
  fit_input_norm(p, data);
  EXPECT_DOUBLE_EQ(p.input_mean[3], 2.5);
  EXPECT_EQ(p.input_scale[3], 1.0);
  EXPECT_GT(p.input_scale[0], 0.0);
}

TEST(Checkpoint, BitExactRoundTrip) {
  const auto dir = scratch("ckpt");
  for (auto arch : kArchs) {
    Hyper h = support::toy(arch);
    h.mode = arch == Architecture::GRU ? OutputMode::OmegaOnly : OutputMode::Both;
    const auto p = support::toy_params(h, 31);
    const auto path = dir / (std::string(to_string(arch)) + ".ckpt");
    save_checkpoint(p, path);
    const auto q = load_checkpoint(path);
    EXPECT_EQ(q.hyper, p.hyper);
    EXPECT_EQ(q.norm, p.norm);
    ASSERT_EQ(q.tensors.size(), p.tensors.size());
    for (std::size_t k = 0; k < p.tensors.size(); ++k) {
      EXPECT_EQ(q.tensors[k].name, p.tensors[k].name);
      EXPECT_EQ(std::memcmp(q.tensors[k].value.data(), p.tensors[k].value.data(), sizeof(double) * p.tensors[k].value.size()), 0);
    }
    EXPECT_EQ(q.input_mean, p.input_mean);
    EXPECT_EQ(q.input_scale, p.input_scale);
  }
}

TEST(Checkpoint, RejectsBadFiles) {
  const auto dir = scratch("ckpt_bad");
  const auto p = support::toy_params(support::toy(Architecture::LSTM), 1);
  const auto path = dir / "m.ckpt";
  save_checkpoint(p, path);

  std::string text;
  {
    std::ifstream in(path);
    text.assign(std::istreambuf_iterator<char>(in), {});
  }
  auto rewrite = [&](const std::string& t) {
    std::ofstream out(path);
    out << t;
  };
  const auto pos = text.find("\"version\": 1");
  ASSERT_NE(pos, std::string::npos);
  std::string v2 = text;
  v2.replace(pos, 12, "\"version\": 2");
  rewrite(v2);
  EXPECT_THROW(load_checkpoint(path), IntegrityError);

  rewrite(text.substr(0, text.size() / 2));
  EXPECT_THROW(load_checkpoint(path), ParseError);

  rewrite(text);
  EXPECT_NO_THROW(load_checkpoint(path));
  fs::resize_file(checkpoint_blob_path(path), fs::file_size(checkpoint_blob_path(path)) - 8);
  EXPECT_THROW(load_checkpoint(path), IntegrityError);
  fs::remove(checkpoint_blob_path(path));
  EXPECT_THROW(load_checkpoint(path), IntegrityError);
}
