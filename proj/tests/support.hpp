#pragma once

// Shared fixtures for the unit suites and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "pivot/controller.hpp"
#include "pivot/eval.hpp"
#include "pivot/filters.hpp"
#include "pivot/nn/model.hpp"
#include "pivot/nn/network.hpp"
#include "pivot/nn/training.hpp"
#include "pivot/scenario.hpp"
#include "pivot/sim.hpp"

namespace support {

inline pivot::Plant plant_for(const std::string& object, double approach = 0.0) {
  pivot::Scenario sc;
  sc.object = object;
  sc.approach_deg = approach;
  return pivot::make_plant(sc);
}

struct ReferenceComparison {
  double alpha = 0.0, omega = 0.0;          // library, 60 Hz
  double ref_alpha = 0.0, ref_omega = 0.0;  // oracle, dt/100
  long ticks = 0;
};

// Hold, open once to slip - 4, let the object come to rest; same schedule through the oracle.
inline ReferenceComparison compare_with_reference(const pivot::Plant& plant, double phi_start) {
  const int slip = pivot::slip_command(plant, phi_start);
  const int hold = pivot::hold_command(plant, phi_start);
  const int open = std::max(0, slip - 4);
  const auto init = pivot::initial_state(plant, phi_start, hold);
  pivot::EpisodeTiming timing;
  const auto traj = pivot::simulate_episode(plant, init, pivot::open_once_policy(open), timing);
  const auto& last = traj.states.back();

  oracle::Pendulum p;
  p.inertia = plant.object.pivot_inertia();
  p.mgr = plant.object.mass * plant.options.gravity * plant.object.com_offset *
          std::cos(plant.approach_deg * std::numbers::pi / 180.0);
  p.mu_s = plant.object.mu_static;
  p.mu_k = plant.object.mu_kinetic;
  p.radius = plant.object.pad_contact_radius;
  p.stiffness = plant.gripper.pad_stiffness_n_per_mm;
  p.thickness = plant.object.grip_thickness_mm();
  p.pad = plant.gripper.pad_thickness_mm;
  p.rate_ref = plant.gripper.slip_rate_ref_deg_s;
  p.omega_eps = plant.options.omega_eps_deg_s;
  p.clamp = plant.options.clamp_at_hanging;
  oracle::WidthSchedule ws{pivot::width_from_command(hold, plant.gripper), pivot::width_from_command(open, plant.gripper),
                           timing.initial_hold_s + plant.gripper.open_latency_s, plant.gripper.open_slew_mm_s};
  const auto ref = oracle::integrate_pendulum(p, ws, phi_start, std::max(last.t, 30.0), timing.dt / 100.0);
  return {last.alpha, last.omega, ref.alpha_deg, ref.omega_deg_s, last.tick};
}

// Max relative energy drift over `steps` ticks of a frictionless, unclamped pendulum.
inline double frictionless_drift(const std::string& object, int steps, double phi_start = 60.0) {
  pivot::Plant plant = plant_for(object);
  plant.object.mu_static = plant.object.mu_kinetic = 0.0;
  plant.options.clamp_at_hanging = false;
  auto s = pivot::initial_state(plant, phi_start, 0);
  const double e0 = pivot::mechanical_energy(plant, s);
  double worst = 0.0;
  for (int i = 0; i < steps; ++i) {
    s = pivot::step(s, 0, 1.0 / 60.0, plant);
    worst = std::max(worst, std::abs(pivot::mechanical_energy(plant, s) - e0) / std::abs(e0));
  }
  return worst;
}

// Largest per-step energy increase with friction on and a fixed grip at the slip threshold
// (pads still in contact, so kinetic friction acts); <= 0 means monotone. NaN if no contact.
inline double friction_energy_rise(const pivot::Plant& plant, double phi_start, int steps) {
  const int open = pivot::slip_command(plant, phi_start);
  if (pivot::grip_normal_force(plant.object, pivot::width_from_command(open, plant.gripper), plant.gripper) <= 0.0) {
    return NAN;
  }
  auto s = pivot::initial_state(plant, phi_start, open);
  double e = pivot::mechanical_energy(plant, s);
  double worst = -INFINITY;
  for (int i = 0; i < steps; ++i) {
    s = pivot::step(s, open, 1.0 / 60.0, plant);
    const double en = pivot::mechanical_energy(plant, s);
    worst = std::max(worst, en - e);
    e = en;
  }
  return worst;
}

// Random labelled samples; frames are a smooth function of the targets plus noise.
inline std::vector<pivot::nn::TrainingSample> random_samples(int n, int min_len, int max_len, int channels,
                                                             std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> len(min_len, max_len);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<pivot::nn::TrainingSample> out;
  for (int k = 0; k < n; ++k) {
    const int t = len(rng);
    pivot::nn::TrainingSample s;
    s.frames.resize(t, channels);
    s.alpha.resize(t);
    s.omega.resize(t);
    const double rate = 20.0 + 60.0 * std::abs(g(rng));
    for (int i = 0; i < t; ++i) {
      s.omega[i] = rate * std::exp(-0.05 * i);
      s.alpha[i] = (i == 0 ? 0.0 : s.alpha[i - 1] + s.omega[i] / 60.0);
      for (int c = 0; c < channels; ++c) s.frames(i, c) = std::sin(0.1 * c * s.alpha[i]) + 0.01 * s.omega[i] + 0.1 * g(rng);
    }
    s.id = "s" + std::to_string(k);
    s.object = "obj" + std::to_string(k % 3);
    out.push_back(std::move(s));
  }
  return out;
}

// Kalman module against the expanded-formula oracle; returns the worst relative error.
inline double kalman_oracle_error(int sequences, int length, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);
  double worst = 0.0;
  auto rel = [](double a, double b) {
    const double scale = std::max(std::abs(a), std::abs(b));
    return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
  };
  for (int k = 0; k < sequences; ++k) {
    pivot::KalmanParams p = pivot::KalmanParams::ground_truth_default();
    if (k % 2 == 1) {
      // randomised model, Q and Sigma0 symmetric PSD, R > 0
      p.A << 1.0 + 0.05 * u(rng), (1.0 + 0.5 * u(rng)) / 60.0, 0.1 * u(rng), 1.0 + 0.05 * u(rng);
      p.C << 1.0 + 0.2 * u(rng), 0.1 * u(rng);
      Eigen::Matrix2d l;
      l << std::abs(u(rng)) * 0.01, 0.0, u(rng) * 0.01, std::abs(u(rng)) * 0.05;
      p.Q = l * l.transpose();
      p.R = 1e-6 + std::abs(u(rng)) * 1e-3;
      p.Sigma0 = Eigen::Matrix2d::Identity() * (1e-6 + std::abs(u(rng)) * 1e-3);
    }
    const oracle::Kf ok{p.A(0, 0), p.A(0, 1), p.A(1, 0), p.A(1, 1), p.C(0), p.C(1),
                        p.Q(0, 0), p.Q(0, 1), p.Q(1, 0), p.Q(1, 1), p.R};
    double truth = 10.0 * u(rng), vel = 60.0 * u(rng);
    const double z0 = truth + 0.3 * g(rng);
    auto s = pivot::kalman_init(z0, p);
    oracle::KfState o{z0, 0.0, p.Sigma0(0, 0), p.Sigma0(0, 1), p.Sigma0(1, 0), p.Sigma0(1, 1)};
    for (int i = 1; i < length; ++i) {
      vel += 5.0 * g(rng);
      truth += vel / 60.0;
      const double z = truth + 0.3 * g(rng);
      s = pivot::kalman_step(s, z, p);
      o = oracle::kf_step(o, z, ok);
      worst = std::max({worst, rel(s.x[0], o.x1), rel(s.x[1], o.x2), rel(s.Sigma(0, 0), o.p11),
                        rel(s.Sigma(0, 1), o.p12), rel(s.Sigma(1, 0), o.p21), rel(s.Sigma(1, 1), o.p22)});
    }
  }
  return worst;
}

inline pivot::nn::Hyper toy(pivot::nn::Architecture arch, int hidden = 8, int layers = 2) {
  auto h = pivot::nn::toy_hyper(arch, hidden, layers);
  if (arch == pivot::nn::Architecture::MLP) h.window_size = 5;
  return h;
}

// Random-ish parameters with a non-trivial input normalisation.
inline pivot::nn::ModelParams toy_params(const pivot::nn::Hyper& h, std::uint64_t seed) {
  auto p = pivot::nn::init_params(h, seed);
  std::mt19937_64 rng(seed + 99);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (int i = 0; i < p.input_mean.size(); ++i) {
    p.input_mean[i] = u(rng);
    p.input_scale[i] = 1.0 + u(rng);
  }
  return p;
}

inline pivot::nn::Sequence random_sequence(int t, int channels, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  pivot::nn::Sequence s(t, channels);
  for (int i = 0; i < t; ++i)
    for (int c = 0; c < channels; ++c) s(i, c) = g(rng);
  return s;
}

struct GradCheck {
  double max_rel = 0.0;
  std::string worst;  // tensor name of the worst entry
  long entries = 0;
};

// Analytic gradient against central differences (h = 1e-5) on every parameter entry,
// batch of two sequences of length T. In train mode the dropout mask is pinned by reseeding.
inline GradCheck gradient_check(pivot::nn::Architecture arch, std::uint64_t seed, int steps = 12,
                                bool train_mode = false) {
  using namespace pivot::nn;
  const Hyper h = toy(arch);
  ModelParams p = toy_params(h, seed);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Batch b;
  for (int t = 0; t < steps; ++t) {
    Eigen::MatrixXd m(h.input_size, 2);
    for (int i = 0; i < m.size(); ++i) m(i) = g(rng);
    b.inputs.push_back(m);
  }
  b.alpha.resize(steps, 2);
  b.omega.resize(steps, 2);
  for (int i = 0; i < b.alpha.size(); ++i) {
    b.alpha(i) = 90.0 * g(rng);
    b.omega(i) = 300.0 * g(rng);
  }
  auto eval = [&](const ModelParams& q) {
    std::mt19937_64 mask(seed * 7 + 1);
    return batch_loss(q, b, train_mode, &mask);
  };
  std::mt19937_64 mask(seed * 7 + 1);
  const LossGrad lg = loss_and_grad(p, b, train_mode, &mask);
  GradCheck out;
  const double hstep = 1e-5;
  for (std::size_t k = 0; k < p.tensors.size(); ++k) {
    Eigen::MatrixXd& w = p.tensors[k].value;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      const double keep = w(i);
      w(i) = keep + hstep;
      const double up = eval(p);
      w(i) = keep - hstep;
      const double down = eval(p);
      w(i) = keep;
      const double num = (up - down) / (2 * hstep);
      const double ana = lg.grads[k](i);
      const double rel = std::abs(ana - num) / std::max({std::abs(ana), std::abs(num), 1e-6});
      if (rel > out.max_rel) {
        out.max_rel = rel;
        out.worst = p.tensors[k].name;
      }
      ++out.entries;
    }
  }
  return out;
}

// Number of steps where frame-by-frame streaming differs (bitwise) from whole-sequence forward.
inline long streaming_mismatches(pivot::nn::Architecture arch, int sequences, std::uint64_t seed,
                                 pivot::nn::OutputMode mode = pivot::nn::OutputMode::Both) {
  using namespace pivot::nn;
  Hyper h = toy(arch, 16, 2);
  h.mode = mode;
  const ModelParams p = toy_params(h, seed);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> len(h.recurrent() ? 1 : h.window_size, 80);
  long bad = 0;
  StreamingEstimator st(p);
  for (int k = 0; k < sequences; ++k) {
    const Sequence seq = random_sequence(len(rng), h.input_size, rng);
    const auto batch_out = forward_batch(p, single_batch(seq, std::vector<double>(seq.rows()), std::vector<double>(seq.rows())),
                                         false, nullptr);
    st.reset();
    std::size_t emitted = 0;
    for (Eigen::Index t = 0; t < seq.rows(); ++t) {
      const Eigen::VectorXd frame = seq.row(t).transpose();
      const auto y = st.step_raw(std::span<const double>(frame.data(), frame.size()));
      if (!y) continue;
      if (emitted >= batch_out.size() || !(*y == batch_out[emitted].col(0))) ++bad;
      ++emitted;
    }
    if (emitted != batch_out.size()) bad += 1000;
  }
  return bad;
}

struct TableResult {
  long cases = 0;
  long failures = 0;
  std::string first_failure;
};

// Every combination of phase, command, estimate and elapsed time through control_step.
// Expected outcomes follow the three rules directly from the constructed offset to the goal.
inline TableResult controller_table() {
  using namespace pivot;
  TableResult r;
  const ControllerConfig cfg;
  const double inf = std::numeric_limits<double>::infinity();
  auto check = [&](const ControllerState& cs, double alpha, double omega, double t_now, bool near,
                   const std::string& tag) {
    ControlOutput want{cs, cs.current_cmd, Action::Hold};
    if (cs.phase == Phase::Running) {
      if (near) {
        want.state.phase = Phase::Closing;
        want.state.current_cmd = 255;
        want.cmd = 255;
        want.action = Action::Close;
      } else if (omega < 20.0 && t_now - cs.t_prev > 0.75) {
        want.state.current_cmd = std::max(0, cs.current_cmd - 2);
        want.state.t_prev = t_now;
        want.cmd = want.state.current_cmd;
        want.action = Action::Open;
      }
    }
    const auto got = control_step(cs, {alpha, omega}, t_now, cfg);
    ++r.cases;
    if (!(got.state == want.state) || got.cmd != want.cmd || got.action != want.action) {
      if (r.failures++ == 0) r.first_failure = tag;
    }
  };
  for (Phase phase : {Phase::Running, Phase::Closing, Phase::Done, Phase::Failed}) {
    for (double goal : {0.5, 30.0, 45.0, 60.0, 180.0}) {
      for (int cmd : {0, 1, 2, 3, 150, 255}) {
        for (double dt_prev : {0.0, 0.5, 0.75, 0.7500001, 1.0, inf}) {
          for (double omega : {-50.0, 0.0, 10.0, 19.999, 20.0, 20.001, 300.0}) {
            // offsets of alpha_F from the goal; boundary offsets use omega = 0 to stay exact
            for (double delta : {0.0, 0.5, -0.999, 1.5, -3.0, 40.0}) {
              ControllerState cs;
              cs.goal = goal;
              cs.current_cmd = cmd;
              cs.phase = phase;
              const double t_now = 10.0;
              cs.t_prev = dt_prev == inf ? -inf : t_now - dt_prev;
              const double alpha = goal + delta - cfg.d * omega;
              const bool near = std::abs(delta) <= 0.999 + 1e-9;
              std::ostringstream tag;
              tag << to_string(phase) << " goal=" << goal << " cmd=" << cmd << " dt=" << dt_prev
                  << " omega=" << omega << " delta=" << delta;
              check(cs, alpha, omega, t_now, near, tag.str());
            }
            for (double delta : {1.0, -1.0, 2.0, -2.0}) {
              ControllerState cs;
              cs.goal = goal;
              cs.current_cmd = cmd;
              cs.phase = phase;
              cs.t_prev = dt_prev == inf ? -inf : 10.0 - dt_prev;
              std::ostringstream tag;
              tag << "exact " << to_string(phase) << " goal=" << goal << " delta=" << delta;
              check(cs, goal + delta, 0.0, 10.0, std::abs(delta) <= 1.0, tag.str());
            }
          }
        }
      }
    }
  }
  return r;
}

struct SegmentationCheck {
  int trajectories = 0;
  int boundary_failures = 0;
  double max_mae_error = 0.0;
};

// Brute-force MAE over [lo, hi) from tick `offset` on.
inline std::optional<double> brute_mae(const std::vector<double>& pred, const std::vector<double>& gt, int lo,
                                       int hi, int offset) {
  double sum = 0.0;
  int n = 0;
  for (int t = std::max(lo, offset); t < hi; ++t) {
    sum += std::abs(pred[t - offset] - gt[t]);
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

// Still start, motion with dips shorter than the hold window, still end.
inline SegmentationCheck segmentation_check(int trajectories, std::uint64_t seed) {
  SegmentationCheck out;
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> still(0, 60), moving(4, 200), offset(0, 20);
  std::uniform_real_distribution<double> amp(5.5, 400.0), quiet(-4.9, 4.9), unit(0.0, 1.0);
  const int hold = 3;
  auto err = [](const std::optional<double>& a, const std::optional<double>& b) {
    if (a.has_value() != b.has_value()) return std::numeric_limits<double>::infinity();
    return a ? std::abs(*a - *b) : 0.0;
  };
  for (int k = 0; k < trajectories; ++k) {
    const int s = still(rng), m = moving(rng), e = still(rng);
    const int T = s + m + e;
    std::vector<double> omega(T, 0.0), alpha(T, 0.0);
    for (int t = 0; t < s; ++t) omega[t] = quiet(rng);
    for (int t = s; t < s + m; ++t) omega[t] = (unit(rng) < 0.5 ? -1 : 1) * amp(rng);
    // short dips inside the motion, never at its first or last hold ticks
    for (int t = s + hold; t + hold < s + m; t += 5 + static_cast<int>(unit(rng) * 10)) {
      if (unit(rng) < 0.5) omega[t] = quiet(rng);
    }
    for (int t = s + m; t < T; ++t) omega[t] = quiet(rng);
    for (int t = 1; t < T; ++t) alpha[t] = alpha[t - 1] + omega[t] / 60.0;

    const auto b = pivot::segment(omega, 5.0, hold);
    ++out.trajectories;
    const bool is_ok = b.is_end == s;
    const bool dr_ok = b.dr_end >= s + m && b.dr_end <= std::min(T, s + m + hold);
    if (!is_ok || !dr_ok) ++out.boundary_failures;

    const int off = std::min(offset(rng), T - 1);
    std::vector<double> pa(T - off), pw(T - off);
    for (int t = off; t < T; ++t) {
      pa[t - off] = alpha[t] + 10.0 * (unit(rng) - 0.5);
      pw[t - off] = omega[t] + 50.0 * (unit(rng) - 0.5);
    }
    const auto got = pivot::mae_by_segment(pa, pw, alpha, omega, b, off);
    const int edges[4] = {0, b.is_end, b.dr_end, T};
    for (int seg = 0; seg < 3; ++seg) {
      out.max_mae_error = std::max(out.max_mae_error, err(got[seg].angle, brute_mae(pa, alpha, edges[seg], edges[seg + 1], off)));
      out.max_mae_error = std::max(out.max_mae_error, err(got[seg].velocity, brute_mae(pw, omega, edges[seg], edges[seg + 1], off)));
    }
  }
  return out;
}

}  // namespace support
