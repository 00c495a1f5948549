#include "pivot/tactile.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <sstream>

#include "pivot/errors.hpp"

namespace pivot {

namespace {

constexpr std::array<double, kPillarsPerSensor> kCentreWeights = {1, 2, 1, 2, 4, 2, 1, 2, 1};

std::string_view quantity_label(Quantity q) {
  switch (q) {
    case Quantity::ForceX: return "fx";
    case Quantity::ForceY: return "fy";
    case Quantity::ForceZ: return "fz";
    case Quantity::DispX: return "dx";
    case Quantity::DispY: return "dy";
    case Quantity::DispZ: return "dz";
    case Quantity::Contact: return "contact";
    case Quantity::TorqueX: return "tx";
    case Quantity::TorqueY: return "ty";
    case Quantity::TorqueZ: return "tz";
    case Quantity::Bias: return "bias";
    case Quantity::Counter: return "counter";
  }
  return "?";
}

std::string_view quantity_unit(Quantity q) {
  switch (q) {
    case Quantity::ForceX:
    case Quantity::ForceY:
    case Quantity::ForceZ: return "N";
    case Quantity::DispX:
    case Quantity::DispY:
    case Quantity::DispZ: return "mm";
    case Quantity::TorqueX:
    case Quantity::TorqueY:
    case Quantity::TorqueZ: return "N*mm";
    default: return "1";
  }
}

std::vector<ChannelInfo> build_layout() {
  std::vector<ChannelInfo> out;
  auto add = [&](int sensor, int pillar, Quantity q, const std::string& name) {
    out.push_back({static_cast<int>(out.size()), name, sensor, pillar, q, std::string(quantity_unit(q))});
  };
  constexpr Quantity kPillarQ[] = {Quantity::ForceX, Quantity::ForceY, Quantity::ForceZ, Quantity::DispX,
                                   Quantity::DispY,  Quantity::DispZ,  Quantity::Contact};
  constexpr Quantity kGlobalQ[] = {Quantity::ForceX,  Quantity::ForceY,  Quantity::ForceZ,
                                   Quantity::TorqueX, Quantity::TorqueY, Quantity::TorqueZ};
  for (int s = 0; s < kSensors; ++s) {
    const std::string sp = "s" + std::to_string(s);
    for (int p = 0; p < kPillarsPerSensor; ++p) {
      for (Quantity q : kPillarQ) {
        add(s, p, q, sp + "_p" + std::to_string(p) + "_" + std::string(quantity_label(q)));
      }
    }
    for (Quantity q : kGlobalQ) add(s, -1, q, sp + "_global_" + std::string(quantity_label(q)));
  }
  for (int s = 0; s < kSensors; ++s) {
    const std::string sp = "s" + std::to_string(s);
    add(s, -1, Quantity::Bias, sp + "_bias");
    add(s, -1, Quantity::Counter, sp + "_counter");
  }
  return out;
}

int pillar_base(int sensor, int pillar) {
  return sensor * kChannelsPerSensor + pillar * kChannelsPerPillar;
}

int global_base(int sensor) {
  return sensor * kChannelsPerSensor + kPillarsPerSensor * kChannelsPerPillar;
}

}  // namespace

const std::vector<ChannelInfo>& channel_layout() {
  static const std::vector<ChannelInfo> layout = build_layout();
  return layout;
}

std::string channel_column(int index) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "c%03d", index);
  return buf;
}

std::string channel_layout_csv() {
  std::ostringstream os;
  os << "index,column,name,sensor,pillar,quantity,unit\n";
  for (const auto& c : channel_layout()) {
    os << c.index << ',' << channel_column(c.index) << ',' << c.name << ',' << c.sensor << ','
       << c.pillar << ',' << quantity_label(c.quantity) << ',' << c.unit << '\n';
  }
  return os.str();
}

std::array<double, 2> pillar_position(int pillar, const SensorConfig& cfg) {
  const int row = pillar / 3;
  const int col = pillar % 3;
  return {(col - 1) * cfg.pillar_pitch_mm, (row - 1) * cfg.pillar_pitch_mm};
}

PillarForces pillar_forces(const SimState& state, const Plant& plant, const SensorConfig& cfg) {
  PillarForces pf;
  const double normal = grip_normal_force(plant.object, state.grip_width, plant.gripper);
  if (normal <= 0.0) return pf;

  // Object footprint: a band of the object's width around its long axis, which
  // points along (sin phi, -cos phi) in the pad plane.
  const double phi = state.phi * std::numbers::pi / 180.0;
  const double ux = std::sin(phi);
  const double uy = -std::cos(phi);
  const double half_width_mm = plant.object.width * 1000.0 / 2.0;

  double wsum = 0.0;
  std::array<double, kPillarsPerSensor> w{};
  for (int p = 0; p < kPillarsPerSensor; ++p) {
    const auto [x, y] = pillar_position(p, cfg);
    pf.contact[p] = std::abs(x * uy - y * ux) <= half_width_mm;
    w[p] = pf.contact[p] ? kCentreWeights[p] : 0.0;
    wsum += w[p];
  }
  if (wsum <= 0.0) return pf;
  for (auto& wp : w) wp /= wsum;

  double pad_torque = 0.0;
  if (state.at_rest) {
    pad_torque = 0.5 * gravity_torque(plant.object, state.phi, plant.approach_deg);
  } else if (state.omega != 0.0) {
    pad_torque = 0.5 * std::copysign(
        kinetic_friction_torque(plant.object, normal, state.omega, plant.gripper), state.omega);
  }

  double polar = 0.0;
  for (int p = 0; p < kPillarsPerSensor; ++p) {
    const auto [x, y] = pillar_position(p, cfg);
    polar += w[p] * (x * x + y * y) * 1e-6;
  }
  const double kappa = polar > 0.0 ? pad_torque / polar : 0.0;
  const double weight_share = 0.5 * plant.object.mass * plant.options.gravity;

  for (int p = 0; p < kPillarsPerSensor; ++p) {
    const auto [x, y] = pillar_position(p, cfg);
    pf.normal[p] = normal * w[p];
    pf.friction[p] = {-kappa * w[p] * y * 1e-3, kappa * w[p] * x * 1e-3};
    const double g = cfg.slip_shear_gain * state.omega * w[p] / cfg.pillar_pitch_mm;
    pf.slip_shear[p] = {g * x, g * y};
    pf.weight[p] = {0.0, -weight_share * w[p]};
  }
  return pf;
}

TactileFrame render_frame(const SimState& state, const Plant& plant, const SensorConfig& cfg,
                          std::mt19937_64& rng) {
  TactileFrame frame;
  frame.t = state.t;
  auto& ch = frame.channels;
  const PillarForces pf = pillar_forces(state, plant, cfg);
  const double k = cfg.pillar_stiffness_n_per_mm;

  for (int s = 0; s < kSensors; ++s) {
    // Sensor 1 faces sensor 0, so its x axis is mirrored.
    const double mirror = s == 0 ? 1.0 : -1.0;
    double gfx = 0, gfy = 0, gfz = 0, gtx = 0, gty = 0, gtz = 0;
    for (int p = 0; p < kPillarsPerSensor; ++p) {
      auto [x, y] = pillar_position(p, cfg);
      // Sensor-1 pillar p sits at world x = -x.
      const int world_p = s == 0 ? p : (p / 3) * 3 + (2 - p % 3);
      const double fx = mirror * (pf.friction[world_p][0] + pf.slip_shear[world_p][0] + pf.weight[world_p][0]);
      const double fy = pf.friction[world_p][1] + pf.slip_shear[world_p][1] + pf.weight[world_p][1];
      const double fz = pf.normal[world_p];
      const int b = pillar_base(s, p);
      ch[b + 0] = fx;
      ch[b + 1] = fy;
      ch[b + 2] = fz;
      ch[b + 3] = fx / k;
      ch[b + 4] = fy / k;
      ch[b + 5] = fz / k;
      ch[b + 6] = pf.contact[world_p] ? 1.0 : 0.0;
      gfx += fx;
      gfy += fy;
      gfz += fz;
      gtx += y * fz;
      gty += -x * fz;
      gtz += x * fy - y * fx;
    }
    const int g = global_base(s);
    ch[g + 0] = gfx;
    ch[g + 1] = gfy;
    ch[g + 2] = gfz;
    ch[g + 3] = gtx;
    ch[g + 4] = gty;
    ch[g + 5] = gtz;
  }
  const int pad = kSensors * kChannelsPerSensor;
  ch[pad + 0] = 0.0;
  ch[pad + 1] = static_cast<double>(state.tick);
  ch[pad + 2] = 0.0;
  ch[pad + 3] = static_cast<double>(state.tick);

  std::normal_distribution<double> unit(0.0, 1.0);
  for (const auto& info : channel_layout()) {
    const double z = unit(rng);
    double sigma = 0.0;
    switch (info.quantity) {
      case Quantity::ForceX:
      case Quantity::ForceY:
      case Quantity::ForceZ: sigma = cfg.noise_sigma_force; break;
      case Quantity::DispX:
      case Quantity::DispY:
      case Quantity::DispZ: sigma = cfg.noise_sigma_disp; break;
      case Quantity::TorqueX:
      case Quantity::TorqueY:
      case Quantity::TorqueZ: sigma = cfg.noise_sigma_force * cfg.pillar_pitch_mm; break;
      default: break;
    }
    ch[info.index] += sigma * z;
  }
  return frame;
}

std::vector<TactileFrame> render_sequence(std::span<const SimState> states, const Plant& plant,
                                          const SensorConfig& cfg) {
  if (states.empty()) throw RangeError("render_sequence: empty trajectory");
  std::mt19937_64 rng(cfg.seed);
  std::vector<TactileFrame> frames;
  frames.reserve(states.size());
  for (const auto& s : states) frames.push_back(render_frame(s, plant, cfg, rng));
  return frames;
}

}  // namespace pivot
