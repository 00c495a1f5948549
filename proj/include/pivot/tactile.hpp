#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "pivot/sim.hpp"

namespace pivot {

inline constexpr int kSensors = 2;
inline constexpr int kPillarsPerSensor = 9;
inline constexpr int kChannelsPerPillar = 7;   // force xyz, displacement xyz, contact
inline constexpr int kGlobalChannels = 6;      // force xyz, torque xyz
inline constexpr int kChannelsPerSensor = kPillarsPerSensor * kChannelsPerPillar + kGlobalChannels;
inline constexpr int kPaddingChannels = 4;     // per sensor: bias, frame counter
inline constexpr int kNumChannels = kSensors * kChannelsPerSensor + kPaddingChannels;
static_assert(kNumChannels == 142);

enum class Quantity { ForceX, ForceY, ForceZ, DispX, DispY, DispZ, Contact, TorqueX, TorqueY, TorqueZ, Bias, Counter };

struct ChannelInfo {
  int index = 0;
  std::string name;  ///< e.g. "s0_p4_fz", "s1_global_tz", "s0_counter"
  int sensor = 0;
  int pillar = -1;   ///< -1 for global and padding channels
  Quantity quantity = Quantity::ForceX;
  std::string unit;
};

/// Channel order: per sensor, pillars 0..8 (row-major 3x3) with fx fy fz dx dy dz contact,
/// then global fx fy fz tx ty tz; after both sensors, s0_bias s0_counter s1_bias s1_counter.
const std::vector<ChannelInfo>& channel_layout();

/// Column label used in dataset files, "c000".."c141".
std::string channel_column(int index);

/// Layout table as CSV text: index,column,name,sensor,pillar,quantity,unit.
std::string channel_layout_csv();

struct TactileFrame {
  std::array<double, kNumChannels> channels{};
  double t = 0.0;
  bool operator==(const TactileFrame&) const = default;
};

struct SensorConfig {
  double noise_sigma_force = 0.01;  ///< N
  double noise_sigma_disp = 0.005;  ///< mm
  double pillar_pitch_mm = 4.0;
  double pillar_stiffness_n_per_mm = 2.0;
  double slip_shear_gain = 0.002;   ///< N per deg/s of slip, radial pattern
  std::uint64_t seed = 0;
};

/// Noise-free per-pillar forces (world pad frame, sensor 0 orientation) split by source.
struct PillarForces {
  std::array<double, kPillarsPerSensor> normal{};
  std::array<std::array<double, 2>, kPillarsPerSensor> friction{};    ///< torsional, carries the friction torque
  std::array<std::array<double, 2>, kPillarsPerSensor> slip_shear{};  ///< linear in omega
  std::array<std::array<double, 2>, kPillarsPerSensor> weight{};      ///< supports m g / 2 per pad
  std::array<bool, kPillarsPerSensor> contact{};
};

/// Pillar (x, y) in mm on sensor 0, row-major, centre pillar at the origin.
std::array<double, 2> pillar_position(int pillar, const SensorConfig& cfg);

PillarForces pillar_forces(const SimState& state, const Plant& plant, const SensorConfig& cfg);

/// Noisy 142-channel frame; noise draws are made for every channel in index order.
TactileFrame render_frame(const SimState& state, const Plant& plant, const SensorConfig& cfg,
                          std::mt19937_64& rng);

/// One frame per state, noise stream seeded from cfg.seed. Throws RangeError when empty.
std::vector<TactileFrame> render_sequence(std::span<const SimState> states, const Plant& plant,
                                          const SensorConfig& cfg);

}  // namespace pivot
