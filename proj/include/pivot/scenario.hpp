#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "pivot/objects.hpp"
#include "pivot/sim.hpp"

namespace pivot {

enum class Protocol { RotateToStop, AngleGoal };

std::string_view to_string(Protocol p);
Protocol protocol_from_string(std::string_view s);

/// One episode to run: which object, how it was grasped, and how the gripper is driven.
struct Scenario {
  std::string object;
  double approach_deg = 0.0;
  double perturb_deg = 0.0;
  Protocol protocol = Protocol::RotateToStop;
  std::optional<double> stop_deg;  ///< AngleGoal target, relative degrees
  std::uint64_t seed = 0;
  FrictionVariant friction = FrictionVariant::Nominal;

  /// Long-axis angle from hanging when the recording starts: 90 + perturb.
  double phi_start() const;
  bool operator==(const Scenario&) const = default;
};

Plant make_plant(const Scenario& sc, const GripperModel& gripper = {}, const SimOptions& options = {});

/// Scenario files are JSON objects:
/// {"object": "Toothpaste", "approach_deg": 0, "perturb_deg": 15,
///  "protocol": "rotate-to-stop" | "angle-goal", "stop_deg": 45 (angle-goal only),
///  "seed": 7, "friction": "nominal" | "taped"}
std::string scenario_to_json(const Scenario& sc);
Scenario scenario_from_json(std::string_view text);
Scenario load_scenario(const std::filesystem::path& path);

}  // namespace pivot
