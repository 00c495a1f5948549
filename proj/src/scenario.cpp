#include "pivot/scenario.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "pivot/errors.hpp"

namespace pivot {

std::string_view to_string(Protocol p) {
  return p == Protocol::RotateToStop ? "rotate-to-stop" : "angle-goal";
}

Protocol protocol_from_string(std::string_view s) {
  if (s == "rotate-to-stop" || s == "RotateToStop") return Protocol::RotateToStop;
  if (s == "angle-goal" || s == "AngleGoal") return Protocol::AngleGoal;
  throw RangeError("unknown protocol '" + std::string(s) +
                   "' (expected rotate-to-stop or angle-goal)");
}

double Scenario::phi_start() const { return 90.0 + perturb_deg; }

Plant make_plant(const Scenario& sc, const GripperModel& gripper, const SimOptions& options) {
  Plant p;
  p.object = apply_friction_variant(find_object(sc.object), sc.friction);
  p.gripper = gripper;
  p.approach_deg = sc.approach_deg;
  p.options = options;
  return p;
}

std::string scenario_to_json(const Scenario& sc) {
  nlohmann::ordered_json j;
  j["object"] = sc.object;
  j["approach_deg"] = sc.approach_deg;
  j["perturb_deg"] = sc.perturb_deg;
  j["protocol"] = std::string(to_string(sc.protocol));
  if (sc.stop_deg) j["stop_deg"] = *sc.stop_deg;
  j["seed"] = sc.seed;
  j["friction"] = std::string(to_string(sc.friction));
  return j.dump(2);
}

Scenario scenario_from_json(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("scenario: ") + e.what());
  }
  Scenario sc;
  try {
    sc.object = j.at("object").get<std::string>();
    sc.approach_deg = j.value("approach_deg", 0.0);
    sc.perturb_deg = j.value("perturb_deg", 0.0);
    sc.protocol = protocol_from_string(j.value("protocol", std::string("rotate-to-stop")));
    if (j.contains("stop_deg") && !j["stop_deg"].is_null()) sc.stop_deg = j["stop_deg"].get<double>();
    sc.seed = j.value("seed", std::uint64_t{0});
    sc.friction = friction_variant_from_string(j.value("friction", std::string("nominal")));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("scenario: ") + e.what());
  }
  find_object(sc.object);
  if (sc.protocol == Protocol::AngleGoal && !sc.stop_deg) {
    throw ParseError("scenario: angle-goal protocol requires stop_deg");
  }
  return sc;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open scenario file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return scenario_from_json(ss.str());
}

}  // namespace pivot
