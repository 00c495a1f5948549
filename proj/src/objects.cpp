#include "pivot/objects.hpp"

#include <array>
#include <cmath>

#include "pivot/errors.hpp"

namespace pivot {

namespace {

constexpr double kComFraction = 0.3;
constexpr double kPadRadius = 0.010;
constexpr double kMuHousehold = 0.6;
constexpr double kMuPrinted = 0.7;
constexpr double kKineticRatio = 0.9;

ObjectProfile make_box(const char* name, double l_mm, double w_mm, double d_mm,
                       double mass_g, double mu) {
  ObjectProfile o;
  o.name = name;
  o.cls = ObjectClass::Box;
  o.mass = mass_g / 1000.0;
  o.length = l_mm / 1000.0;
  o.width = w_mm / 1000.0;
  o.depth = d_mm / 1000.0;
  o.com_offset = kComFraction * o.length;
  o.mu_static = mu;
  o.mu_kinetic = kKineticRatio * mu;
  o.pad_contact_radius = kPadRadius;
  return o;
}

// Cylinders are listed as diameter x height.
ObjectProfile make_cylinder(const char* name, double diameter_mm, double h_mm,
                            double mass_g, double mu) {
  ObjectProfile o = make_box(name, h_mm, diameter_mm, diameter_mm, mass_g, mu);
  o.cls = ObjectClass::Cylinder;
  return o;
}

const std::array<ObjectProfile, 10>& table() {
  static const std::array<ObjectProfile, 10> objects = {
      make_box("Toothpaste", 167, 58, 12, 52, kMuHousehold),
      make_box("Earbud", 134, 51, 29, 27, kMuHousehold),
      make_box("Breadboard", 167, 58, 12, 84, kMuHousehold),
      make_box("Magnet", 181, 68, 40, 29, kMuHousehold),
      make_cylinder("Deodorant", 49, 210, 50, kMuHousehold),
      make_cylinder("Spray2", 41, 158, 135, kMuHousehold),
      make_cylinder("Shampoo", 50, 157, 96, kMuPrinted),
      make_cylinder("Spray1", 37, 142, 46, kMuPrinted),
      make_cylinder("Pill", 55, 116, 26, kMuHousehold),
      make_box("Toothbrush", 217, 29, 21, 33, kMuHousehold),
  };
  return objects;
}

}  // namespace

std::string_view to_string(ObjectClass c) {
  return c == ObjectClass::Box ? "Box" : "Cylinder";
}

ObjectClass object_class_from_string(std::string_view s) {
  if (s == "Box" || s == "box") return ObjectClass::Box;
  if (s == "Cylinder" || s == "cylinder" || s == "Cyl" || s == "cyl") return ObjectClass::Cylinder;
  throw RangeError("unknown object class '" + std::string(s) + "' (expected Box or Cylinder)");
}

double ObjectProfile::pivot_inertia() const {
  double i_com = 0.0;
  if (cls == ObjectClass::Box) {
    i_com = mass * (length * length + width * width) / 12.0;
  } else {
    const double r = width / 2.0;
    i_com = mass * (3.0 * r * r + length * length) / 12.0;
  }
  return i_com + mass * com_offset * com_offset;
}

void ObjectProfile::validate() const {
  auto fail = [&](const std::string& what) {
    throw RangeError("object '" + name + "': " + what);
  };
  if (!(mass > 0.0)) fail("mass must be positive");
  if (!(length > width && length > depth)) fail("length must exceed width and depth");
  if (!(width > 0.0 && depth > 0.0)) fail("width and depth must be positive");
  if (!(com_offset > 0.0 && com_offset <= length)) fail("com_offset must lie in (0, length]");
  if (!(mu_kinetic >= 0.0 && mu_kinetic <= mu_static)) fail("require 0 <= mu_kinetic <= mu_static");
  if (!(pad_contact_radius >= 0.0)) fail("pad_contact_radius must be non-negative");
}

std::span<const ObjectProfile> object_table() { return table(); }

const ObjectProfile& find_object(std::string_view name) {
  for (const auto& o : table()) {
    if (o.name == name) return o;
  }
  std::string valid;
  for (const auto& o : table()) {
    if (!valid.empty()) valid += ", ";
    valid += o.name;
  }
  throw RangeError("unknown object '" + std::string(name) + "'; valid names: " + valid);
}

std::vector<std::string> object_names() {
  std::vector<std::string> names;
  for (const auto& o : table()) names.push_back(o.name);
  return names;
}

std::string_view to_string(FrictionVariant v) {
  return v == FrictionVariant::Nominal ? "nominal" : "taped";
}

FrictionVariant friction_variant_from_string(std::string_view s) {
  if (s == "nominal") return FrictionVariant::Nominal;
  if (s == "taped") return FrictionVariant::Taped;
  throw RangeError("unknown friction variant '" + std::string(s) + "' (expected nominal or taped)");
}

ObjectProfile apply_friction_variant(ObjectProfile object, FrictionVariant v) {
  if (v == FrictionVariant::Taped) {
    object.mu_static *= 1.25;
    object.mu_kinetic *= 1.25;
  }
  return object;
}

}  // namespace pivot
