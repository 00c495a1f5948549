#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pivot {

enum class ObjectClass { Box, Cylinder };

std::string_view to_string(ObjectClass c);
ObjectClass object_class_from_string(std::string_view s);

/// Physical description of a prism-like object held in the gripper.
///
/// Lengths are metres. The pivot plane spans length x width; the fingers
/// squeeze across depth. Cylinders use width = depth = diameter.
struct ObjectProfile {
  std::string name;
  ObjectClass cls = ObjectClass::Box;
  double mass = 0.0;
  double length = 0.0;
  double width = 0.0;
  double depth = 0.0;
  double com_offset = 0.0;  ///< grip point to centre of mass, along the long axis
  double mu_static = 0.0;
  double mu_kinetic = 0.0;
  double pad_contact_radius = 0.0;  ///< lever arm of the friction torque at one fingertip

  /// Thickness between the fingers, in millimetres.
  double grip_thickness_mm() const { return depth * 1000.0; }
  /// Moment of inertia about the grip axis (uniform solid + parallel axis), kg m^2.
  double pivot_inertia() const;
  /// Throws RangeError when an invariant does not hold.
  void validate() const;

  bool operator==(const ObjectProfile&) const = default;
};

/// The ten household objects, with simulator contact parameters filled in.
std::span<const ObjectProfile> object_table();

/// Throws RangeError listing the valid names when `name` is unknown.
const ObjectProfile& find_object(std::string_view name);

std::vector<std::string> object_names();

enum class FrictionVariant { Nominal, Taped };

std::string_view to_string(FrictionVariant v);
FrictionVariant friction_variant_from_string(std::string_view s);

/// Taped surfaces scale both friction coefficients by 1.25.
ObjectProfile apply_friction_variant(ObjectProfile object, FrictionVariant v);

}  // namespace pivot
