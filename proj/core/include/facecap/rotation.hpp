#pragma once

#include "facecap/common.hpp"

namespace facecap {

/// Intrinsic XYZ Euler rotation, R = Rx(a.x) * Ry(a.y) * Rz(a.z), radians.
Mat3 euler_xyz(const Vec3& angles);

/// dR/da_i for i = 0, 1, 2.
std::array<Mat3, 3> euler_xyz_derivatives(const Vec3& angles);

}  // namespace facecap
