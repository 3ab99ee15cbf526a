#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <array>
#include <stdexcept>
#include <string>

namespace facecap {

inline constexpr const char* kVersion = "0.1.0";

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

/// Point sets are stored one point per column, so the flattened layout of a
/// `Points` matrix is (x0, y0, z0, x1, ...).
using Points = Eigen::Matrix3Xd;

using Tet = std::array<int, 4>;
using Triangle = std::array<int, 3>;

/// Malformed inputs, inconsistent dimensions, bad files.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical failures: non-convergence, singular systems.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline Eigen::Map<const Vector> flatten(const Points& p) {
  return {p.data(), p.size()};
}

inline Eigen::Map<Vector> flatten(Points& p) { return {p.data(), p.size()}; }

inline Points unflatten(const Vector& v) {
  if (v.size() % 3 != 0) throw InputError("flat point vector length is not a multiple of 3");
  return Eigen::Map<const Points>(v.data(), 3, v.size() / 3);
}

}  // namespace facecap
