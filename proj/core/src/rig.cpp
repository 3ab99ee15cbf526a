#include "facecap/rig.hpp"

#include "facecap/rotation.hpp"

#include <Eigen/Geometry>

#include <cmath>

namespace facecap {

Mat3 euler_xyz(const Vec3& a) {
  return (Eigen::AngleAxisd(a.x(), Vec3::UnitX()) * Eigen::AngleAxisd(a.y(), Vec3::UnitY()) *
          Eigen::AngleAxisd(a.z(), Vec3::UnitZ()))
      .toRotationMatrix();
}

std::array<Mat3, 3> euler_xyz_derivatives(const Vec3& a) {
  const Mat3 rx = Eigen::AngleAxisd(a.x(), Vec3::UnitX()).toRotationMatrix();
  const Mat3 ry = Eigen::AngleAxisd(a.y(), Vec3::UnitY()).toRotationMatrix();
  const Mat3 rz = Eigen::AngleAxisd(a.z(), Vec3::UnitZ()).toRotationMatrix();
  // d/dt of a rotation about axis e is [e]x R.
  Mat3 gx, gy, gz;
  gx << 0, 0, 0, 0, 0, -1, 0, 1, 0;
  gy << 0, 0, 1, 0, 0, 0, -1, 0, 0;
  gz << 0, -1, 0, 1, 0, 0, 0, 0, 0;
  return {gx * rx * ry * rz, rx * gy * ry * rz, rx * ry * gz * rz};
}

Points Blendshapes::pre_skin(const Vector& b) const {
  if (b.size() != num_shapes()) throw InputError("blendshape weight count does not match rig");
  Points out = neutral;
  flatten(out) += deltas * b;
  return out;
}

Points Blendshapes::delta(int k) const {
  return Eigen::Map<const Points>(deltas.col(k).data(), 3, num_vertices());
}

JawTransform::JawTransform(const JawJoint& joint, const JawParams& j)
    : rotation(euler_xyz(j.head<3>())), translation(j.tail<3>()), pivot(joint.pivot) {}

Points skin_transform(const JawJoint& joint, const Vector& weights, const JawParams& j,
                      const Points& pre_skin) {
  if (weights.size() != pre_skin.cols()) throw InputError("skin weight count does not match vertices");
  const JawTransform xf(joint, j);
  Points out(3, pre_skin.cols());
  for (Eigen::Index i = 0; i < pre_skin.cols(); ++i) {
    const Vec3 p = pre_skin.col(i);
    out.col(i) = (1.0 - weights[i]) * p + weights[i] * xf.apply(p);
  }
  return out;
}

Points skin_linear(const JawJoint& joint, const Vector& weights, const JawParams& j,
                   const Points& displacements) {
  if (weights.size() != displacements.cols()) throw InputError("skin weight count does not match vertices");
  const JawTransform xf(joint, j);
  Points out(3, displacements.cols());
  for (Eigen::Index i = 0; i < displacements.cols(); ++i) {
    const Vec3 d = displacements.col(i);
    out.col(i) = (1.0 - weights[i]) * d + weights[i] * (xf.rotation * d);
  }
  return out;
}

std::array<Points, kJawDofs> skin_transform_derivatives(const JawJoint& joint, const Vector& weights,
                                                        const JawParams& j, const Points& pre_skin) {
  if (weights.size() != pre_skin.cols()) throw InputError("skin weight count does not match vertices");
  const auto dr = euler_xyz_derivatives(j.head<3>());
  std::array<Points, kJawDofs> out;
  for (auto& o : out) o.resize(3, pre_skin.cols());
  for (Eigen::Index i = 0; i < pre_skin.cols(); ++i) {
    const Vec3 rel = pre_skin.col(i) - joint.pivot;
    for (int k = 0; k < 3; ++k) out[k].col(i) = weights[i] * (dr[k] * rel);
    for (int k = 0; k < 3; ++k) out[3 + k].col(i) = weights[i] * Vec3::Unit(k);
  }
  return out;
}

ShapeParams IdentityControlMap::map(const Vector& w, int num_shapes) const {
  if (w.size() != num_shapes + kJawDofs) throw InputError("control vector has the wrong length");
  ShapeParams p;
  p.b = w.head(num_shapes);
  p.j = w.tail<kJawDofs>();
  return p;
}

Matrix IdentityControlMap::jacobian(const Vector& w, int num_shapes) const {
  if (w.size() != num_shapes + kJawDofs) throw InputError("control vector has the wrong length");
  return Matrix::Identity(w.size(), w.size());
}

const ControlMap& identity_controls() {
  static const IdentityControlMap map;
  return map;
}

void Rig::validate() const {
  if (num_shapes() < 1) throw InputError("rig needs at least one blendshape");
  if (shapes.deltas.rows() != 3 * shapes.neutral.cols())
    throw InputError("blendshape delta rows do not match the neutral");
  if (!shapes.deltas.allFinite()) throw InputError("blendshape deltas contain non-finite values");
  if (static_cast<int>(shapes.names.size()) != num_shapes())
    throw InputError("blendshape name count does not match shape count");
  if (skin_weights.size() != num_vertices()) throw InputError("skin weight count does not match rig");
  if ((skin_weights.array() < 0.0).any() || (skin_weights.array() > 1.0).any())
    throw InputError("skin weights must lie in [0, 1]");
}

Points evaluate_surface(const Rig& rig, const Vector& w, const ControlMap& controls) {
  const ShapeParams p = controls.map(w, rig.num_shapes());
  return skin_transform(rig.jaw, rig.skin_weights, p.j, rig.shapes.pre_skin(p.b));
}

Matrix surface_jacobian(const Rig& rig, const Vector& w, const ControlMap& controls) {
  const int k = rig.num_shapes();
  const ShapeParams p = controls.map(w, k);
  const Points pre = rig.shapes.pre_skin(p.b);
  Matrix d(3 * rig.num_vertices(), k + kJawDofs);
  for (int s = 0; s < k; ++s)
    d.col(s) = flatten(skin_linear(rig.jaw, rig.skin_weights, p.j, rig.shapes.delta(s)));
  const auto dj = skin_transform_derivatives(rig.jaw, rig.skin_weights, p.j, pre);
  for (int s = 0; s < kJawDofs; ++s) d.col(k + s) = flatten(dj[s]);
  return d * controls.jacobian(w, k);
}

}  // namespace facecap
