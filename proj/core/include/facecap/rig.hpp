#pragma once

#include "facecap/common.hpp"

#include <memory>
#include <string>
#include <vector>

namespace facecap {

inline constexpr int kJawDofs = 6;

/// Jaw parameters: XYZ Euler angles (radians) followed by a translation.
using JawParams = Eigen::Matrix<double, kJawDofs, 1>;

struct Blendshapes {
  Points neutral;
  /// (3 * num_vertices) x K; column k is the flattened delta field of shape k.
  Matrix deltas;
  std::vector<std::string> names;

  int num_vertices() const { return static_cast<int>(neutral.cols()); }
  int num_shapes() const { return static_cast<int>(deltas.cols()); }

  /// n + B b
  Points pre_skin(const Vector& b) const;
  Points delta(int k) const;
};

struct JawJoint {
  Vec3 pivot = Vec3::Zero();
};

/// Rotation and translation of the jaw frame for parameters j.
struct JawTransform {
  Mat3 rotation;
  Vec3 translation;
  Vec3 pivot;

  JawTransform(const JawJoint& joint, const JawParams& j);
  Vec3 apply(const Vec3& p) const { return rotation * (p - pivot) + pivot + translation; }
};

/// Linear blend between the cranium frame (identity) and the jaw frame:
/// x = (1 - w) p + w (R (p - pivot) + pivot + t).
Points skin_transform(const JawJoint& joint, const Vector& weights, const JawParams& j,
                      const Points& pre_skin);

/// Linear part of the skin transform applied to displacement vectors:
/// (1 - w) d + w R d.
Points skin_linear(const JawJoint& joint, const Vector& weights, const JawParams& j,
                   const Points& displacements);

/// d(skin_transform)/dj_k for each of the six jaw parameters.
std::array<Points, kJawDofs> skin_transform_derivatives(const JawJoint& joint, const Vector& weights,
                                                        const JawParams& j, const Points& pre_skin);

/// Shape parameters the deformers consume.
struct ShapeParams {
  Vector b;
  JawParams j = JawParams::Zero();
};

/// Maps animator controls w to (b, j). The default is the identity
/// concatenation w = (b, j); nonlinear corrective mappings plug in here.
class ControlMap {
 public:
  virtual ~ControlMap() = default;
  virtual int num_controls(int num_shapes) const = 0;
  virtual ShapeParams map(const Vector& w, int num_shapes) const = 0;
  /// d(b, j)/dw, (K + 6) x num_controls.
  virtual Matrix jacobian(const Vector& w, int num_shapes) const = 0;
};

class IdentityControlMap final : public ControlMap {
 public:
  int num_controls(int num_shapes) const override { return num_shapes + kJawDofs; }
  ShapeParams map(const Vector& w, int num_shapes) const override;
  Matrix jacobian(const Vector& w, int num_shapes) const override;
};

const ControlMap& identity_controls();

struct Rig {
  Blendshapes shapes;
  JawJoint jaw;
  /// Per surface vertex jaw weight in [0, 1].
  Vector skin_weights;

  int num_shapes() const { return shapes.num_shapes(); }
  int num_vertices() const { return shapes.num_vertices(); }
  void validate() const;
};

/// x(w) = T(j(w)) (n + B b(w))
Points evaluate_surface(const Rig& rig, const Vector& w,
                        const ControlMap& controls = identity_controls());

/// dx/dw, (3 * V) x |w|.
Matrix surface_jacobian(const Rig& rig, const Vector& w,
                        const ControlMap& controls = identity_controls());

}  // namespace facecap
