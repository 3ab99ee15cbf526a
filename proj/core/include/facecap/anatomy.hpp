#pragma once

#include "facecap/geometry.hpp"
#include "facecap/material.hpp"
#include "facecap/rig.hpp"

#include <string>
#include <vector>

namespace facecap {

/// Activation-length law: a linear ramp from a = 0 at the rest length L0 to
/// a = 1 at (1 - s) L0, with both corners rounded by C1 cubics spanning
/// 2 h on the ramp side. Non-increasing in L, a(L0) = 0.
struct ActivationCurve {
  double rest_length = 1.0;
  double shortening = 0.3;
  double smoothing = 0.01;  // h, length units
};

struct ActivationValue {
  double value = 0.0;
  double slope = 0.0;  // da/dL
};

ActivationValue activation(const ActivationCurve& curve, double length);

double curve_length(const Points& curve);

/// dL/dC_i for every curve vertex (3 x n).
Points curve_length_gradient(const Points& curve);

struct Muscle {
  std::string name;
  std::vector<int> tets;
  std::vector<Vec3> fibers;  // one unit direction per entry of `tets`
  /// Unconstrained flesh vertices driven by this muscle's track springs
  /// (the rows of the selector I_m).
  std::vector<int> vertices;
  double stiffness = 1.0;  // k_m, K_m = k_m I
  Points curve_rest;
  Embedding curve_embedding;
  ActivationCurve activation;

  void validate(const TetMesh& mesh) const;
};

/// Builds a muscle from its tets, fibers and center-line: collects member
/// vertices (skipping `constrained`), embeds the curve and sets L0 from it.
/// `smoothing_fraction` is h / L0.
Muscle make_muscle(std::string name, const TetMesh& mesh, std::vector<int> tets,
                   std::vector<Vec3> fibers, Points curve, double stiffness, double shortening,
                   double smoothing_fraction, const std::vector<int>& constrained);

/// Everything volumetric that accompanies a rig.
struct Anatomy {
  std::vector<Muscle> muscles;
  MaterialParams material;
  std::vector<CollisionProxy> proxies;
  /// Flesh vertices that follow the cranium/jaw kinematically (X^C).
  std::vector<int> constrained;

  int num_muscles() const { return static_cast<int>(muscles.size()); }
};

/// Per-muscle blendshape basis: rest targets, per-shape displacements and
/// volumetric skin weights, for track vertices and curve points.
struct MuscleBasis {
  Points rest;
  std::vector<Points> shapes;
  Vector skin_weights;
  Points curve_rest;
  std::vector<Points> curve_shapes;
  Vector curve_skin_weights;
};

struct PrecomputedMuscleBasis {
  std::vector<std::string> shape_names;
  JawJoint jaw;
  std::vector<MuscleBasis> muscles;
  /// Volumetric jaw weights at every flesh vertex.
  Vector volume_skin_weights;
  /// Harmonic extension of each blendshape into the whole flesh mesh.
  std::vector<Points> volume_fields;

  int num_shapes() const { return static_cast<int>(shape_names.size()); }
  int num_muscles() const { return static_cast<int>(muscles.size()); }
};

/// One Poisson solve per blendshape (Dirichlet data = the pre-skinning delta
/// on the outer boundary) plus one scalar solve for the skin weights, then
/// sampling at track vertices and curve points. `laplacian` must constrain
/// exactly mesh.boundary(), in that order, matching the rig's vertices.
PrecomputedMuscleBasis precompute_basis(const TetMesh& mesh, const Rig& rig,
                                        const std::vector<Muscle>& muscles,
                                        const VolumetricLaplacian& laplacian);

/// M_m(b, j) = T_m(j) (M_m^0 + sum_k M_m^k b_k)
std::vector<Points> muscle_targets(const PrecomputedMuscleBasis& basis, const Vector& b,
                                   const JawParams& j);

/// C_m(b, j), same form as the targets.
std::vector<Points> muscle_curves(const PrecomputedMuscleBasis& basis, const Vector& b,
                                  const JawParams& j);

/// dM_m/dp and dC_m/dp for parameter p in (b_0..b_{K-1}, j_0..j_5).
Points target_derivative(const PrecomputedMuscleBasis& basis, int muscle, const Vector& b,
                         const JawParams& j, int param);
Points curve_derivative(const PrecomputedMuscleBasis& basis, int muscle, const Vector& b,
                        const JawParams& j, int param);

/// Pre-skinning morph of the whole flesh mesh: rest + sum_k field_k b_k.
Points morph_volume(const TetMesh& mesh, const PrecomputedMuscleBasis& basis, const Vector& b);

}  // namespace facecap
