#pragma once

#include "facecap/geometry.hpp"

#include <optional>
#include <vector>

namespace facecap {

/// Constitutive constants. The defaults are synthetic desk-scale values,
/// not measured tissue properties.
struct MaterialParams {
  double mu10 = 30000.0;
  double mu01 = 10000.0;
  double kappa = 60000.0;
  double k_passive = 8000.0;
  double sigma_max = 300000.0;
  double clamp_sv = 0.2;

  void validate() const;
};

using Matrix9 = Eigen::Matrix<double, 9, 9>;

/// First Piola-Kirchhoff stress and its derivative. dP_dF uses the
/// column-major flattening of both P and F.
struct StressEval {
  Mat3 P = Mat3::Zero();
  Matrix9 dP_dF = Matrix9::Zero();
  /// dP/da: active stress at unit activation.
  Mat3 P_active_unit = Mat3::Zero();
};

/// Replaces singular values of F below `clamp_sv` by `clamp_sv` (and
/// un-inverts reflected elements). Returns F unchanged when no clamp is
/// active.
Mat3 clamp_deformation(const Mat3& F, double clamp_sv);

/// Energy density of the clamped F:
///   mu10 (I1 - 3) + mu01 (I2 - 3) - (2 mu10 + 4 mu01) ln J + kappa/2 (ln J)^2
///   + k_passive max(lambda - 1, 0)^3 / 3 + a sigma_max lambda,
/// lambda = |F a0|. The fiber terms are skipped when `fiber` is empty.
double energy_density(const MaterialParams& params, const Mat3& F, double a,
                      const std::optional<Vec3>& fiber);

StressEval stress(const MaterialParams& params, const Mat3& F, double a,
                  const std::optional<Vec3>& fiber, bool with_tangent = true);

/// Building blocks used by the assembly; both take an already clamped F.
void add_isotropic_stress(const MaterialParams& params, const Mat3& F, StressEval& out,
                          bool with_tangent);
void add_fiber_stress(const MaterialParams& params, const Mat3& F, double a, const Vec3& fiber,
                      StressEval& out, bool with_tangent);

struct Muscle;

/// Fiber membership of a tet: overlapping muscles contribute one entry each.
struct TetFiber {
  int muscle = -1;
  Vec3 direction = Vec3::UnitX();
};

/// Finite-volume elastic body: per-tet forces G = -V0 P Dm^-T and their
/// Jacobian. Holds the per-tet fiber table built from the muscles.
class ElasticModel {
 public:
  ElasticModel(const TetMesh& mesh, MaterialParams params, const std::vector<Muscle>& muscles);

  const TetMesh& mesh() const { return *mesh_; }
  const MaterialParams& params() const { return params_; }
  int num_muscles() const { return num_muscles_; }
  const std::vector<std::vector<TetFiber>>& fibers() const { return fibers_; }

  double energy(const Points& positions, const Vector& activations) const;
  Points forces(const Points& positions, const Vector& activations) const;

  /// df/da_m for one muscle: the forces of its fibers at unit activation.
  Points active_forces(const Points& positions, int muscle) const;

  /// df/dx, (3N x 3N). With `project` each per-tet 12x12 stiffness block is
  /// clamped to be positive semi-definite, so -df/dx is PSD.
  SparseMatrix jacobian(const Points& positions, const Vector& activations, bool project) const;

 private:
  StressEval tet_stress(const Points& positions, const Vector& activations, int t,
                        bool with_tangent) const;

  const TetMesh* mesh_;
  MaterialParams params_;
  int num_muscles_ = 0;
  std::vector<std::vector<TetFiber>> fibers_;
  std::vector<Eigen::Matrix<double, 9, 12>> dF_dx_;
};

Points fvm_forces(const TetMesh& mesh, const Points& positions, const MaterialParams& params,
                  const std::vector<Muscle>& muscles, const Vector& activations);

SparseMatrix force_jacobian(const TetMesh& mesh, const Points& positions,
                            const MaterialParams& params, const std::vector<Muscle>& muscles,
                            const Vector& activations, bool project = true);

}  // namespace facecap
