#pragma once

#include "facecap/quasistatic.hpp"

#include <string>
#include <vector>

namespace facecap {

struct SensitivitySettings {
  int threads = 1;
  /// Solve with the exact equilibrium Hessian; fall back to the per-tet
  /// projected matrix only if the exact one is not positive definite.
  bool exact_hessian = true;
};

/// dX/dp at an equilibrium for p = (b_0..b_{K-1}, j_0..j_5), every flesh
/// vertex (3N x P, constrained rows included).
struct Sensitivities {
  Matrix dX;
  bool used_projection = false;

  int num_parameters() const { return static_cast<int>(dX.cols()); }
};

/// Right-hand side of the linearized equilibrium for one parameter,
/// restricted to the unconstrained dofs (3U).
Vector sensitivity_rhs(const Simulator& sim, const EquilibriumState& state, int param);

/// One sparse factorization, one solve per parameter; columns run
/// concurrently. Throws InputError on an unconverged state.
Sensitivities solve_sensitivities(const Simulator& sim, const EquilibriumState& state,
                                  const SensitivitySettings& settings = {});

struct GradientCheckRow {
  std::string parameter;
  double analytic_norm = 0.0;
  double fd_norm = 0.0;
  double rel_error = 0.0;
};

/// Parameter labels: blendshape names followed by jaw_rx .. jaw_tz.
std::vector<std::string> parameter_names(const Simulator& sim, const std::vector<std::string>& shapes);

/// Compares every column of dX/dp at (b, j), restricted to the `observed`
/// vertices, against central differences of full equilibrium solves with
/// step h. Rel. error is |analytic - fd| / max(|fd|, |analytic|), or 0 when
/// both vanish.
std::vector<GradientCheckRow> gradient_check(const Simulator& sim, const Vector& b, const JawParams& j,
                                             const std::vector<int>& observed,
                                             const std::vector<std::string>& names, double h = 1e-5,
                                             int threads = 1);

/// Global rigid transform applied to the deformed surface.
struct RigidParams {
  Vec3 rotation = Vec3::Zero();  // XYZ Euler angles
  Vec3 translation = Vec3::Zero();

  Points apply(const Points& x) const;
};

/// Jacobian of y = R x(w) + t with respect to (w, theta, t):
/// [R dx/dw | dR/dtheta_i x | I]. `dx_dw` is (3P x |w|), `x` the pre-rigid
/// observables (3 x P).
Matrix chain_to_observables(const Matrix& dx_dw, const Points& x, const RigidParams& rigid);

/// dX/dw for a control map: dX/d(b, j) * d(b, j)/dw.
Matrix chain_controls(const Matrix& dX_dp, const Matrix& control_jacobian);

}  // namespace facecap
