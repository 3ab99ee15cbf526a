#pragma once

#include "facecap/anatomy.hpp"
#include "facecap/material.hpp"

#include <memory>
#include <string>
#include <vector>

namespace facecap {

struct SolveSettings {
  /// Convergence when ||f_U||_inf < relative_tolerance * characteristic force.
  double relative_tolerance = 1e-6;
  int max_iterations = 50;
  /// Relative residual accepted from the inner linear solve.
  double linear_tolerance = 1e-8;
  double backtrack = 0.5;
  int max_halvings = 20;
  /// Clamp per-tet stiffness blocks to PSD inside Newton.
  bool project_definiteness = true;
};

struct EquilibriumState {
  /// Every flesh vertex; constrained rows hold X^C.
  Points positions;
  Vector activations;
  Vector b;
  JawParams j = JawParams::Zero();
  double residual = 0.0;  // ||f_U||_inf
  double tolerance = 0.0;
  int iterations = 0;
  bool converged = false;
  std::string message;
};

/// Per-muscle spring forces k_m (target - x) on member vertices; overlaps add.
Points track_forces(const std::vector<Muscle>& muscles, const std::vector<Points>& targets,
                    const Points& positions);

/// One-sided quadratic penalty f = -k min(phi, 0) grad(phi) on the listed vertices.
Points collision_forces(const std::vector<CollisionProxy>& proxies, const std::vector<int>& vertices,
                        const Points& positions);

/// Mean per-vertex force magnitude of the passive body under a 1% uniform
/// compression of the rest mesh.
double characteristic_force(const TetMesh& mesh, const MaterialParams& params);

/// Quasistatic muscle-track simulation of one anatomy. Owns copies of its
/// inputs; safe to share across threads for concurrent solves.
class Simulator {
 public:
  Simulator(TetMesh mesh, Anatomy anatomy, PrecomputedMuscleBasis basis);

  const TetMesh& mesh() const { return *mesh_; }
  const Anatomy& anatomy() const { return anatomy_; }
  const PrecomputedMuscleBasis& basis() const { return basis_; }
  const ElasticModel& elastic() const { return elastic_; }
  const std::vector<int>& constrained() const { return anatomy_.constrained; }
  const std::vector<int>& unconstrained() const { return unconstrained_; }
  int num_shapes() const { return basis_.num_shapes(); }
  int num_parameters() const { return num_shapes() + kJawDofs; }
  double characteristic_force() const { return characteristic_force_; }

  /// X^C for jaw parameters j (3 x |constrained|).
  Points constrained_positions(const JawParams& j) const;
  std::array<Points, kJawDofs> constrained_derivatives(const JawParams& j) const;

  /// Activations from center-line lengths of C_m(b, j); independent of X.
  std::vector<ActivationValue> activation_values(const Vector& b, const JawParams& j) const;
  Vector activations(const Vector& b, const JawParams& j) const;

  /// f_fvm + f_collisions + f_tracks at every vertex (constrained rows included).
  Points total_forces(const Points& positions, const Vector& activations,
                      const std::vector<Points>& targets) const;

  /// -df_U/dX^U including the track springs and collision penalties, 3U x 3U.
  SparseMatrix system_matrix(const Points& positions, const Vector& activations, bool project) const;
  /// df_U/dX^C, 3U x 3C (exact).
  SparseMatrix coupling_matrix(const Points& positions, const Vector& activations) const;

  EquilibriumState solve(const Vector& b, const JawParams& j, const SolveSettings& settings,
                         const Points* warm_start = nullptr) const;

  /// Lower-level solve with explicit activations, track targets and X^C.
  EquilibriumState solve_with(const Vector& activations, const std::vector<Points>& targets,
                              const Points& constrained_positions, const SolveSettings& settings,
                              const Points* warm_start = nullptr) const;

  /// Rest positions with X^C placed for j and, if given, X^U copied from warm_start.
  Points initial_positions(const Points& constrained_positions, const Points* warm_start) const;

 private:
  Vector restrict_unconstrained(const Points& full) const;
  void scatter_unconstrained(const Vector& x, Points& full) const;

  std::shared_ptr<const TetMesh> mesh_;
  Anatomy anatomy_;
  PrecomputedMuscleBasis basis_;
  ElasticModel elastic_;
  std::vector<int> unconstrained_;
  std::vector<int> dof_slot_;  // vertex -> unconstrained slot or -1
  std::vector<int> constrained_slot_;
  Vector constrained_weights_;
  double characteristic_force_ = 1.0;
};

}  // namespace facecap
