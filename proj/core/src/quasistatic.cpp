#include "facecap/quasistatic.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace facecap {

Points track_forces(const std::vector<Muscle>& muscles, const std::vector<Points>& targets,
                    const Points& positions) {
  if (targets.size() != muscles.size()) throw InputError("one target set per muscle required");
  Points f = Points::Zero(3, positions.cols());
  for (size_t m = 0; m < muscles.size(); ++m) {
    const Muscle& muscle = muscles[m];
    if (targets[m].cols() != static_cast<Eigen::Index>(muscle.vertices.size()))
      throw InputError("muscle target count does not match its track vertices");
    for (size_t i = 0; i < muscle.vertices.size(); ++i) {
      const int v = muscle.vertices[i];
      f.col(v) += muscle.stiffness * (targets[m].col(i) - positions.col(v));
    }
  }
  return f;
}

Points collision_forces(const std::vector<CollisionProxy>& proxies, const std::vector<int>& vertices,
                        const Points& positions) {
  Points f = Points::Zero(3, positions.cols());
  for (const CollisionProxy& proxy : proxies) {
    for (int v : vertices) {
      const SignedDistance sd = signed_distance(proxy, positions.col(v));
      if (sd.value < 0.0) f.col(v) -= proxy.stiffness * sd.value * sd.gradient;
    }
  }
  return f;
}

double characteristic_force(const TetMesh& mesh, const MaterialParams& params) {
  const Vec3 center = mesh.rest().rowwise().mean();
  const Points compressed = (0.99 * (mesh.rest().colwise() - center)).colwise() + center;
  const ElasticModel body(mesh, params, {});
  const Points f = body.forces(compressed, Vector());
  return f.colwise().norm().mean();
}

Simulator::Simulator(TetMesh mesh, Anatomy anatomy, PrecomputedMuscleBasis basis)
    : mesh_(std::make_shared<const TetMesh>(std::move(mesh))),
      anatomy_(std::move(anatomy)),
      basis_(std::move(basis)),
      elastic_(*mesh_, anatomy_.material, anatomy_.muscles) {
  const int n = mesh_->num_vertices();
  if (basis_.num_muscles() != anatomy_.num_muscles())
    throw InputError("muscle basis does not match the anatomy");
  if (basis_.volume_skin_weights.size() != n)
    throw InputError("volumetric skin weights do not match the flesh mesh");
  dof_slot_.assign(n, -1);
  constrained_slot_.assign(n, -1);
  for (size_t i = 0; i < anatomy_.constrained.size(); ++i) {
    const int v = anatomy_.constrained[i];
    if (v < 0 || v >= n) throw InputError("constrained vertex out of range");
    constrained_slot_[v] = static_cast<int>(i);
  }
  for (int v = 0; v < n; ++v) {
    if (constrained_slot_[v] < 0) {
      dof_slot_[v] = static_cast<int>(unconstrained_.size());
      unconstrained_.push_back(v);
    }
  }
  for (size_t m = 0; m < anatomy_.muscles.size(); ++m) {
    const Muscle& muscle = anatomy_.muscles[m];
    muscle.validate(*mesh_);
    for (int v : muscle.vertices)
      if (dof_slot_[v] < 0) throw InputError("muscle " + muscle.name + " tracks a constrained vertex");
    if (basis_.muscles[m].rest.cols() != static_cast<Eigen::Index>(muscle.vertices.size()))
      throw InputError("muscle basis does not match muscle " + muscle.name);
  }
  constrained_weights_.resize(anatomy_.constrained.size());
  for (size_t i = 0; i < anatomy_.constrained.size(); ++i)
    constrained_weights_[i] = basis_.volume_skin_weights[anatomy_.constrained[i]];
  characteristic_force_ = facecap::characteristic_force(*mesh_, anatomy_.material);
}

Points Simulator::constrained_positions(const JawParams& j) const {
  Points rest(3, anatomy_.constrained.size());
  for (size_t i = 0; i < anatomy_.constrained.size(); ++i) rest.col(i) = mesh_->rest().col(anatomy_.constrained[i]);
  return skin_transform(basis_.jaw, constrained_weights_, j, rest);
}

std::array<Points, kJawDofs> Simulator::constrained_derivatives(const JawParams& j) const {
  Points rest(3, anatomy_.constrained.size());
  for (size_t i = 0; i < anatomy_.constrained.size(); ++i) rest.col(i) = mesh_->rest().col(anatomy_.constrained[i]);
  return skin_transform_derivatives(basis_.jaw, constrained_weights_, j, rest);
}

std::vector<ActivationValue> Simulator::activation_values(const Vector& b, const JawParams& j) const {
  const std::vector<Points> curves = muscle_curves(basis_, b, j);
  std::vector<ActivationValue> out;
  out.reserve(curves.size());
  for (size_t m = 0; m < curves.size(); ++m)
    out.push_back(activation(anatomy_.muscles[m].activation, curve_length(curves[m])));
  return out;
}

Vector Simulator::activations(const Vector& b, const JawParams& j) const {
  const auto values = activation_values(b, j);
  Vector a(values.size());
  for (size_t m = 0; m < values.size(); ++m) a[m] = values[m].value;
  return a;
}

Points Simulator::total_forces(const Points& positions, const Vector& activations,
                               const std::vector<Points>& targets) const {
  return elastic_.forces(positions, activations) +
         collision_forces(anatomy_.proxies, unconstrained_, positions) +
         track_forces(anatomy_.muscles, targets, positions);
}

SparseMatrix Simulator::system_matrix(const Points& positions, const Vector& activations,
                                      bool project) const {
  const SparseMatrix jac = elastic_.jacobian(positions, activations, project);
  std::vector<Triplet> trips;
  trips.reserve(jac.nonZeros());
  for (int col = 0; col < jac.outerSize(); ++col) {
    const int cs = dof_slot_[col / 3];
    if (cs < 0) continue;
    for (SparseMatrix::InnerIterator it(jac, col); it; ++it) {
      const int rs = dof_slot_[it.row() / 3];
      if (rs < 0) continue;
      trips.emplace_back(3 * rs + it.row() % 3, 3 * cs + col % 3, -it.value());
    }
  }
  for (const Muscle& m : anatomy_.muscles)
    for (int v : m.vertices)
      for (int c = 0; c < 3; ++c) trips.emplace_back(3 * dof_slot_[v] + c, 3 * dof_slot_[v] + c, m.stiffness);
  for (const CollisionProxy& proxy : anatomy_.proxies) {
    for (int v : unconstrained_) {
      const SignedDistance sd = signed_distance(proxy, positions.col(v));
      if (sd.value >= 0.0) continue;
      Mat3 k = proxy.stiffness * sd.gradient * sd.gradient.transpose();
      if (!project) k += proxy.stiffness * sd.value * sd.hessian;
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) trips.emplace_back(3 * dof_slot_[v] + r, 3 * dof_slot_[v] + c, k(r, c));
    }
  }
  const int n = 3 * static_cast<int>(unconstrained_.size());
  SparseMatrix out(n, n);
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

SparseMatrix Simulator::coupling_matrix(const Points& positions, const Vector& activations) const {
  const SparseMatrix jac = elastic_.jacobian(positions, activations, false);
  std::vector<Triplet> trips;
  for (int col = 0; col < jac.outerSize(); ++col) {
    const int cs = constrained_slot_[col / 3];
    if (cs < 0) continue;
    for (SparseMatrix::InnerIterator it(jac, col); it; ++it) {
      const int rs = dof_slot_[it.row() / 3];
      if (rs < 0) continue;
      trips.emplace_back(3 * rs + it.row() % 3, 3 * cs + col % 3, it.value());
    }
  }
  SparseMatrix out(3 * unconstrained_.size(), 3 * anatomy_.constrained.size());
  out.setFromTriplets(trips.begin(), trips.end());
  return out;
}

Vector Simulator::restrict_unconstrained(const Points& full) const {
  Vector x(3 * unconstrained_.size());
  for (size_t i = 0; i < unconstrained_.size(); ++i) x.segment<3>(3 * i) = full.col(unconstrained_[i]);
  return x;
}

void Simulator::scatter_unconstrained(const Vector& x, Points& full) const {
  for (size_t i = 0; i < unconstrained_.size(); ++i) full.col(unconstrained_[i]) = x.segment<3>(3 * i);
}

Points Simulator::initial_positions(const Points& xc, const Points* warm_start) const {
  if (xc.cols() != static_cast<Eigen::Index>(anatomy_.constrained.size()))
    throw InputError("constrained position count does not match the anatomy");
  Points x = mesh_->rest();
  if (warm_start) {
    if (warm_start->cols() != mesh_->num_vertices()) throw InputError("warm start does not match the mesh");
    for (int v : unconstrained_) x.col(v) = warm_start->col(v);
  }
  for (size_t i = 0; i < anatomy_.constrained.size(); ++i) x.col(anatomy_.constrained[i]) = xc.col(i);
  return x;
}

EquilibriumState Simulator::solve(const Vector& b, const JawParams& j, const SolveSettings& settings,
                                  const Points* warm_start) const {
  if (b.size() != num_shapes()) throw InputError("blendshape weight count does not match the basis");
  // Activations are fixed before the Newton loop: they depend on (b, j) only.
  const Vector a = activations(b, j);
  EquilibriumState state =
      solve_with(a, muscle_targets(basis_, b, j), constrained_positions(j), settings, warm_start);
  state.b = b;
  state.j = j;
  return state;
}

EquilibriumState Simulator::solve_with(const Vector& activations, const std::vector<Points>& targets,
                                       const Points& xc, const SolveSettings& settings,
                                       const Points* warm_start) const {
  EquilibriumState state;
  state.activations = activations;
  state.b = Vector::Zero(num_shapes());
  state.tolerance = settings.relative_tolerance * characteristic_force_;
  state.positions = initial_positions(xc, warm_start);

  auto residual_vector = [&](const Points& x) {
    return restrict_unconstrained(total_forces(x, activations, targets));
  };

  Vector f = residual_vector(state.positions);
  state.residual = f.lpNorm<Eigen::Infinity>();
  Eigen::SimplicialLDLT<SparseMatrix> ldlt;
  bool analyzed = false;

  for (int it = 0; it < settings.max_iterations; ++it) {
    if (state.residual < state.tolerance) {
      state.converged = true;
      return state;
    }
    const SparseMatrix k = system_matrix(state.positions, activations, settings.project_definiteness);
    if (!analyzed) {
      ldlt.analyzePattern(k);
      analyzed = true;
    }
    ldlt.factorize(k);
    if (ldlt.info() != Eigen::Success) {
      state.message = "Newton system factorization failed";
      return state;
    }
    Vector dx = ldlt.solve(f);
    const double f_norm = f.norm();
    Vector lin_res = k * dx - f;
    if (lin_res.norm() > settings.linear_tolerance * f_norm) {
      dx -= ldlt.solve(lin_res);
      lin_res = k * dx - f;
      if (lin_res.norm() > settings.linear_tolerance * f_norm) {
        std::ostringstream msg;
        msg << "inner linear solve reached only relative residual " << lin_res.norm() / f_norm;
        state.message = msg.str();
        return state;
      }
    }

    const Vector x0 = restrict_unconstrained(state.positions);
    double step = 1.0;
    bool accepted = false;
    Points trial = state.positions;
    for (int h = 0; h <= settings.max_halvings; ++h) {
      scatter_unconstrained(x0 + step * dx, trial);
      const Vector f_trial = residual_vector(trial);
      if (f_trial.allFinite() && f_trial.norm() < f_norm) {
        state.positions = trial;
        f = f_trial;
        state.residual = f.lpNorm<Eigen::Infinity>();
        accepted = true;
        break;
      }
      step *= settings.backtrack;
    }
    state.iterations = it + 1;
    if (!accepted) {
      std::ostringstream msg;
      msg << "line search failed after " << settings.max_halvings << " halvings (residual "
          << state.residual << ")";
      state.message = msg.str();
      return state;
    }
  }
  if (state.residual < state.tolerance) {
    state.converged = true;
  } else {
    std::ostringstream msg;
    msg << "no convergence after " << settings.max_iterations << " Newton iterations (residual "
        << state.residual << ", tolerance " << state.tolerance << ")";
    state.message = msg.str();
  }
  return state;
}

}  // namespace facecap
