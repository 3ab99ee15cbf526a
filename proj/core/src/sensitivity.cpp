#include "facecap/sensitivity.hpp"

#include "facecap/rotation.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <exception>
#include <thread>

namespace facecap {

namespace {

// Quantities shared by every right-hand side of one equilibrium.
struct RhsContext {
  const Simulator& sim;
  const EquilibriumState& state;
  SparseMatrix coupling;                   // df_U/dX^C
  std::vector<ActivationValue> activation;
  std::vector<Points> length_gradient;     // dL_m/dC_m
  std::vector<Vector> active;              // df_U/da_m
  std::array<Points, kJawDofs> dxc;        // dX^C/dj

  RhsContext(const Simulator& s, const EquilibriumState& st)
      : sim(s), state(st), coupling(s.coupling_matrix(st.positions, st.activations)) {
    activation = s.activation_values(st.b, st.j);
    const std::vector<Points> curves = muscle_curves(s.basis(), st.b, st.j);
    const auto& unconstrained = s.unconstrained();
    for (int m = 0; m < s.anatomy().num_muscles(); ++m) {
      length_gradient.push_back(curve_length_gradient(curves[m]));
      const Points fa = s.elastic().active_forces(st.positions, m);
      Vector v(3 * unconstrained.size());
      for (size_t i = 0; i < unconstrained.size(); ++i) v.segment<3>(3 * i) = fa.col(unconstrained[i]);
      active.push_back(std::move(v));
    }
    dxc = s.constrained_derivatives(st.j);
  }

  Vector rhs(int param) const {
    const int k = sim.num_shapes();
    const auto& unconstrained = sim.unconstrained();
    std::vector<int> slot(sim.mesh().num_vertices(), -1);
    for (size_t i = 0; i < unconstrained.size(); ++i) slot[unconstrained[i]] = static_cast<int>(i);

    Vector r = Vector::Zero(3 * unconstrained.size());
    if (param >= k) {
      const Points& d = dxc[param - k];
      r += coupling * Eigen::Map<const Vector>(d.data(), d.size());
    }
    for (int m = 0; m < sim.anatomy().num_muscles(); ++m) {
      const double slope = activation[m].slope;
      if (slope != 0.0) {
        const Points dc = curve_derivative(sim.basis(), m, state.b, state.j, param);
        const double dl = (length_gradient[m].array() * dc.array()).sum();
        r += active[m] * (slope * dl);
      }
      const Muscle& muscle = sim.anatomy().muscles[m];
      const Points dt = target_derivative(sim.basis(), m, state.b, state.j, param);
      for (size_t i = 0; i < muscle.vertices.size(); ++i)
        r.segment<3>(3 * slot[muscle.vertices[i]]) += muscle.stiffness * dt.col(i);
    }
    return r;
  }
};

void require_converged(const Simulator& sim, const EquilibriumState& state) {
  if (!state.converged) throw InputError("sensitivities require a converged equilibrium");
  if (state.positions.cols() != sim.mesh().num_vertices() || state.b.size() != sim.num_shapes())
    throw InputError("equilibrium state does not match the simulator");
}

}  // namespace

Vector sensitivity_rhs(const Simulator& sim, const EquilibriumState& state, int param) {
  require_converged(sim, state);
  if (param < 0 || param >= sim.num_parameters()) throw InputError("parameter index out of range");
  return RhsContext(sim, state).rhs(param);
}

Sensitivities solve_sensitivities(const Simulator& sim, const EquilibriumState& state,
                                  const SensitivitySettings& settings) {
  require_converged(sim, state);
  const RhsContext ctx(sim, state);
  Sensitivities out;

  Eigen::SimplicialLDLT<SparseMatrix> ldlt;
  auto factor = [&](bool project) {
    ldlt.compute(sim.system_matrix(state.positions, state.activations, project));
    return ldlt.info() == Eigen::Success && ldlt.vectorD().minCoeff() > 0.0;
  };
  if (!settings.exact_hessian || !factor(false)) {
    out.used_projection = true;
    if (!factor(true)) throw SolverError("equilibrium Hessian is singular; sensitivities undefined");
  }

  const int p = sim.num_parameters();
  const int n = sim.mesh().num_vertices();
  out.dX = Matrix::Zero(3 * n, p);
  const auto& unconstrained = sim.unconstrained();
  const auto& constrained = sim.constrained();

  auto column = [&](int param) {
    const Vector du = ldlt.solve(ctx.rhs(param));
    for (size_t i = 0; i < unconstrained.size(); ++i)
      out.dX.block<3, 1>(3 * unconstrained[i], param) = du.segment<3>(3 * i);
    if (param >= sim.num_shapes()) {
      const Points& d = ctx.dxc[param - sim.num_shapes()];
      for (size_t i = 0; i < constrained.size(); ++i)
        out.dX.block<3, 1>(3 * constrained[i], param) = d.col(i);
    }
  };

  const int threads = std::clamp(settings.threads, 1, p);
  if (threads == 1) {
    for (int c = 0; c < p; ++c) column(c);
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int c = w; c < p; c += threads) column(c);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

std::vector<std::string> parameter_names(const Simulator& sim, const std::vector<std::string>& shapes) {
  std::vector<std::string> names;
  for (int k = 0; k < sim.num_shapes(); ++k)
    names.push_back(k < static_cast<int>(shapes.size()) ? shapes[k] : "b" + std::to_string(k));
  for (const char* jaw : {"jaw_rx", "jaw_ry", "jaw_rz", "jaw_tx", "jaw_ty", "jaw_tz"}) names.emplace_back(jaw);
  return names;
}

std::vector<GradientCheckRow> gradient_check(const Simulator& sim, const Vector& b, const JawParams& j,
                                             const std::vector<int>& observed,
                                             const std::vector<std::string>& names, double h,
                                             int threads) {
  if (!(h > 0.0)) throw InputError("finite-difference step must be positive");
  const int p = sim.num_parameters();
  if (static_cast<int>(names.size()) != p) throw InputError("one name per parameter expected");
  SolveSettings tight;
  tight.relative_tolerance = 1e-11;
  tight.max_iterations = 100;

  const EquilibriumState base = sim.solve(b, j, tight);
  if (!base.converged) throw SolverError("gradient check: base equilibrium failed: " + base.message);
  SensitivitySettings sens;
  sens.threads = threads;
  const Sensitivities s = solve_sensitivities(sim, base, sens);

  auto observe = [&](const Points& x) {
    Vector v(3 * observed.size());
    for (size_t i = 0; i < observed.size(); ++i) v.segment<3>(3 * i) = x.col(observed[i]);
    return v;
  };
  auto shifted = [&](int param, double delta) {
    Vector bb = b;
    JawParams jj = j;
    if (param < sim.num_shapes()) bb[param] += delta;
    else jj[param - sim.num_shapes()] += delta;
    const EquilibriumState st = sim.solve(bb, jj, tight, &base.positions);
    if (!st.converged)
      throw SolverError("gradient check: perturbed solve for " + names[param] + " failed: " + st.message);
    return observe(st.positions);
  };

  std::vector<GradientCheckRow> rows(p);
  auto column = [&](int c) {
    const Vector fd = (shifted(c, h) - shifted(c, -h)) / (2.0 * h);
    Vector analytic(3 * observed.size());
    for (size_t i = 0; i < observed.size(); ++i)
      analytic.segment<3>(3 * i) = s.dX.block<3, 1>(3 * observed[i], c);
    GradientCheckRow& row = rows[c];
    row.parameter = names[c];
    row.analytic_norm = analytic.norm();
    row.fd_norm = fd.norm();
    const double scale = std::max(row.analytic_norm, row.fd_norm);
    row.rel_error = scale > 0.0 ? (analytic - fd).norm() / scale : 0.0;
  };

  threads = std::clamp(threads, 1, p);
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int c = w; c < p; c += threads) column(c);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return rows;
}

Points RigidParams::apply(const Points& x) const {
  return (euler_xyz(rotation) * x).colwise() + translation;
}

Matrix chain_to_observables(const Matrix& dx_dw, const Points& x, const RigidParams& rigid) {
  const Eigen::Index pts = x.cols();
  if (dx_dw.rows() != 3 * pts) throw InputError("observable Jacobian does not match the point count");
  const Mat3 r = euler_xyz(rigid.rotation);
  const auto dr = euler_xyz_derivatives(rigid.rotation);
  const Eigen::Index nw = dx_dw.cols();
  Matrix j(3 * pts, nw + 6);
  for (Eigen::Index i = 0; i < pts; ++i) {
    j.block(3 * i, 0, 3, nw) = r * dx_dw.middleRows(3 * i, 3);
    for (int a = 0; a < 3; ++a) j.block<3, 1>(3 * i, nw + a) = dr[a] * x.col(i);
    j.block<3, 3>(3 * i, nw + 3).setIdentity();
  }
  return j;
}

Matrix chain_controls(const Matrix& dX_dp, const Matrix& control_jacobian) {
  if (dX_dp.cols() != control_jacobian.rows()) throw InputError("control Jacobian has the wrong shape");
  return dX_dp * control_jacobian;
}

}  // namespace facecap
