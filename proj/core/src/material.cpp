#include "facecap/material.hpp"

#include "facecap/anatomy.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <cmath>

namespace facecap {

namespace {

using Matrix12 = Eigen::Matrix<double, 12, 12>;

Eigen::Map<const Eigen::Matrix<double, 9, 1>> vec9(const Mat3& m) {
  return Eigen::Map<const Eigen::Matrix<double, 9, 1>>(m.data());
}

Mat3 basis_matrix(int index) {
  Mat3 e = Mat3::Zero();
  e.data()[index] = 1.0;
  return e;
}

// d(F)/d(x) for a tet, with F flattened column-major and x = (x0, x1, x2, x3).
Eigen::Matrix<double, 9, 12> deformation_gradient_jacobian(const Mat3& dm_inv) {
  Eigen::Matrix<double, 9, 12> d = Eigen::Matrix<double, 9, 12>::Zero();
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) {
      const int row = a + 3 * b;
      double sum = 0.0;
      for (int c = 0; c < 3; ++c) {
        d(row, 3 * (c + 1) + a) = dm_inv(c, b);
        sum += dm_inv(c, b);
      }
      d(row, a) = -sum;
    }
  }
  return d;
}

}  // namespace

void MaterialParams::validate() const {
  if (mu10 < 0 || mu01 < 0 || kappa < 0 || k_passive < 0 || sigma_max < 0)
    throw InputError("material moduli must be non-negative");
  if (!(clamp_sv > 0.0 && clamp_sv < 1.0)) throw InputError("clamp_sv must lie in (0, 1)");
}

Mat3 clamp_deformation(const Mat3& F, double clamp_sv) {
  if (!F.allFinite()) throw InputError("deformation gradient has non-finite entries");
  if (F.determinant() > 0.0) {
    Eigen::SelfAdjointEigenSolver<Mat3> eig;
    eig.computeDirect(F.transpose() * F, Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() >= clamp_sv * clamp_sv) return F;
  }
  Eigen::JacobiSVD<Mat3> svd(F, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 u = svd.matrixU();
  Mat3 v = svd.matrixV();
  Vec3 sigma = svd.singularValues();
  if (u.determinant() < 0.0) {
    u.col(2) *= -1.0;
    sigma[2] *= -1.0;
  }
  if (v.determinant() < 0.0) {
    v.col(2) *= -1.0;
    sigma[2] *= -1.0;
  }
  for (int i = 0; i < 3; ++i) sigma[i] = std::max(sigma[i], clamp_sv);
  return u * sigma.asDiagonal() * v.transpose();
}

double energy_density(const MaterialParams& params, const Mat3& F_in, double a,
                      const std::optional<Vec3>& fiber) {
  const Mat3 F = clamp_deformation(F_in, params.clamp_sv);
  const Mat3 C = F.transpose() * F;
  const double i1 = C.trace();
  const double i2 = 0.5 * (i1 * i1 - (C * C).trace());
  const double log_j = std::log(F.determinant());
  double psi = params.mu10 * (i1 - 3.0) + params.mu01 * (i2 - 3.0) -
               (2.0 * params.mu10 + 4.0 * params.mu01) * log_j +
               0.5 * params.kappa * log_j * log_j;
  if (fiber) {
    const double lambda = (F * *fiber).norm();
    const double stretch = std::max(lambda - 1.0, 0.0);
    psi += params.k_passive * stretch * stretch * stretch / 3.0;
    psi += a * params.sigma_max * lambda;
  }
  return psi;
}

void add_isotropic_stress(const MaterialParams& params, const Mat3& F, StressEval& out,
                          bool with_tangent) {
  const Mat3 C = F.transpose() * F;
  const double i1 = C.trace();
  const double log_j = std::log(F.determinant());
  const Mat3 f_inv_t = F.inverse().transpose();
  const double c_log = 2.0 * params.mu10 + 4.0 * params.mu01;

  out.P += 2.0 * params.mu10 * F + 2.0 * params.mu01 * (i1 * F - F * C) +
           (params.kappa * log_j - c_log) * f_inv_t;
  if (!with_tangent) return;

  for (int k = 0; k < 9; ++k) {
    const Mat3 dF = basis_matrix(k);
    const double d_i1 = 2.0 * (F.array() * dF.array()).sum();
    const Mat3 dC = dF.transpose() * F + F.transpose() * dF;
    const double d_log_j = (f_inv_t.array() * dF.array()).sum();
    const Mat3 dP = 2.0 * params.mu10 * dF +
                    2.0 * params.mu01 * (d_i1 * F + i1 * dF - dF * C - F * dC) +
                    (c_log - params.kappa * log_j) * (f_inv_t * dF.transpose() * f_inv_t) +
                    params.kappa * d_log_j * f_inv_t;
    out.dP_dF.col(k) += vec9(dP);
  }
}

void add_fiber_stress(const MaterialParams& params, const Mat3& F, double a, const Vec3& fiber,
                      StressEval& out, bool with_tangent) {
  const Vec3 v = F * fiber;
  const double lambda = v.norm();
  if (lambda == 0.0) return;
  const Mat3 va = v * fiber.transpose();

  // P = g(lambda) v a0^T with g = psi'(lambda) / lambda.
  const double stretch = lambda - 1.0;
  double g_pass = 0.0, dg_pass = 0.0;
  if (stretch > 0.0) {
    g_pass = params.k_passive * stretch * stretch / lambda;
    dg_pass = params.k_passive * (2.0 * stretch / lambda - stretch * stretch / (lambda * lambda));
  }
  const double g_act_unit = params.sigma_max / lambda;
  const double dg_act_unit = -params.sigma_max / (lambda * lambda);

  out.P_active_unit += g_act_unit * va;
  out.P += (g_pass + a * g_act_unit) * va;
  if (!with_tangent) return;

  const double g = g_pass + a * g_act_unit;
  const double dg = dg_pass + a * dg_act_unit;
  // dP = dg * dlambda * v a0^T + g * dF a0 a0^T, dlambda = v . (dF a0) / lambda
  const Mat3 aa = fiber * fiber.transpose();
  for (int k = 0; k < 9; ++k) {
    const Mat3 dF = basis_matrix(k);
    const double d_lambda = v.dot(dF * fiber) / lambda;
    const Mat3 dP = dg * d_lambda * va + g * dF * aa;
    out.dP_dF.col(k) += vec9(dP);
  }
}

StressEval stress(const MaterialParams& params, const Mat3& F_in, double a,
                  const std::optional<Vec3>& fiber, bool with_tangent) {
  const Mat3 F = clamp_deformation(F_in, params.clamp_sv);
  StressEval out;
  add_isotropic_stress(params, F, out, with_tangent);
  if (fiber) add_fiber_stress(params, F, a, *fiber, out, with_tangent);
  if (with_tangent) out.dP_dF = 0.5 * (out.dP_dF + out.dP_dF.transpose()).eval();
  return out;
}

ElasticModel::ElasticModel(const TetMesh& mesh, MaterialParams params,
                           const std::vector<Muscle>& muscles)
    : mesh_(&mesh), params_(params), num_muscles_(static_cast<int>(muscles.size())) {
  params_.validate();
  fibers_.resize(mesh.num_tets());
  for (int m = 0; m < num_muscles_; ++m) {
    const Muscle& muscle = muscles[m];
    for (size_t i = 0; i < muscle.tets.size(); ++i) {
      const int t = muscle.tets[i];
      if (t < 0 || t >= mesh.num_tets()) throw InputError("muscle tet index out of range");
      fibers_[t].push_back({m, muscle.fibers[i]});
    }
  }
  dF_dx_.reserve(mesh.num_tets());
  for (int t = 0; t < mesh.num_tets(); ++t)
    dF_dx_.push_back(deformation_gradient_jacobian(mesh.rest_shape_inverse()[t]));
}

StressEval ElasticModel::tet_stress(const Points& positions, const Vector& activations, int t,
                                    bool with_tangent) const {
  const Mat3 F = clamp_deformation(
      edge_matrix(positions, mesh_->tets()[t]) * mesh_->rest_shape_inverse()[t], params_.clamp_sv);
  StressEval s;
  add_isotropic_stress(params_, F, s, with_tangent);
  for (const TetFiber& f : fibers_[t]) add_fiber_stress(params_, F, activations[f.muscle], f.direction, s, with_tangent);
  return s;
}

double ElasticModel::energy(const Points& positions, const Vector& activations) const {
  if (activations.size() != num_muscles_) throw InputError("activation count does not match muscles");
  double e = 0.0;
  for (int t = 0; t < mesh_->num_tets(); ++t) {
    const Mat3 F = edge_matrix(positions, mesh_->tets()[t]) * mesh_->rest_shape_inverse()[t];
    double psi = energy_density(params_, F, 0.0, std::nullopt);
    for (const TetFiber& f : fibers_[t]) {
      // Fiber-only contribution: total minus the isotropic part.
      psi += energy_density(params_, F, activations[f.muscle], f.direction) -
             energy_density(params_, F, 0.0, std::nullopt);
    }
    e += mesh_->rest_volumes()[t] * psi;
  }
  return e;
}

Points ElasticModel::forces(const Points& positions, const Vector& activations) const {
  if (positions.cols() != mesh_->num_vertices()) throw InputError("position count does not match mesh");
  if (activations.size() != num_muscles_) throw InputError("activation count does not match muscles");
  Points f = Points::Zero(3, mesh_->num_vertices());
  for (int t = 0; t < mesh_->num_tets(); ++t) {
    const StressEval s = tet_stress(positions, activations, t, false);
    const Mat3 g = -mesh_->rest_volumes()[t] * s.P * mesh_->rest_shape_inverse()[t].transpose();
    const Tet& tet = mesh_->tets()[t];
    for (int k = 0; k < 3; ++k) f.col(tet[k + 1]) += g.col(k);
    f.col(tet[0]) -= g.rowwise().sum();
  }
  return f;
}

Points ElasticModel::active_forces(const Points& positions, int muscle) const {
  Points f = Points::Zero(3, mesh_->num_vertices());
  for (int t = 0; t < mesh_->num_tets(); ++t) {
    if (fibers_[t].empty()) continue;
    const Mat3 F = clamp_deformation(
        edge_matrix(positions, mesh_->tets()[t]) * mesh_->rest_shape_inverse()[t], params_.clamp_sv);
    StressEval s;
    for (const TetFiber& fb : fibers_[t])
      if (fb.muscle == muscle) add_fiber_stress(params_, F, 0.0, fb.direction, s, false);
    if (s.P_active_unit.isZero(0.0)) continue;
    const Mat3 g =
        -mesh_->rest_volumes()[t] * s.P_active_unit * mesh_->rest_shape_inverse()[t].transpose();
    const Tet& tet = mesh_->tets()[t];
    for (int k = 0; k < 3; ++k) f.col(tet[k + 1]) += g.col(k);
    f.col(tet[0]) -= g.rowwise().sum();
  }
  return f;
}

SparseMatrix ElasticModel::jacobian(const Points& positions, const Vector& activations,
                                    bool project) const {
  if (positions.cols() != mesh_->num_vertices()) throw InputError("position count does not match mesh");
  if (activations.size() != num_muscles_) throw InputError("activation count does not match muscles");
  std::vector<Triplet> trips;
  trips.reserve(static_cast<size_t>(mesh_->num_tets()) * 144);
  Eigen::SelfAdjointEigenSolver<Matrix12> eig;
  for (int t = 0; t < mesh_->num_tets(); ++t) {
    const StressEval s = tet_stress(positions, activations, t, true);
    Matrix12 k = mesh_->rest_volumes()[t] * dF_dx_[t].transpose() * s.dP_dF * dF_dx_[t];
    k = 0.5 * (k + k.transpose()).eval();
    if (project) {
      eig.compute(k);
      if (eig.eigenvalues().minCoeff() < 0.0) {
        const Eigen::Matrix<double, 12, 1> lam = eig.eigenvalues().cwiseMax(0.0);
        k = eig.eigenvectors() * lam.asDiagonal() * eig.eigenvectors().transpose();
      }
    }
    const Tet& tet = mesh_->tets()[t];
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b)
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j)
            trips.emplace_back(3 * tet[a] + i, 3 * tet[b] + j, -k(3 * a + i, 3 * b + j));
  }
  const int n = 3 * mesh_->num_vertices();
  SparseMatrix jac(n, n);
  jac.setFromTriplets(trips.begin(), trips.end());
  return jac;
}

Points fvm_forces(const TetMesh& mesh, const Points& positions, const MaterialParams& params,
                  const std::vector<Muscle>& muscles, const Vector& activations) {
  return ElasticModel(mesh, params, muscles).forces(positions, activations);
}

SparseMatrix force_jacobian(const TetMesh& mesh, const Points& positions,
                            const MaterialParams& params, const std::vector<Muscle>& muscles,
                            const Vector& activations, bool project) {
  return ElasticModel(mesh, params, muscles).jacobian(positions, activations, project);
}

}  // namespace facecap
