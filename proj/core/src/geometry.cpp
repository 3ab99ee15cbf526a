#include "facecap/geometry.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace facecap {

namespace {

Mat3 cross_matrix(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

}  // namespace

TetMesh::TetMesh(Points rest, std::vector<Tet> tets, std::vector<int> boundary,
                 std::vector<Triangle> boundary_triangles, std::vector<int> inner_boundary)
    : rest_(std::move(rest)),
      tets_(std::move(tets)),
      boundary_(std::move(boundary)),
      boundary_triangles_(std::move(boundary_triangles)),
      inner_boundary_(std::move(inner_boundary)) {
  const int n = num_vertices();
  auto check_index = [n](int i, const char* what) {
    if (i < 0 || i >= n) {
      std::ostringstream msg;
      msg << what << " index " << i << " out of range [0, " << n << ")";
      throw InputError(msg.str());
    }
  };
  for (const Tet& t : tets_)
    for (int i : t) check_index(i, "tet vertex");
  for (int i : boundary_) check_index(i, "boundary vertex");
  for (int i : inner_boundary_) check_index(i, "inner boundary vertex");
  for (const Triangle& t : boundary_triangles_)
    for (int i : t) check_index(i, "boundary triangle");

  std::vector<char> on_boundary(n, 0);
  for (int i : boundary_) on_boundary[i] = 1;
  for (int i : inner_boundary_)
    if (on_boundary[i]) throw InputError("outer and inner boundary sets overlap");

  rest_volumes_.resize(num_tets());
  dm_inv_.resize(tets_.size());
  for (int t = 0; t < num_tets(); ++t) {
    const Mat3 dm = edge_matrix(rest_, tets_[t]);
    const double vol = dm.determinant() / 6.0;
    if (!(vol > 0.0)) {
      std::ostringstream msg;
      msg << "tet " << t << " has non-positive rest volume " << vol;
      throw InputError(msg.str());
    }
    rest_volumes_[t] = vol;
    dm_inv_[t] = dm.inverse();
  }
}

Vector TetMesh::volumes(const Points& positions) const {
  if (positions.cols() != rest_.cols()) throw InputError("position count does not match mesh");
  Vector v(num_tets());
  for (int t = 0; t < num_tets(); ++t) v[t] = edge_matrix(positions, tets_[t]).determinant() / 6.0;
  return v;
}

Mat3 edge_matrix(const Points& positions, const Tet& tet) {
  Mat3 d;
  d.col(0) = positions.col(tet[1]) - positions.col(tet[0]);
  d.col(1) = positions.col(tet[2]) - positions.col(tet[0]);
  d.col(2) = positions.col(tet[3]) - positions.col(tet[0]);
  return d;
}

Mat3 deformation_gradient(const TetMesh& mesh, const Points& positions, int tet) {
  if (tet < 0 || tet >= mesh.num_tets()) throw InputError("tet index out of range");
  if (positions.cols() != mesh.num_vertices()) throw InputError("position count does not match mesh");
  return edge_matrix(positions, mesh.tets()[tet]) * mesh.rest_shape_inverse()[tet];
}

SurfaceMesh::SurfaceMesh(Points v, std::vector<Triangle> t)
    : vertices(std::move(v)), triangles(std::move(t)) {
  update_normals();
}

void SurfaceMesh::update_normals() { normals = vertex_normals(vertices, triangles); }

Points vertex_normals(const Points& positions, const std::vector<Triangle>& triangles) {
  Points m = Points::Zero(3, positions.cols());
  for (const Triangle& tri : triangles) {
    const Vec3 u = positions.col(tri[1]) - positions.col(tri[0]);
    const Vec3 v = positions.col(tri[2]) - positions.col(tri[0]);
    const Vec3 c = u.cross(v);
    for (int i : tri) m.col(i) += c;
  }
  for (Eigen::Index i = 0; i < m.cols(); ++i) {
    const double len = m.col(i).norm();
    m.col(i) = len > 0.0 ? Vec3(m.col(i) / len) : Vec3::UnitZ();
  }
  return m;
}

NormalJacobian vertex_normal_jacobian(const Points& positions,
                                      const std::vector<Triangle>& triangles) {
  const int n = static_cast<int>(positions.cols());
  Points m = Points::Zero(3, n);
  // dm_i/dx_j accumulated per (i, j).
  std::vector<std::vector<std::pair<int, Mat3>>> dm(n);
  auto add = [&dm](int i, int j, const Mat3& block) {
    for (auto& [k, b] : dm[i]) {
      if (k == j) {
        b += block;
        return;
      }
    }
    dm[i].emplace_back(j, block);
  };
  for (const Triangle& tri : triangles) {
    const Vec3 u = positions.col(tri[1]) - positions.col(tri[0]);
    const Vec3 v = positions.col(tri[2]) - positions.col(tri[0]);
    const Mat3 du = cross_matrix(u);
    const Mat3 dv = cross_matrix(v);
    const Mat3 d0 = dv - du;
    const Mat3 d1 = -dv;
    const Mat3 d2 = du;
    for (int i : tri) {
      m.col(i) += u.cross(v);
      add(i, tri[0], d0);
      add(i, tri[1], d1);
      add(i, tri[2], d2);
    }
  }
  NormalJacobian out;
  out.entries.resize(n);
  for (int i = 0; i < n; ++i) {
    const double len = m.col(i).norm();
    if (len == 0.0) continue;
    const Vec3 nrm = m.col(i) / len;
    const Mat3 proj = (Mat3::Identity() - nrm * nrm.transpose()) / len;
    for (const auto& [j, block] : dm[i]) out.entries[i].emplace_back(j, proj * block);
  }
  return out;
}

std::vector<std::vector<int>> vertex_neighbors(int num_vertices,
                                               const std::vector<Triangle>& triangles) {
  std::vector<std::vector<int>> nbrs(num_vertices);
  for (const Triangle& t : triangles) {
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b)
        if (a != b) nbrs[t[a]].push_back(t[b]);
    }
  }
  for (auto& v : nbrs) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
  return nbrs;
}

Points Embedding::apply(const TetMesh& mesh, const Points& positions) const {
  Points out(3, size());
  for (int p = 0; p < size(); ++p) {
    const EmbeddedPoint& e = points_[p];
    const Tet& t = mesh.tets()[e.tet];
    Vec3 x = Vec3::Zero();
    for (int k = 0; k < 4; ++k) x += e.weights[k] * positions.col(t[k]);
    out.col(p) = x;
  }
  return out;
}

Vector Embedding::apply_scalar(const TetMesh& mesh, const Vector& values) const {
  Vector out(size());
  for (int p = 0; p < size(); ++p) {
    const EmbeddedPoint& e = points_[p];
    const Tet& t = mesh.tets()[e.tet];
    double s = 0.0;
    for (int k = 0; k < 4; ++k) s += e.weights[k] * values[t[k]];
    out[p] = s;
  }
  return out;
}

SparseMatrix Embedding::matrix(const TetMesh& mesh) const {
  std::vector<Triplet> trips;
  trips.reserve(static_cast<size_t>(size()) * 12);
  for (int p = 0; p < size(); ++p) {
    const EmbeddedPoint& e = points_[p];
    const Tet& t = mesh.tets()[e.tet];
    for (int k = 0; k < 4; ++k) {
      if (e.weights[k] == 0.0) continue;
      for (int c = 0; c < 3; ++c) trips.emplace_back(3 * p + c, 3 * t[k] + c, e.weights[k]);
    }
  }
  SparseMatrix m(3 * size(), 3 * mesh.num_vertices());
  m.setFromTriplets(trips.begin(), trips.end());
  return m;
}

Embedding embed(const Points& points, const TetMesh& mesh, double tolerance) {
  std::vector<EmbeddedPoint> out(points.cols());
  for (Eigen::Index p = 0; p < points.cols(); ++p) {
    const Vec3 x = points.col(p);
    double best = -std::numeric_limits<double>::infinity();
    EmbeddedPoint best_e;
    for (int t = 0; t < mesh.num_tets(); ++t) {
      const Tet& tet = mesh.tets()[t];
      const Vec3 local = mesh.rest_shape_inverse()[t] * (x - mesh.rest().col(tet[0]));
      Eigen::Vector4d w(1.0 - local.sum(), local.x(), local.y(), local.z());
      const double lo = w.minCoeff();
      if (lo > best) {
        best = lo;
        best_e.tet = t;
        best_e.weights = w;
        if (lo >= 0.0) break;
      }
    }
    if (best < -tolerance) {
      std::ostringstream msg;
      msg << "point " << p << " (" << x.transpose() << ") lies outside the tet mesh";
      throw InputError(msg.str());
    }
    out[p] = best_e;
  }
  return Embedding(std::move(out));
}

VolumetricLaplacian::VolumetricLaplacian(const TetMesh& mesh, std::vector<int> constrained)
    : constrained_(std::move(constrained)) {
  const int n = mesh.num_vertices();
  if (constrained_.empty()) throw InputError("Laplacian needs at least one constrained vertex");
  std::vector<int> slot(n, -1);
  for (size_t i = 0; i < constrained_.size(); ++i) {
    const int v = constrained_[i];
    if (v < 0 || v >= n) throw InputError("constrained vertex out of range");
    if (slot[v] != -1) throw InputError("duplicate constrained vertex");
    slot[v] = static_cast<int>(i);
  }
  std::vector<int> u_slot(n, -1);
  for (int v = 0; v < n; ++v) {
    if (slot[v] == -1) {
      u_slot[v] = static_cast<int>(unconstrained_.size());
      unconstrained_.push_back(v);
    }
  }

  const double mean_volume = mesh.rest_volumes().mean();
  std::vector<Triplet> trips;
  trips.reserve(static_cast<size_t>(mesh.num_tets()) * 16);
  for (int t = 0; t < mesh.num_tets(); ++t) {
    const double vol = mesh.rest_volumes()[t];
    if (vol < 1e-12 * mean_volume) {
      std::ostringstream msg;
      msg << "degenerate tet " << t << ": rest volume " << vol << " vs mean " << mean_volume;
      throw InputError(msg.str());
    }
    Eigen::Matrix<double, 4, 3> grad;
    grad.bottomRows<3>() = mesh.rest_shape_inverse()[t];
    grad.row(0) = -grad.bottomRows<3>().colwise().sum();
    const Eigen::Matrix4d k = vol * grad * grad.transpose();
    const Tet& tet = mesh.tets()[t];
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) trips.emplace_back(tet[a], tet[b], k(a, b));
  }
  full_.resize(n, n);
  full_.setFromTriplets(trips.begin(), trips.end());

  std::vector<Triplet> tu, tc;
  for (int col = 0; col < full_.outerSize(); ++col) {
    for (SparseMatrix::InnerIterator it(full_, col); it; ++it) {
      const int r = static_cast<int>(it.row());
      const int c = static_cast<int>(it.col());
      if (u_slot[r] < 0) continue;
      if (u_slot[c] >= 0) {
        tu.emplace_back(u_slot[r], u_slot[c], it.value());
      } else {
        tc.emplace_back(u_slot[r], slot[c], -it.value());
      }
    }
  }
  const int nu = static_cast<int>(unconstrained_.size());
  const int nc = static_cast<int>(constrained_.size());
  a_u_.resize(nu, nu);
  a_u_.setFromTriplets(tu.begin(), tu.end());
  a_c_.resize(nu, nc);
  a_c_.setFromTriplets(tc.begin(), tc.end());

  if (nu > 0) {
    auto factor = std::make_shared<Eigen::SimplicialLDLT<SparseMatrix>>(a_u_);
    if (factor->info() != Eigen::Success) throw SolverError("Laplacian factorization failed");
    factor_ = std::move(factor);
  }
}

Vector VolumetricLaplacian::solve_column(const Vector& rhs) const {
  if (!factor_) return Vector();
  Vector x = factor_->solve(rhs);
  const double rhs_norm = rhs.norm();
  const double res = (a_u_ * x - rhs).norm();
  if (!(res <= 1e-10 * rhs_norm) && !(rhs_norm == 0.0 && res == 0.0)) {
    std::ostringstream msg;
    msg << "Poisson solve did not converge: relative residual " << res / rhs_norm;
    throw SolverError(msg.str());
  }
  return x;
}

Points VolumetricLaplacian::solve(const Points& dirichlet) const {
  if (dirichlet.cols() != static_cast<Eigen::Index>(constrained_.size()))
    throw InputError("Dirichlet data size does not match the constrained set");
  Points out(3, unconstrained_.size());
  for (int c = 0; c < 3; ++c) {
    const Vector rhs = a_c_ * dirichlet.row(c).transpose();
    out.row(c) = solve_column(rhs).transpose();
  }
  return out;
}

Vector VolumetricLaplacian::solve_scalar(const Vector& dirichlet) const {
  if (dirichlet.size() != static_cast<Eigen::Index>(constrained_.size()))
    throw InputError("Dirichlet data size does not match the constrained set");
  return solve_column(a_c_ * dirichlet);
}

Points VolumetricLaplacian::extend(const Points& dirichlet) const {
  const Points inner = solve(dirichlet);
  Points out(3, num_vertices());
  for (size_t i = 0; i < constrained_.size(); ++i) out.col(constrained_[i]) = dirichlet.col(i);
  for (size_t i = 0; i < unconstrained_.size(); ++i) out.col(unconstrained_[i]) = inner.col(i);
  return out;
}

Vector VolumetricLaplacian::extend_scalar(const Vector& dirichlet) const {
  const Vector inner = solve_scalar(dirichlet);
  Vector out(num_vertices());
  for (size_t i = 0; i < constrained_.size(); ++i) out[constrained_[i]] = dirichlet[i];
  for (size_t i = 0; i < unconstrained_.size(); ++i) out[unconstrained_[i]] = inner[i];
  return out;
}

VolumetricLaplacian assemble_laplacian(const TetMesh& mesh, const std::vector<int>& constrained) {
  return VolumetricLaplacian(mesh, constrained);
}

Points solve_poisson(const VolumetricLaplacian& laplacian, const Points& dirichlet) {
  return laplacian.solve(dirichlet);
}

SignedDistance signed_distance(const CollisionProxy& proxy, const Vec3& x) {
  SignedDistance out;
  if (const auto* sphere = std::get_if<SphereProxy>(&proxy.shape)) {
    const Vec3 d = x - sphere->center;
    const double r = d.norm();
    out.value = r - sphere->radius;
    if (r == 0.0) {
      out.gradient = Vec3::UnitZ();
      out.hessian.setZero();
    } else {
      out.gradient = d / r;
      out.hessian = (Mat3::Identity() - out.gradient * out.gradient.transpose()) / r;
    }
  } else {
    const auto& plane = std::get<HalfSpaceProxy>(proxy.shape);
    out.value = plane.normal.dot(x) - plane.offset;
    out.gradient = plane.normal;
    out.hessian.setZero();
  }
  return out;
}

}  // namespace facecap
