#pragma once

#include "facecap/common.hpp"

#include <Eigen/SparseCholesky>

#include <memory>
#include <variant>
#include <vector>

namespace facecap {

/// Tetrahedral flesh mesh at rest. Immutable after construction; the
/// constructor rejects invalid indices, non-positive rest volumes and
/// overlapping boundary sets.
class TetMesh {
 public:
  TetMesh() = default;
  TetMesh(Points rest, std::vector<Tet> tets, std::vector<int> boundary,
          std::vector<Triangle> boundary_triangles, std::vector<int> inner_boundary);

  const Points& rest() const { return rest_; }
  const std::vector<Tet>& tets() const { return tets_; }
  const Vector& rest_volumes() const { return rest_volumes_; }
  const std::vector<Mat3>& rest_shape_inverse() const { return dm_inv_; }

  /// Outer-boundary vertices. The order is significant: surface vertex i of
  /// the bound surface mesh corresponds to flesh vertex boundary()[i].
  const std::vector<int>& boundary() const { return boundary_; }
  const std::vector<Triangle>& boundary_triangles() const { return boundary_triangles_; }
  const std::vector<int>& inner_boundary() const { return inner_boundary_; }

  int num_vertices() const { return static_cast<int>(rest_.cols()); }
  int num_tets() const { return static_cast<int>(tets_.size()); }

  /// Signed volume of every tet for the given vertex positions.
  Vector volumes(const Points& positions) const;
  double total_volume(const Points& positions) const { return volumes(positions).sum(); }

 private:
  Points rest_;
  std::vector<Tet> tets_;
  Vector rest_volumes_;
  std::vector<Mat3> dm_inv_;
  std::vector<int> boundary_;
  std::vector<Triangle> boundary_triangles_;
  std::vector<int> inner_boundary_;
};

/// Edge matrix [x1-x0, x2-x0, x3-x0] of one tet.
Mat3 edge_matrix(const Points& positions, const Tet& tet);

/// F = Ds * Dm^-1 for one tet.
Mat3 deformation_gradient(const TetMesh& mesh, const Points& positions, int tet);

/// Triangle surface with per-vertex normals recomputed from positions.
struct SurfaceMesh {
  Points vertices;
  std::vector<Triangle> triangles;
  Points normals;

  SurfaceMesh() = default;
  SurfaceMesh(Points v, std::vector<Triangle> t);
  void update_normals();
  int num_vertices() const { return static_cast<int>(vertices.cols()); }
};

/// Area-weighted vertex normals (unit length). Vertices with no incident
/// area get (0, 0, 1).
Points vertex_normals(const Points& positions, const std::vector<Triangle>& triangles);

/// Derivative of each unit vertex normal with respect to the positions of
/// the vertices in its one-ring. entries[i] lists (vertex j, 3x3 dn_i/dx_j).
struct NormalJacobian {
  std::vector<std::vector<std::pair<int, Mat3>>> entries;
};
NormalJacobian vertex_normal_jacobian(const Points& positions,
                                      const std::vector<Triangle>& triangles);

/// One-ring neighbours of each vertex, sorted and unique.
std::vector<std::vector<int>> vertex_neighbors(int num_vertices,
                                               const std::vector<Triangle>& triangles);

struct EmbeddedPoint {
  int tet = -1;
  Eigen::Vector4d weights = Eigen::Vector4d::Zero();
};

/// Barycentric embedding of points into a tet mesh.
class Embedding {
 public:
  Embedding() = default;
  explicit Embedding(std::vector<EmbeddedPoint> points) : points_(std::move(points)) {}

  const std::vector<EmbeddedPoint>& points() const { return points_; }
  int size() const { return static_cast<int>(points_.size()); }

  Points apply(const TetMesh& mesh, const Points& positions) const;
  Vector apply_scalar(const TetMesh& mesh, const Vector& values) const;
  /// (3 * size) x (3 * num_vertices) operator acting on flattened positions.
  SparseMatrix matrix(const TetMesh& mesh) const;

 private:
  std::vector<EmbeddedPoint> points_;
};

/// Embeds each point into the tet maximising its smallest barycentric
/// weight. Throws InputError when a point lies further than `tolerance`
/// (in barycentric units) outside every tet.
Embedding embed(const Points& points, const TetMesh& mesh, double tolerance = 1e-6);

/// Piecewise-linear FEM Laplacian on the rest mesh, split into an
/// unconstrained block A^U and a coupling block A^C such that the harmonic
/// extension of Dirichlet data d satisfies A^U u = A^C d. Vertices outside
/// the constrained set carry natural (zero-flux) conditions.
class VolumetricLaplacian {
 public:
  VolumetricLaplacian() = default;
  VolumetricLaplacian(const TetMesh& mesh, std::vector<int> constrained);

  const SparseMatrix& full() const { return full_; }
  const SparseMatrix& unconstrained_block() const { return a_u_; }
  const SparseMatrix& coupling_block() const { return a_c_; }
  const std::vector<int>& constrained() const { return constrained_; }
  const std::vector<int>& unconstrained() const { return unconstrained_; }
  int num_vertices() const { return static_cast<int>(full_.rows()); }

  /// Harmonic extension of vector-valued Dirichlet data (3 x |constrained|),
  /// returning values at the unconstrained vertices (3 x |unconstrained|).
  Points solve(const Points& dirichlet) const;
  Vector solve_scalar(const Vector& dirichlet) const;

  /// Same as solve() but scattered into a full per-vertex field.
  Points extend(const Points& dirichlet) const;
  Vector extend_scalar(const Vector& dirichlet) const;

 private:
  Vector solve_column(const Vector& rhs) const;

  SparseMatrix full_;
  SparseMatrix a_u_;
  SparseMatrix a_c_;
  std::vector<int> constrained_;
  std::vector<int> unconstrained_;
  std::shared_ptr<const Eigen::SimplicialLDLT<SparseMatrix>> factor_;
};

VolumetricLaplacian assemble_laplacian(const TetMesh& mesh, const std::vector<int>& constrained);
Points solve_poisson(const VolumetricLaplacian& laplacian, const Points& dirichlet);

struct SphereProxy {
  Vec3 center = Vec3::Zero();
  double radius = 1.0;
};

struct HalfSpaceProxy {
  Vec3 normal = Vec3::UnitZ();  // unit
  double offset = 0.0;
};

/// Static analytic collision primitive with a penalty stiffness.
struct CollisionProxy {
  std::variant<SphereProxy, HalfSpaceProxy> shape;
  double stiffness = 1.0;
};

struct SignedDistance {
  double value = 0.0;
  Vec3 gradient = Vec3::UnitZ();
  Mat3 hessian = Mat3::Zero();
};

/// phi = n.x - d for half-spaces, |x - c| - r for spheres. At a sphere's
/// exact center the gradient is the fixed direction +z.
SignedDistance signed_distance(const CollisionProxy& proxy, const Vec3& x);

}  // namespace facecap
