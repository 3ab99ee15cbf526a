#include "facecap/assets.hpp"

#include "facecap/quasistatic.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

namespace facecap {

namespace {

// Uniform in [-1, 1] from the raw 64-bit stream, independent of the
// standard library's distribution implementations.
class Jitter {
 public:
  explicit Jitter(std::uint64_t seed) : rng_(seed) {}
  double operator()() { return 2.0 * static_cast<double>(rng_() >> 11) * 0x1.0p-53 - 1.0; }

 private:
  std::mt19937_64 rng_;
};

struct Grid {
  int nx, ny, nz;
  double h;
  int index(int i, int j, int k) const { return i + nx * (j + ny * k); }
  double lx() const { return (nx - 1) * h; }
  double ly() const { return (ny - 1) * h; }
  double top() const { return (nz - 1) * h; }
  // Gentle dome on the skin side; zero on the slab rim.
  double dome(double x, double y) const {
    return 0.6 * h * std::sin(std::numbers::pi * x / lx()) * std::sin(std::numbers::pi * y / ly());
  }
  double surface_z(double x, double y) const { return top() + dome(x, y); }
};

struct ShapeRecipe {
  const char* name;
  Vec2 center;  // fractions of the slab extent
  double radius;
  Mat3 linear;
  Vec3 offset;
};

double falloff(double d, double r) {
  if (d >= r) return 0.0;
  const double q = 1.0 - (d / r) * (d / r);
  return q * q;
}

double smoothstep(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

double distance_to_polyline(const Vec3& p, const Points& curve, Vec3* tangent) {
  double best = std::numeric_limits<double>::infinity();
  for (Eigen::Index s = 0; s + 1 < curve.cols(); ++s) {
    const Vec3 a = curve.col(s), b = curve.col(s + 1);
    const Vec3 d = b - a;
    const double t = std::clamp((p - a).dot(d) / d.squaredNorm(), 0.0, 1.0);
    const double dist = (a + t * d - p).norm();
    if (dist < best) {
      best = dist;
      if (tangent) *tangent = d.normalized();
    }
  }
  return best;
}

Points polyline(const Vec3& a, const Vec3& b, int n) {
  Points c(3, n);
  for (int i = 0; i < n; ++i) c.col(i) = a + (b - a) * (static_cast<double>(i) / (n - 1));
  return c;
}

Points arc(const Vec3& center, double radius, double from, double to, int n) {
  Points c(3, n);
  for (int i = 0; i < n; ++i) {
    const double t = from + (to - from) * i / (n - 1);
    c.col(i) = center + radius * Vec3(std::cos(t), std::sin(t), 0.0);
  }
  return c;
}

// Surface point whose xy projection is (x, y).
SurfacePoint locate(const std::vector<Triangle>& triangles, const Points& surface,
                    double x, double y) {
  for (size_t t = 0; t < triangles.size(); ++t) {
    const Vec3 a = surface.col(triangles[t][0]), b = surface.col(triangles[t][1]),
               c = surface.col(triangles[t][2]);
    const double det = (b.x() - a.x()) * (c.y() - a.y()) - (b.y() - a.y()) * (c.x() - a.x());
    const double l1 = ((x - a.x()) * (c.y() - a.y()) - (y - a.y()) * (c.x() - a.x())) / det;
    const double l2 = ((b.x() - a.x()) * (y - a.y()) - (b.y() - a.y()) * (x - a.x())) / det;
    const Vec3 w(1.0 - l1 - l2, l1, l2);
    if (w.minCoeff() >= -1e-12) return {static_cast<int>(t), w};
  }
  throw InputError("roto point lies outside the slab");
}

}  // namespace

void AssetSpec::validate() const {
  if (nx < 2 || ny < 2 || nz < 2) throw InputError("asset resolution must be at least 2 per axis");
  if (!(spacing > 0.0)) throw InputError("grid spacing must be positive");
  if (num_muscles < 1 || num_muscles > 3) throw InputError("asset supports 1 to 3 muscles");
  if (num_shapes < 1 || num_shapes > 6) throw InputError("asset supports 1 to 6 blendshapes");
  if (image_width < 16 || image_height < 16) throw InputError("plate size too small");
}

Asset generate_asset(const AssetSpec& spec) {
  spec.validate();
  Asset asset;
  asset.spec = spec;
  const Grid g{spec.nx, spec.ny, spec.nz, spec.spacing};
  const double lx = g.lx(), ly = g.ly(), top = g.top();
  const double rho = std::min(lx / 11.0, ly / 7.0);
  Jitter jitter(spec.seed);

  // Flesh grid, six tets per cell along the main diagonal.
  Points rest(3, g.nx * g.ny * g.nz);
  for (int k = 0; k < g.nz; ++k)
    for (int j = 0; j < g.ny; ++j)
      for (int i = 0; i < g.nx; ++i) {
        const double x = i * g.h, y = j * g.h;
        rest.col(g.index(i, j, k)) = Vec3(x, y, k * g.h + g.dome(x, y) * k / (g.nz - 1));
      }
  std::vector<Tet> tets;
  static constexpr int kPaths[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2}, {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
  for (int k = 0; k + 1 < g.nz; ++k)
    for (int j = 0; j + 1 < g.ny; ++j)
      for (int i = 0; i + 1 < g.nx; ++i)
        for (const auto& path : kPaths) {
          std::array<int, 3> step{0, 0, 0};
          Tet t;
          t[0] = g.index(i, j, k);
          for (int s = 0; s < 3; ++s) {
            ++step[path[s]];
            t[s + 1] = g.index(i + step[0], j + step[1], k + step[2]);
          }
          if (edge_matrix(rest, t).determinant() < 0.0) std::swap(t[1], t[2]);
          tets.push_back(t);
        }

  std::vector<int> boundary, inner;
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i) {
      boundary.push_back(g.index(i, j, g.nz - 1));
      inner.push_back(g.index(i, j, 0));
    }
  auto surface_index = [&](int i, int j) { return i + g.nx * j; };
  std::vector<Triangle> triangles;
  for (int j = 0; j + 1 < g.ny; ++j)
    for (int i = 0; i + 1 < g.nx; ++i) {
      const int a = surface_index(i, j), b = surface_index(i + 1, j), c = surface_index(i + 1, j + 1),
                d = surface_index(i, j + 1);
      triangles.push_back({a, b, c});
      triangles.push_back({a, c, d});
    }
  std::vector<Triangle> boundary_triangles;
  for (const Triangle& t : triangles) boundary_triangles.push_back({boundary[t[0]], boundary[t[1]], boundary[t[2]]});
  asset.mesh = TetMesh(rest, tets, boundary, boundary_triangles, inner);
  asset.triangles = triangles;

  // Rig: neutral = top layer, bump blendshapes, jaw weights falling off in x.
  Points neutral(3, boundary.size());
  for (size_t i = 0; i < boundary.size(); ++i) neutral.col(i) = rest.col(boundary[i]);
  const Vec2 mouth(0.27, 0.5);
  const Mat3 exx = Vec3::UnitX() * Vec3::UnitX().transpose();
  const Mat3 eyy = Vec3::UnitY() * Vec3::UnitY().transpose();
  const std::vector<ShapeRecipe> recipes = {
      {"pucker", mouth, 2.5, -0.35 * (exx + eyy), Vec3(0.0, 0.0, -0.15)},
      {"smile", {0.6, 0.25}, 3.0, -0.3 * exx, Vec3(0.0, 0.0, 0.15)},
      {"brow_raise", {0.78, 0.65}, 2.5, -0.3 * eyy, Vec3(0.0, 0.0, 0.1)},
      {"cheek_puff", {0.55, 0.7}, 2.0, Mat3::Zero(), Vec3(0.0, 0.0, 0.45)},
      {"lip_press", mouth, 1.5, Mat3::Zero(), Vec3(0.0, 0.0, -0.25)},
      {"sneer", {0.42, 0.78}, 1.8, Mat3::Zero(), Vec3(0.15, 0.1, 0.2)},
  };
  asset.rig.shapes.neutral = neutral;
  asset.rig.shapes.deltas = Matrix::Zero(3 * neutral.cols(), spec.num_shapes);
  for (int s = 0; s < spec.num_shapes; ++s) {
    const ShapeRecipe& r = recipes[s];
    const Vec3 c(lx * (r.center.x() + 0.015 * jitter()), ly * (r.center.y() + 0.015 * jitter()), top);
    const double amp = 1.0 + 0.1 * jitter();
    const double radius = r.radius * rho;
    for (Eigen::Index v = 0; v < neutral.cols(); ++v) {
      const Vec3 p = neutral.col(v);
      const double f = falloff((p - c).head<2>().norm(), radius);
      if (f == 0.0) continue;
      asset.rig.shapes.deltas.block<3, 1>(3 * v, s) = amp * f * (r.linear * (p - c) + rho * r.offset);
    }
    asset.rig.shapes.names.emplace_back(r.name);
  }
  asset.rig.jaw.pivot = Vec3(spec.jaw_pivot.x() * lx, spec.jaw_pivot.y() * ly, spec.jaw_pivot.z() * g.h);
  asset.rig.skin_weights.resize(neutral.cols());
  for (Eigen::Index v = 0; v < neutral.cols(); ++v)
    asset.rig.skin_weights[v] = 1.0 - smoothstep((neutral(0, v) / lx - 0.4) / 0.2);

  // Muscles just under the surface: mouth ring, a cheek strap along x, a
  // brow strap along y.
  Anatomy& anatomy = asset.anatomy;
  anatomy.constrained = inner;
  // Flesh is close to incompressible (Poisson ratio near 0.46).
  anatomy.material.kappa = 1.0e6;
  const Vec3 mouth3(lx * mouth.x(), ly * mouth.y(), 0.0);
  struct MuscleRecipe {
    const char* name;
    Points curve;
  };
  std::vector<MuscleRecipe> muscle_recipes = {
      {"orbicularis", arc(mouth3, 1.4 * rho, -0.8 * std::numbers::pi, 0.8 * std::numbers::pi, 8)},
      {"zygomatic", polyline(Vec3(0.4 * lx, 0.25 * ly, 0.0), Vec3(0.85 * lx, 0.25 * ly, 0.0), 8)},
      {"frontalis", polyline(Vec3(0.78 * lx, 0.35 * ly, 0.0), Vec3(0.78 * lx, 0.9 * ly, 0.0), 8)},
  };
  // Center-lines run 0.75 cells under the skin.
  for (MuscleRecipe& r : muscle_recipes)
    for (Eigen::Index p = 0; p < r.curve.cols(); ++p)
      r.curve(2, p) = g.surface_z(r.curve(0, p), r.curve(1, p)) - 0.75 * g.h;
  const double mu_eff = 2.0 * (anatomy.material.mu10 + anatomy.material.mu01);
  const double stiffness = 2.0 * mu_eff * g.h;
  for (int m = 0; m < spec.num_muscles; ++m) {
    MuscleRecipe& r = muscle_recipes[m];
    for (Eigen::Index p = 0; p < r.curve.cols(); ++p) {
      const Vec3 q = r.curve.col(p);
      if (q.x() < 0.0 || q.x() > lx || q.y() < 0.0 || q.y() > ly || q.z() < 0.0 || q.z() > g.surface_z(q.x(), q.y()))
        throw InputError(std::string("muscle ") + r.name + " does not fit inside the slab");
    }
    std::vector<int> member;
    std::vector<Vec3> fibers;
    for (int t = 0; t < asset.mesh.num_tets(); ++t) {
      Vec3 centroid = Vec3::Zero();
      for (int v : tets[t]) centroid += rest.col(v) / 4.0;
      if (centroid.z() < g.h) continue;
      Vec3 tangent;
      if (distance_to_polyline(centroid, r.curve, &tangent) <= 0.9 * g.h) {
        member.push_back(t);
        fibers.push_back(tangent);
      }
    }
    if (member.empty()) throw InputError(std::string("muscle ") + r.name + " covers no tets");
    anatomy.muscles.push_back(make_muscle(r.name, asset.mesh, member, fibers, r.curve, stiffness, 0.3,
                                          0.01, anatomy.constrained));
  }

  CollisionProxy obstacle;
  obstacle.shape = SphereProxy{Vec3(mouth3.x(), mouth3.y(), g.surface_z(mouth3.x(), mouth3.y()) + 1.5 * rho), 1.0 * rho};
  obstacle.stiffness = 10.0 * mu_eff * g.h;
  anatomy.proxies.push_back(obstacle);

  for (int t = 0; t < asset.mesh.num_tets(); ++t) {
    Vec3 centroid = Vec3::Zero();
    for (int v : tets[t]) centroid += rest.col(v) / 4.0;
    if ((centroid - mouth3).head<2>().norm() <= 1.8 * rho && centroid.z() >= g.surface_z(centroid.x(), centroid.y()) - 1.5 * g.h)
      asset.lip_region.push_back(t);
  }

  // Oblique camera above the slab, 35 degrees off vertical.
  const Vec3 center(0.5 * lx, 0.5 * ly, g.surface_z(0.5 * lx, 0.5 * ly));
  const double tilt = 35.0 * std::numbers::pi / 180.0;
  const double distance = 20.0 * rho;
  asset.camera = look_at(center + distance * Vec3(0.0, -std::sin(tilt), std::cos(tilt)), center,
                         Vec3::UnitY(), 1.375 * spec.image_width, spec.image_width, spec.image_height);

  asset.lighting.gamma << 1.0, 0.1, 0.4, 0.2, 0.05, 0.1, 0.15, 0.05, 0.02;
  const Vec3 albedo = Vec3(0.9, 0.7, 0.6) * (1.0 + 0.05 * jitter());
  asset.lighting.albedo = albedo.replicate(1, neutral.cols());

  auto add_curve = [&](const Points& pts) {
    for (Eigen::Index p = 0; p < pts.cols(); ++p)
      asset.roto_points.push_back(locate(triangles, neutral, pts(0, p), pts(1, p)));
  };
  // Roto curves are sampled densely, about 65 points per cell length.
  auto count = [&](double length) { return std::max(2, static_cast<int>(std::lround(length / (0.015 * g.h)))); };
  const double ring = 2.0 * std::numbers::pi * 23.0 / 24.0;
  add_curve(arc(mouth3, 1.0 * rho, 0.0, ring, count(ring * rho)));
  add_curve(arc(mouth3, 2.0 * rho, 0.0, ring, count(2.0 * ring * rho)));
  add_curve(polyline(Vec3(0.3 * lx, 0.7 * ly, 0.0), Vec3(0.9 * lx, 0.7 * ly, 0.0), count(0.6 * lx)));
  add_curve(polyline(Vec3(0.4 * lx, 0.25 * ly, 0.0), Vec3(0.9 * lx, 0.25 * ly, 0.0), count(0.5 * lx)));
  add_curve(polyline(Vec3(0.78 * lx, 0.3 * ly, 0.0), Vec3(0.78 * lx, 0.95 * ly, 0.0), count(0.65 * ly)));
  add_curve(polyline(Vec3(0.12 * lx, 0.1 * ly, 0.0), Vec3(0.12 * lx, 0.9 * ly, 0.0), count(0.8 * ly)));

  validate_asset(asset);
  return asset;
}

PrecomputedMuscleBasis precompute_asset_basis(const Asset& asset) {
  const VolumetricLaplacian laplacian(asset.mesh, asset.mesh.boundary());
  return precompute_basis(asset.mesh, asset.rig, asset.anatomy.muscles, laplacian);
}

void validate_asset(const Asset& asset) {
  const TetMesh& mesh = asset.mesh;
  const Rig& rig = asset.rig;
  rig.validate();
  if (static_cast<int>(mesh.boundary().size()) != rig.num_vertices())
    throw InputError("surface and outer boundary differ in size");
  for (int i = 0; i < rig.num_vertices(); ++i)
    if ((mesh.rest().col(mesh.boundary()[i]) - rig.shapes.neutral.col(i)).norm() > 1e-12)
      throw InputError("neutral surface does not coincide with the outer boundary");
  for (const Triangle& t : asset.triangles)
    for (int v : t)
      if (v < 0 || v >= rig.num_vertices()) throw InputError("surface triangle index out of range");
  if (asset.anatomy.constrained != mesh.inner_boundary())
    throw InputError("constrained vertices must be the inner boundary");
  asset.anatomy.material.validate();
  for (const Muscle& m : asset.anatomy.muscles) m.validate(mesh);
  asset.camera.validate();
  for (const SurfacePoint& p : asset.roto_points)
    if (p.triangle < 0 || p.triangle >= static_cast<int>(asset.triangles.size()))
      throw InputError("roto point references a missing triangle");
  for (int t : asset.lip_region)
    if (t < 0 || t >= mesh.num_tets()) throw InputError("lip region references a missing tet");

  const PrecomputedMuscleBasis basis = precompute_asset_basis(asset);
  const Simulator sim(mesh, asset.anatomy, basis);
  const Points rest_forces =
      sim.total_forces(mesh.rest(), sim.activations(Vector::Zero(rig.num_shapes()), JawParams::Zero()),
                       muscle_targets(basis, Vector::Zero(rig.num_shapes()), JawParams::Zero()));
  double worst = 0.0;
  for (int v : sim.unconstrained()) worst = std::max(worst, rest_forces.col(v).cwiseAbs().maxCoeff());
  if (worst >= SolveSettings{}.relative_tolerance * sim.characteristic_force())
    throw InputError("asset is not in equilibrium at rest");
}

std::vector<RotoConstraint> project_roto(const Points& surface, const std::vector<Triangle>& triangles,
                                         const std::vector<SurfacePoint>& points, const Camera& camera) {
  std::vector<RotoConstraint> out;
  out.reserve(points.size());
  for (const SurfacePoint& p : points) {
    RotoConstraint c;
    c.triangle = p.triangle;
    c.barycentric = p.barycentric;
    c.target = camera.project(roto_point(surface, triangles, c)).pixel;
    if (c.target.x() < 0.0 || c.target.y() < 0.0 || c.target.x() > camera.width - 1 ||
        c.target.y() > camera.height - 1)
      throw InputError("roto point projects outside the image");
    out.push_back(c);
  }
  return out;
}

}  // namespace facecap
