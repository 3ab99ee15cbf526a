#pragma once

#include "facecap/assets.hpp"
#include "facecap/capture.hpp"
#include "facecap/quasistatic.hpp"
#include "facecap/rotation.hpp"

#include <Eigen/Dense>
#include <doctest.h>

#include <memory>
#include <random>

namespace facecap::test {

inline double rel_err(const Matrix& a, const Matrix& b) {
  const double scale = std::max(a.norm(), b.norm());
  return scale > 0.0 ? (a - b).norm() / scale : 0.0;
}

/// Columns are central differences of f around x.
template <class F>
Matrix central_jacobian(F&& f, const Vector& x, double h) {
  const Vector f0 = f(x);
  Matrix j(f0.size(), x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vector xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    j.col(i) = (f(xp) - f(xm)) / (2.0 * h);
  }
  return j;
}

inline Mat3 random_rotation(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  return euler_xyz(Vec3(u(rng), u(rng), u(rng)));
}

inline Vector random_vector(std::mt19937_64& rng, int n, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = u(rng);
  return v;
}

inline Points random_points(std::mt19937_64& rng, int n, double scale = 1.0) {
  return unflatten(random_vector(rng, 3 * n, scale));
}

/// One regular-ish tet with the given vertex positions.
inline TetMesh single_tet(const Points& p) {
  return TetMesh(p, {Tet{0, 1, 2, 3}}, {}, {}, {});
}

inline Points unit_tet() {
  Points p(3, 4);
  p << 0, 1, 0, 0,
       0, 0, 1, 0,
       0, 0, 0, 1;
  return p;
}

/// Everything derived from one asset, built once per process.
struct Desk {
  Asset asset;
  std::shared_ptr<const PrecomputedMuscleBasis> basis;
  std::shared_ptr<const TetMesh> mesh;
  std::shared_ptr<const Simulator> sim;

  explicit Desk(const AssetSpec& spec) : asset(generate_asset(spec)) {
    basis = std::make_shared<PrecomputedMuscleBasis>(precompute_asset_basis(asset));
    mesh = std::make_shared<TetMesh>(asset.mesh);
    sim = std::make_shared<Simulator>(asset.mesh, asset.anatomy, *basis);
  }

  int num_controls() const { return asset.rig.num_shapes() + kJawDofs; }
};

inline AssetSpec small_spec() {
  AssetSpec s;
  s.nx = 8;
  s.ny = 6;
  s.nz = 3;
  s.image_width = 640;
  s.image_height = 480;
  return s;
}

/// The default 12 x 8 x 4 asset.
inline const Desk& desk() {
  static const Desk d{AssetSpec{}};
  return d;
}

/// 8 x 6 x 3 (144 flesh vertices) for finite-difference heavy checks.
inline const Desk& small_desk() {
  static const Desk d{small_spec()};
  return d;
}

}  // namespace facecap::test
