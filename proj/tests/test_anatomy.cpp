#include "support.hpp"

using namespace facecap;
using namespace facecap::test;

namespace {

PrecomputedMuscleBasis basis_for(const Asset& asset, const Rig& rig) {
  const VolumetricLaplacian lap(asset.mesh, asset.mesh.boundary());
  return precompute_basis(asset.mesh, rig, asset.anatomy.muscles, lap);
}

double max_abs(const std::vector<Points>& a, const std::vector<Points>& b) {
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, (a[i] - b[i]).cwiseAbs().maxCoeff());
  return m;
}

}  // namespace

TEST_CASE("a zero blendshape has zero muscle and curve fields") {
  const Asset& asset = small_desk().asset;
  Rig rig = asset.rig;
  rig.shapes.deltas.col(2).setZero();
  const PrecomputedMuscleBasis basis = basis_for(asset, rig);
  for (const MuscleBasis& m : basis.muscles) {
    CHECK(m.shapes[2].cwiseAbs().maxCoeff() == 0.0);
    CHECK(m.curve_shapes[2].cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("a rigidly translating blendshape moves every muscle point by the same vector") {
  const Asset& asset = small_desk().asset;
  Rig rig = asset.rig;
  const Vec3 v(0.2, -0.1, 0.3);
  rig.shapes.deltas.col(0) = v.replicate(rig.num_vertices(), 1);
  const PrecomputedMuscleBasis basis = basis_for(asset, rig);
  for (const MuscleBasis& m : basis.muscles) {
    CHECK((m.shapes[0].colwise() - v).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((m.curve_shapes[0].colwise() - v).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("muscle targets and curves are affine in b") {
  const Desk& d = small_desk();
  const PrecomputedMuscleBasis& basis = *d.basis;
  const int k = basis.num_shapes();
  const JawParams zero = JawParams::Zero();

  const auto rest = muscle_targets(basis, Vector::Zero(k), zero);
  for (int m = 0; m < basis.num_muscles(); ++m) CHECK((rest[m] - basis.muscles[m].rest).cwiseAbs().maxCoeff() < 1e-14);

  // b = e_j + e_k equals the two single-shape evaluations minus the rest.
  const auto both = muscle_targets(basis, Vector::Unit(k, 0) + Vector::Unit(k, 3), zero);
  const auto one = muscle_targets(basis, Vector::Unit(k, 0), zero);
  const auto two = muscle_targets(basis, Vector::Unit(k, 3), zero);
  for (int m = 0; m < basis.num_muscles(); ++m)
    CHECK((both[m] - one[m] - two[m] + rest[m]).cwiseAbs().maxCoeff() < 1e-10);

  std::mt19937_64 rng(7);
  const JawParams j = random_vector(rng, kJawDofs, 0.1);
  const Vector b1 = random_vector(rng, k), b2 = random_vector(rng, k);
  const double alpha = 0.35;
  for (auto eval : {muscle_targets, muscle_curves}) {
    const auto mix = eval(basis, alpha * b1 + (1 - alpha) * b2, j);
    const auto p1 = eval(basis, b1, j), p2 = eval(basis, b2, j);
    std::vector<Points> sep;
    for (size_t m = 0; m < mix.size(); ++m) sep.push_back(alpha * p1[m] + (1 - alpha) * p2[m]);
    CHECK(max_abs(mix, sep) < 1e-10);
  }
}

TEST_CASE("pure jaw translation moves a fully jaw-weighted muscle rigidly") {
  PrecomputedMuscleBasis basis = *small_desk().basis;
  for (MuscleBasis& m : basis.muscles) m.skin_weights.setOnes();
  JawParams j = JawParams::Zero();
  const Vec3 t(0.1, -0.3, 0.2);
  j.tail<3>() = t;
  const auto targets = muscle_targets(basis, Vector::Zero(basis.num_shapes()), j);
  for (int m = 0; m < basis.num_muscles(); ++m)
    CHECK(((targets[m] - basis.muscles[m].rest).colwise() - t).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("target and curve derivatives match finite differences") {
  const PrecomputedMuscleBasis& basis = *small_desk().basis;
  const int k = basis.num_shapes();
  std::mt19937_64 rng(8);
  Vector p(k + kJawDofs);
  p << random_vector(rng, k), random_vector(rng, kJawDofs, 0.2);
  for (int m = 0; m < basis.num_muscles(); ++m) {
    auto targets = [&](const Vector& x) {
      return Vector(flatten(muscle_targets(basis, x.head(k), x.tail<kJawDofs>())[m]));
    };
    auto curves = [&](const Vector& x) {
      return Vector(flatten(muscle_curves(basis, x.head(k), x.tail<kJawDofs>())[m]));
    };
    const Matrix ft = central_jacobian(targets, p, 1e-6), fc = central_jacobian(curves, p, 1e-6);
    for (int q = 0; q < k + kJawDofs; ++q) {
      const Points dt = target_derivative(basis, m, p.head(k), p.tail<kJawDofs>(), q);
      const Points dc = curve_derivative(basis, m, p.head(k), p.tail<kJawDofs>(), q);
      CHECK(rel_err(flatten(dt), ft.col(q)) < 1e-6);
      CHECK(rel_err(flatten(dc), fc.col(q)) < 1e-6);
    }
  }
}

TEST_CASE("volume morph equals the poisson solve of the combined surface data") {
  const Desk& d = small_desk();
  const Asset& asset = d.asset;
  const VolumetricLaplacian lap(asset.mesh, asset.mesh.boundary());
  std::mt19937_64 rng(9);
  const Vector b = random_vector(rng, asset.rig.num_shapes(), 2.0);
  const Points data = asset.rig.shapes.pre_skin(b) - asset.rig.shapes.neutral;
  const Points direct = asset.mesh.rest() + lap.extend(data);
  CHECK((morph_volume(asset.mesh, *d.basis, b) - direct).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("curve length examples") {
  Points a(3, 2);
  a << 0, 0, 0, 0, 0, 2;
  CHECK(curve_length(a) == doctest::Approx(2.0).epsilon(1e-15));
  Points b(3, 3);
  b << 0, 1, 1,
       0, 0, 1,
       0, 0, 0;
  CHECK(curve_length(b) == doctest::Approx(2.0).epsilon(1e-15));

  std::mt19937_64 rng(10);
  const Points c = random_points(rng, 12);
  CHECK(std::abs(curve_length(random_rotation(rng) * c) - curve_length(c)) < 1e-12);

  // Straight two-point curve along z: the far end's gradient is the unit direction.
  const Points g = curve_length_gradient(a);
  CHECK((g.col(1) - Vec3::UnitZ()).norm() < 1e-15);
  auto len = [&](const Vector& x) { return Vector::Constant(1, curve_length(unflatten(x))); };
  CHECK(rel_err(central_jacobian(len, flatten(c), 1e-6).transpose(), flatten(curve_length_gradient(c))) < 1e-8);
}

TEST_CASE("activation law examples") {
  ActivationCurve ac;
  ac.rest_length = 5.0;
  ac.shortening = 0.3;
  ac.smoothing = 0.05;
  const double l0 = ac.rest_length, s = ac.shortening, h = ac.smoothing;

  ActivationValue v = activation(ac, l0);
  CHECK(v.value == 0.0);
  CHECK(v.slope == 0.0);
  v = activation(ac, (1 - s) * l0 - 2 * h);
  CHECK(v.value == 1.0);
  CHECK(v.slope == 0.0);
  v = activation(ac, l0 * (1 - s / 2));
  CHECK(v.value == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(v.slope == doctest::Approx(-1.0 / (s * l0)).epsilon(1e-14));
}

TEST_CASE("activation stays in [0, 1], never increases and matches finite differences off the corners") {
  ActivationCurve ac;
  ac.rest_length = 3.0;
  ac.shortening = 0.25;
  ac.smoothing = 0.03;
  const double l0 = ac.rest_length, low = (1 - ac.shortening) * l0, h = ac.smoothing;
  double previous = 0.0;
  for (double l = 0.05; l < 1.5 * l0; l += 1e-3) {
    const ActivationValue v = activation(ac, l);
    CHECK(v.value >= 0.0);
    CHECK(v.value <= 1.0);
    CHECK(v.slope <= 0.0);
    if (l > 0.05) CHECK(v.value <= previous + 1e-15);
    previous = v.value;
    const bool near_corner = std::abs(l - l0) < 2.5 * h || std::abs(l - low) < 2.5 * h;
    if (near_corner) continue;
    const double step = 1e-6;
    const double fd = (activation(ac, l + step).value - activation(ac, l - step).value) / (2 * step);
    CHECK(std::abs(fd - v.slope) < 1e-8);
  }
  // The slope is continuous through both corner bands.
  for (double corner : {low, l0}) {
    double prev = activation(ac, corner - 3 * h).slope;
    for (double l = corner - 3 * h; l <= corner + 3 * h; l += 1e-5) {
      const double slope = activation(ac, l).slope;
      CHECK(std::abs(slope - prev) < 1e-2);
      prev = slope;
    }
  }
}

TEST_CASE("muscle construction rejects bad inputs") {
  const Asset& asset = small_desk().asset;
  const Muscle& m = asset.anatomy.muscles[0];
  CHECK_NOTHROW(m.validate(asset.mesh));
  Muscle broken = m;
  broken.fibers.pop_back();
  CHECK_THROWS_AS(broken.validate(asset.mesh), InputError);
  broken = m;
  broken.fibers[0] = Vec3(2.0, 0.0, 0.0);
  CHECK_THROWS_AS(broken.validate(asset.mesh), InputError);
}
