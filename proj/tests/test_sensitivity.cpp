#include "support.hpp"

using namespace facecap;
using namespace facecap::test;

namespace {

SolveSettings tight() {
  SolveSettings s;
  s.relative_tolerance = 1e-11;
  s.max_iterations = 100;
  return s;
}

Vector sample_b(int k) {
  Vector b = Vector::Constant(k, 0.3);
  if (k > 1) b[1] = 0.5;
  return b;
}

JawParams sample_j() {
  JawParams j;
  j << 0.05, 0.02, -0.03, 0.01, -0.02, 0.03;
  return j;
}

}  // namespace

TEST_CASE("a zero morph delta gives a zero right-hand side and an exactly zero column") {
  const Desk& d = small_desk();
  Asset asset = d.asset;
  asset.rig.shapes.deltas.col(2).setZero();
  const Simulator sim(asset.mesh, asset.anatomy, precompute_asset_basis(asset));
  const EquilibriumState s = sim.solve(sample_b(sim.num_shapes()), sample_j(), tight());
  REQUIRE(s.converged);
  CHECK(sensitivity_rhs(sim, s, 2).cwiseAbs().maxCoeff() == 0.0);
  const Sensitivities sens = solve_sensitivities(sim, s);
  CHECK(sens.dX.col(2).cwiseAbs().maxCoeff() == 0.0);
  CHECK(sens.dX.col(0).norm() > 0.0);
}

TEST_CASE("sensitivities match finite differences of full solves") {
  const Simulator& sim = *small_desk().sim;
  const int k = sim.num_shapes();
  const Vector b = sample_b(k);
  const JawParams j = sample_j();
  const EquilibriumState s = sim.solve(b, j, tight());
  REQUIRE(s.converged);
  const Sensitivities sens = solve_sensitivities(sim, s);
  const double h = 1e-5;
  for (int p = 0; p < sim.num_parameters(); ++p) {
    Vector bp = b, bm = b;
    JawParams jp = j, jm = j;
    if (p < k) {
      bp[p] += h;
      bm[p] -= h;
    } else {
      jp[p - k] += h;
      jm[p - k] -= h;
    }
    const EquilibriumState sp = sim.solve(bp, jp, tight(), &s.positions);
    const EquilibriumState sm = sim.solve(bm, jm, tight(), &s.positions);
    REQUIRE(sp.converged);
    REQUIRE(sm.converged);
    const Vector fd = flatten(Points((sp.positions - sm.positions) / (2 * h)));
    CHECK(rel_err(sens.dX.col(p), fd) < 1e-4);
  }
}

TEST_CASE("parallel and sequential sensitivity solves agree bit for bit") {
  const Simulator& sim = *small_desk().sim;
  const EquilibriumState s = sim.solve(sample_b(sim.num_shapes()), sample_j(), tight());
  REQUIRE(s.converged);
  SensitivitySettings one, many;
  many.threads = 3;
  const Sensitivities a = solve_sensitivities(sim, s, one);
  const Sensitivities b = solve_sensitivities(sim, s, many);
  CHECK((a.dX - b.dX).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("unconverged states are rejected") {
  const Simulator& sim = *small_desk().sim;
  EquilibriumState s = sim.solve(sample_b(sim.num_shapes()), sample_j(), tight());
  s.converged = false;
  CHECK_THROWS_AS(solve_sensitivities(sim, s), InputError);
}

TEST_CASE("a translating blendshape column approaches the translation as the tracks stiffen") {
  const Desk& d = small_desk();
  const Vec3 v(0.0, 0.0, 0.1);
  double previous = std::numeric_limits<double>::infinity();
  for (double scale : {1.0, 100.0, 10000.0}) {
    Asset asset = d.asset;
    asset.rig.shapes.deltas.col(0) = v.replicate(asset.rig.num_vertices(), 1);
    for (Muscle& m : asset.anatomy.muscles) m.stiffness *= scale;
    const Simulator sim(asset.mesh, asset.anatomy, precompute_asset_basis(asset));
    const EquilibriumState s = sim.solve(Vector::Zero(sim.num_shapes()), JawParams::Zero(), tight());
    REQUIRE(s.converged);
    const Points col = unflatten(solve_sensitivities(sim, s).dX.col(0));
    double gap = 0.0;
    for (const Muscle& m : asset.anatomy.muscles)
      for (int vtx : m.vertices) gap = std::max(gap, (col.col(vtx) - v).norm());
    CHECK(gap < previous);
    previous = gap;
  }
  CHECK(previous < 0.01 * v.norm());
}

TEST_CASE("gradient check rows") {
  const Simulator& sim = *small_desk().sim;
  const auto names = parameter_names(sim, sim.basis().shape_names);
  REQUIRE(static_cast<int>(names.size()) == sim.num_parameters());
  CHECK(names.back() == "jaw_tz");
  const auto rows = gradient_check(sim, sample_b(sim.num_shapes()), sample_j(), sim.mesh().boundary(), names);
  REQUIRE(rows.size() == names.size());
  for (const GradientCheckRow& r : rows) CHECK(r.rel_error < 1e-3);
}

TEST_CASE("rigid chain rule matches finite differences") {
  std::mt19937_64 rng(31);
  const int p = 5, nw = 4;
  const Matrix dx_dw = random_vector(rng, 3 * p * nw).reshaped(3 * p, nw);
  const Points x0 = random_points(rng, p);
  RigidParams rigid;
  rigid.rotation = random_vector(rng, 3, 0.5);
  rigid.translation = random_vector(rng, 3);
  // y(w, theta, t) = R(theta) (x0 + dx_dw w) + t.
  auto y = [&](const Vector& q) {
    RigidParams r;
    r.rotation = q.segment<3>(nw);
    r.translation = q.tail<3>();
    const Points x = x0 + unflatten(dx_dw * q.head(nw));
    return Vector(flatten(r.apply(x)));
  };
  Vector q(nw + 6);
  q << Vector::Zero(nw), rigid.rotation, rigid.translation;
  CHECK(rel_err(chain_to_observables(dx_dw, x0, rigid), central_jacobian(y, q, 1e-6)) < 1e-8);

  const Matrix c = random_vector(rng, nw * 3).reshaped(nw, 3);
  CHECK((chain_controls(dx_dw, c) - dx_dw * c).norm() < 1e-12);
}
