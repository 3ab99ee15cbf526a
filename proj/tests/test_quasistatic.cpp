#include "support.hpp"

using namespace facecap;
using namespace facecap::test;

namespace {

/// Total potential whose negative gradient is Simulator::total_forces at fixed activations.
double total_energy(const Simulator& sim, const Points& x, const Vector& a, const std::vector<Points>& targets) {
  double e = sim.elastic().energy(x, a);
  const auto& muscles = sim.anatomy().muscles;
  for (size_t m = 0; m < muscles.size(); ++m)
    for (size_t i = 0; i < muscles[m].vertices.size(); ++i)
      e += 0.5 * muscles[m].stiffness * (targets[m].col(i) - x.col(muscles[m].vertices[i])).squaredNorm();
  for (const CollisionProxy& p : sim.anatomy().proxies)
    for (int v : sim.unconstrained()) {
      const double phi = std::min(signed_distance(p, x.col(v)).value, 0.0);
      e += 0.5 * p.stiffness * phi * phi;
    }
  return e;
}

double fiber_stretch(const Simulator& sim, const Points& x, int muscle) {
  const Muscle& m = sim.anatomy().muscles[muscle];
  double s = 0.0;
  for (size_t i = 0; i < m.tets.size(); ++i)
    s += (deformation_gradient(sim.mesh(), x, m.tets[i]) * m.fibers[i]).norm();
  return s / m.tets.size();
}

std::vector<Points> rest_targets(const Simulator& sim) {
  return muscle_targets(sim.basis(), Vector::Zero(sim.num_shapes()), JawParams::Zero());
}

}  // namespace

TEST_CASE("constrained positions follow the jaw") {
  const Simulator& sim = *small_desk().sim;
  const Points rest = sim.constrained_positions(JawParams::Zero());
  for (size_t i = 0; i < sim.constrained().size(); ++i)
    CHECK((rest.col(i) - sim.mesh().rest().col(sim.constrained()[i])).norm() < 1e-14);

  JawParams j = JawParams::Zero();
  j[4] = 0.3;
  const Points moved = sim.constrained_positions(j);
  const Vector& w = sim.basis().volume_skin_weights;
  for (size_t i = 0; i < sim.constrained().size(); ++i) {
    const int v = sim.constrained()[i];
    CHECK((moved.col(i) - rest.col(i) - Vec3(0, 0.3 * w[v], 0)).norm() < 1e-14);
  }

  const auto d = sim.constrained_derivatives(JawParams::Zero());
  const JawParams j0 = JawParams::Zero();
  for (int k = 0; k < kJawDofs; ++k) {
    auto f = [&](const Vector& p) { return Vector(flatten(sim.constrained_positions(p))); };
    CHECK(rel_err(flatten(d[k]), central_jacobian(f, j0, 1e-6).col(k)) < 1e-8);
  }
}

TEST_CASE("track force examples") {
  Muscle m;
  m.vertices = {0, 2};
  m.stiffness = 3.0;
  Points x = Points::Zero(3, 3);
  Points target(3, 2);
  target << 1, 0,
            0, 2,
            0, 0;
  const Points f = track_forces({m}, {target}, x);
  CHECK((f.col(0) - Vec3(3, 0, 0)).norm() == 0.0);
  CHECK(f.col(1).norm() == 0.0);
  CHECK((f.col(2) - Vec3(0, 6, 0)).norm() == 0.0);
  // Overlapping muscles add.
  const Points twice = track_forces({m, m}, {target, target}, x);
  CHECK((twice - 2.0 * f).norm() == 0.0);
  CHECK(track_forces({m}, {x(Eigen::all, std::vector<int>{0, 2})}, x).norm() == 0.0);
}

TEST_CASE("collision penalty pushes penetrating vertices out and ignores the rest") {
  const CollisionProxy sphere{SphereProxy{Vec3::Zero(), 1.0}, 10.0};
  Points x(3, 2);
  x << 0.5, 3.0,
       0.0, 0.0,
       0.0, 0.0;
  const Points f = collision_forces({sphere}, {0, 1}, x);
  CHECK((f.col(0) - Vec3(5.0, 0, 0)).norm() < 1e-14);
  CHECK(f.col(1).norm() == 0.0);
  CHECK(collision_forces({sphere}, {1}, x).col(0).norm() == 0.0);
}

TEST_CASE("rest equilibrium needs no newton iterations") {
  const Simulator& sim = *desk().sim;
  const EquilibriumState s = sim.solve(Vector::Zero(sim.num_shapes()), JawParams::Zero(), SolveSettings{});
  CHECK(s.converged);
  CHECK(s.iterations == 0);
  CHECK(s.residual < s.tolerance);
  CHECK(s.activations.cwiseAbs().maxCoeff() == 0.0);
  CHECK(sim.characteristic_force() > 0.0);
}

TEST_CASE("an activated muscle shortens along its fibers at a local energy minimum") {
  const Simulator& sim = *small_desk().sim;
  const auto targets = rest_targets(sim);
  const Points xc = sim.constrained_positions(JawParams::Zero());
  Vector a = Vector::Zero(sim.anatomy().num_muscles());
  a[0] = 1.0;
  const EquilibriumState s = sim.solve_with(a, targets, xc, SolveSettings{});
  REQUIRE(s.converged);
  CHECK(s.iterations > 0);
  CHECK(fiber_stretch(sim, s.positions, 0) < fiber_stretch(sim, sim.mesh().rest(), 0) - 1e-3);

  // Independent force assembly vanishes on the free vertices.
  const Points f = sim.elastic().forces(s.positions, a) + track_forces(sim.anatomy().muscles, targets, s.positions) +
                   collision_forces(sim.anatomy().proxies, sim.unconstrained(), s.positions);
  double worst = 0.0;
  for (int v : sim.unconstrained()) worst = std::max(worst, f.col(v).cwiseAbs().maxCoeff());
  CHECK(worst < s.tolerance);

  // Random perturbations of the free vertices never lower the energy.
  std::mt19937_64 rng(21);
  const double e0 = total_energy(sim, s.positions, a, targets);
  for (int trial = 0; trial < 10; ++trial) {
    Points y = s.positions;
    for (int v : sim.unconstrained()) y.col(v) += random_vector(rng, 3, 1e-3);
    CHECK(total_energy(sim, y, a, targets) > e0 - 1e-9 * std::abs(e0));
  }
}

TEST_CASE("stiffer tracks hold the muscle closer to its targets") {
  const Desk& d = small_desk();
  const Points xc = d.sim->constrained_positions(JawParams::Zero());
  Vector a = Vector::Zero(d.asset.anatomy.num_muscles());
  a[1] = 1.0;
  double previous = std::numeric_limits<double>::infinity();
  for (double scale : {0.1, 1.0, 10.0, 100.0}) {
    Anatomy anatomy = d.asset.anatomy;
    for (Muscle& m : anatomy.muscles) m.stiffness *= scale;
    const Simulator sim(*d.mesh, anatomy, *d.basis);
    const auto targets = rest_targets(sim);
    const EquilibriumState s = sim.solve_with(a, targets, xc, SolveSettings{});
    REQUIRE(s.converged);
    const Muscle& m = anatomy.muscles[1];
    double gap = 0.0;
    for (size_t i = 0; i < m.vertices.size(); ++i)
      gap += (s.positions.col(m.vertices[i]) - targets[1].col(i)).squaredNorm();
    CHECK(gap < previous);
    previous = gap;
  }
}

TEST_CASE("penetration depth shrinks as the penalty stiffness grows") {
  const Desk& d = small_desk();
  // A sphere dipping into the top surface at rest.
  const Points& rest = d.mesh->rest();
  int probe = d.sim->unconstrained()[0];
  for (int v : d.sim->unconstrained())
    if (rest(2, v) > rest(2, probe)) probe = v;
  const Vec3 center = rest.col(probe) + Vec3(0, 0, 0.8);
  double previous = std::numeric_limits<double>::infinity();
  for (double k : {1e3, 1e4, 1e5, 1e6}) {
    Anatomy anatomy = d.asset.anatomy;
    anatomy.proxies = {CollisionProxy{SphereProxy{center, 1.0}, k}};
    const Simulator sim(*d.mesh, anatomy, *d.basis);
    const EquilibriumState s = sim.solve(Vector::Zero(sim.num_shapes()), JawParams::Zero(), SolveSettings{});
    REQUIRE(s.converged);
    double depth = 0.0;
    for (int v : sim.unconstrained())
      depth = std::max(depth, -signed_distance(anatomy.proxies[0], s.positions.col(v)).value);
    CHECK(depth > 0.0);
    CHECK(depth < previous);
    previous = depth;
  }
}

TEST_CASE("solves are deterministic and warm starts re-converge immediately") {
  const Simulator& sim = *small_desk().sim;
  Vector b = Vector::Zero(sim.num_shapes());
  b[0] = 0.6;
  b[1] = 0.3;
  JawParams j = JawParams::Zero();
  j[0] = 0.05;
  const EquilibriumState s1 = sim.solve(b, j, SolveSettings{});
  const EquilibriumState s2 = sim.solve(b, j, SolveSettings{});
  REQUIRE(s1.converged);
  CHECK((s1.positions - s2.positions).norm() == 0.0);
  CHECK(s1.iterations == s2.iterations);

  const EquilibriumState warm = sim.solve(b, j, SolveSettings{}, &s1.positions);
  CHECK(warm.converged);
  CHECK(warm.iterations == 0);
}

TEST_CASE("non-convergence is reported with a message") {
  const Simulator& sim = *small_desk().sim;
  Vector b = Vector::Constant(sim.num_shapes(), 1.0);
  SolveSettings tight;
  tight.max_iterations = 1;
  tight.relative_tolerance = 1e-14;
  const EquilibriumState s = sim.solve(b, JawParams::Zero(), tight);
  CHECK_FALSE(s.converged);
  CHECK_FALSE(s.message.empty());
  CHECK_THROWS_AS(sim.solve(Vector::Zero(sim.num_shapes() + 1), JawParams::Zero(), tight), InputError);
}
