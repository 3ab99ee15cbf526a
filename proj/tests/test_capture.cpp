#include "support.hpp"

using namespace facecap;
using namespace facecap::test;

namespace {

Vector pucker_controls(int num_controls) {
  Vector w = Vector::Zero(num_controls);
  w[0] = 0.8;
  w[2] = 0.3;
  return w;
}

double bbox(const Desk& d) { return bounding_box_diagonal(d.asset.neutral()); }

std::vector<Triangle> tetra_surface() { return {{0, 2, 1}, {0, 1, 3}, {1, 2, 3}, {0, 3, 2}}; }

}  // namespace

TEST_CASE("small geometry helpers") {
  Points a = Points::Zero(3, 2), b(3, 2);
  b << 3, 0, 4, 0, 0, 0;
  CHECK(surface_rmse(a, b) == doctest::Approx(std::sqrt(25.0 / 2.0)));
  CHECK(bounding_box_diagonal(b) == doctest::Approx(5.0));
  CHECK((activation_color(0.0) - Vec3(1, 0, 0)).norm() == 0.0);
  CHECK((activation_color(0.7) - Vec3(1, 1, 1)).norm() == 0.0);
  CHECK((activation_color(0.25) - Vec3(1, 0.5, 0.5)).norm() < 1e-15);

  CHECK(mesh_edges({{0, 1, 2}}).size() == 3);
  const auto single = open_border({{0, 1, 2}}, 4);
  CHECK(single == std::vector<bool>{true, true, true, false});
  const auto closed = open_border(tetra_surface(), 4);
  CHECK(std::count(closed.begin(), closed.end(), true) == 0);

  const auto edges = mesh_edges(tetra_surface());
  CHECK(edges.size() == 6);
  CHECK(albedo_smoothness(Points::Constant(3, 4, 0.3), edges).cwiseAbs().maxCoeff() == 0.0);
  CHECK(albedo_smoothness(Points::Constant(3, 4, 0.3), edges).size() == 18);
}

TEST_CASE("volume diagnostics examples") {
  const Desk& d = small_desk();
  const VolumeDiagnostics rest = volume_diagnostics(*d.mesh, d.mesh->rest(), d.asset.lip_region);
  CHECK(rest.volume_change == 0.0);
  CHECK(rest.region_volume_change == 0.0);
  CHECK(rest.rest_volume == doctest::Approx(d.mesh->rest_volumes().sum()));
  const VolumeDiagnostics doubled = volume_diagnostics(*d.mesh, 2.0 * d.mesh->rest(), d.asset.lip_region);
  CHECK(doubled.volume_change == doctest::Approx(7.0 * rest.rest_volume));
  CHECK(doubled.region_volume_change == doctest::Approx(7.0 * rest.region_rest_volume));
}

TEST_CASE("blendshape deformer volume keeps the skull side on the bone") {
  const Desk& d = small_desk();
  BlendshapeDeformer def(d.asset.rig, d.mesh, d.basis);
  REQUIRE(def.volume_mesh() != nullptr);
  const Vector w0 = Vector::Zero(def.num_controls());
  CHECK((*def.volume_positions(w0) - d.mesh->rest()).cwiseAbs().maxCoeff() < 1e-12);
  const Vector w = pucker_controls(def.num_controls());
  const Points vol = *def.volume_positions(w);
  for (int v : d.mesh->inner_boundary()) CHECK((vol.col(v) - d.mesh->rest().col(v)).norm() < 1e-12);
  const Points surf = def.evaluate(w, nullptr);
  for (int i = 0; i < surf.cols(); ++i) CHECK((vol.col(d.mesh->boundary()[i]) - surf.col(i)).norm() < 1e-12);
  CHECK_FALSE(BlendshapeDeformer(d.asset.rig).volume_positions(w).has_value());
}

TEST_CASE("stacked capture jacobian matches finite differences with the blendshape deformer") {
  const Desk& d = small_desk();
  BlendshapeDeformer def(d.asset.rig);
  const ImagePyramid plate(render_plate(d.asset.neutral(), d.asset.triangles, d.asset.lighting, d.asset.camera));
  std::mt19937_64 rng(61);
  CaptureProblem::Terms terms;
  terms.geometry_target = d.asset.neutral() + random_points(rng, d.asset.neutral().cols(), 0.1);
  terms.geometry_weight = 0.7;
  terms.roto = project_roto(d.asset.neutral(), d.asset.triangles, d.asset.roto_points, d.asset.camera);
  terms.roto.resize(std::min<size_t>(terms.roto.size(), 40));
  for (RotoConstraint& c : terms.roto) c.target += Vec2(1.0, -0.5);
  terms.roto_weight = 0.01;
  terms.plate = &plate;
  terms.control_weight = 0.3;
  terms.anchor = random_vector(rng, def.num_controls(), 0.1);
  terms.smoothness_weight = 2.0;
  RigidParams rigid;
  rigid.rotation = random_vector(rng, 3, 0.02);
  rigid.translation = random_vector(rng, 3, 0.05);
  CaptureProblem problem(def, d.asset.triangles, d.asset.camera, terms, {true, true, true},
                         random_vector(rng, def.num_controls(), 0.1), rigid, d.asset.lighting);
  const Vector x = problem.pack();
  Vector r;
  Matrix jac;
  problem.evaluate(x, r, &jac);
  auto f = [&](const Vector& q) {
    Vector out;
    problem.evaluate(q, out, nullptr);
    return out;
  };
  CHECK(rel_err(jac, central_jacobian(f, x, 1e-6)) < 1e-5);
}

TEST_CASE("stacked capture jacobian matches finite differences with the simulation deformer") {
  const Desk& d = small_desk();
  SimulationOptions opts;
  opts.solve.relative_tolerance = 1e-11;
  opts.solve.max_iterations = 100;
  opts.cold_start = true;
  SimulationDeformer def(d.sim, opts);
  std::mt19937_64 rng(62);
  CaptureProblem::Terms terms;
  terms.geometry_target = d.asset.neutral() + random_points(rng, d.asset.neutral().cols(), 0.1);
  terms.roto = project_roto(d.asset.neutral(), d.asset.triangles, d.asset.roto_points, d.asset.camera);
  terms.roto.resize(std::min<size_t>(terms.roto.size(), 40));
  terms.roto_weight = 0.01;
  terms.control_weight = 0.1;
  terms.anchor = Vector::Zero(def.num_controls());
  Vector w = Vector::Constant(def.num_controls(), 0.2);
  w.tail<kJawDofs>() << 0.03, 0.01, -0.02, 0.01, -0.01, 0.02;
  CaptureProblem problem(def, d.asset.triangles, d.asset.camera, terms, {true, true, false}, w, RigidParams{},
                         d.asset.lighting);
  const Vector x = problem.pack();
  Vector r;
  Matrix jac;
  problem.evaluate(x, r, &jac);
  auto f = [&](const Vector& q) {
    Vector out;
    problem.evaluate(q, out, nullptr);
    return out;
  };
  const Matrix fd = central_jacobian(f, x, 1e-5);
  for (int c = 0; c < jac.cols(); ++c) CHECK(rel_err(jac.col(c), fd.col(c)) < 1e-3);
}

TEST_CASE("geometry fit recovers blendshape weights and a rigid pose") {
  const Desk& d = small_desk();
  BlendshapeDeformer def(d.asset.rig, d.mesh, d.basis);
  const Vector w_star = pucker_controls(def.num_controls());
  const Points target = def.evaluate(w_star, nullptr);
  const FitResult fit = fit_geometry(def, d.asset.triangles, target, 1e-9);
  CHECK(fit.rmse < 1e-6 * bbox(d));
  CHECK((fit.controls - w_star).norm() < 1e-3);
  CHECK(fit.report.monotone());
  REQUIRE(fit.volume.has_value());

  RigidParams truth;
  truth.rotation = Vec3(0.02, -0.03, 0.01);
  truth.translation = Vec3(0.1, -0.05, 0.2);
  const FitResult rigid = fit_geometry(def, d.asset.triangles, truth.apply(d.asset.neutral()), 1e-6);
  CHECK((rigid.rigid.rotation - truth.rotation).norm() < 1e-4);
  CHECK((rigid.rigid.translation - truth.translation).norm() < 1e-4);
  CHECK(rigid.controls.norm() < 1e-3);
}

TEST_CASE("stronger regularization shrinks the controls and raises the error") {
  const Desk& d = small_desk();
  BlendshapeDeformer def(d.asset.rig);
  const Points target = def.evaluate(pucker_controls(def.num_controls()), nullptr);
  double prev_norm = std::numeric_limits<double>::infinity(), prev_rmse = -1.0;
  for (double lambda : {1e-6, 1e-1, 1e1, 1e3, 1e6}) {
    const FitResult fit = fit_geometry(def, d.asset.triangles, target, lambda);
    CHECK(fit.controls.norm() <= prev_norm + 1e-9);
    CHECK(fit.rmse >= prev_rmse - 1e-9);
    prev_norm = fit.controls.norm();
    prev_rmse = fit.rmse;
  }
  CHECK(prev_norm < 1e-3);
  CHECK_THROWS_AS(fit_geometry(def, d.asset.triangles, target, -1.0), InputError);
}

TEST_CASE("lighting fit recovers the shading of a synthesized plate") {
  const Desk& d = small_desk();
  BlendshapeDeformer def(d.asset.rig);
  const ImagePyramid plate(render_plate(d.asset.neutral(), d.asset.triangles, d.asset.lighting, d.asset.camera));
  const LightingResult r = fit_lighting(def, d.asset.triangles, d.asset.camera, plate, RigidParams{}, 2500.0);
  CHECK(r.report.monotone());
  CHECK(r.final_residual < 1e-6);
  const Points truth = shade_vertices(d.asset.neutral(), d.asset.triangles, d.asset.lighting);
  const Points fitted = shade_vertices(d.asset.neutral(), d.asset.triangles, r.shading);
  double se = 0.0;
  int n = 0;
  for (int v = 0; v < truth.cols(); ++v)
    if (r.visible[v]) {
      se += (truth.col(v) - fitted.col(v)).squaredNorm();
      n += 3;
    }
  REQUIRE(n > 0);
  CHECK(std::sqrt(se / n) < 1e-3);

  const ImagePyramid black(Image(plate.level(0).width(), plate.level(0).height(), 0.0));
  CHECK_THROWS_AS(fit_lighting(def, d.asset.triangles, d.asset.camera, black, RigidParams{}, 1.0), InputError);
}

TEST_CASE("two-stage image fit on a synthesized plate") {
  const Desk& d = small_desk();
  BlendshapeDeformer def(d.asset.rig, d.mesh, d.basis);
  const Vector w_star = pucker_controls(def.num_controls());
  const Points truth = def.evaluate(w_star, nullptr);
  const ImagePyramid plate(render_plate(truth, d.asset.triangles, d.asset.lighting, d.asset.camera));
  const auto roto = project_roto(truth, d.asset.triangles, d.asset.roto_points, d.asset.camera);

  const ImageFitResult r = fit_image(def, d.asset.triangles, d.asset.camera, plate, roto, d.asset.lighting, {});
  CHECK(r.initialization.report.monotone());
  CHECK(r.refinement.report.monotone());
  CHECK(r.refinement.roto_rms < r.initialization.roto_rms + 1e-9);
  CHECK(surface_rmse(r.refinement.surface, truth) < 1e-2 * bbox(d));

  ImageFitOptions stiff;
  stiff.weights.prior = 1e12;
  const ImageFitResult c = fit_image(def, d.asset.triangles, d.asset.camera, plate, roto, d.asset.lighting, {}, stiff);
  CHECK((c.refinement.controls - c.initialization.controls).norm() < 1e-6);

  CHECK_THROWS_AS(fit_image(def, d.asset.triangles, d.asset.camera, plate, {}, d.asset.lighting, {}), InputError);
}
