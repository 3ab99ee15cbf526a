#include "support.hpp"

#include <filesystem>

using namespace facecap;
using namespace facecap::test;

namespace {

Camera simple_camera() {
  Camera c;
  c.fx = 100.0;
  c.fy = 120.0;
  c.cx = 50.0;
  c.cy = 40.0;
  c.width = 100;
  c.height = 80;
  return c;
}

Image gradient_image(int w, int h) {
  Image img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = 0.01 * x + 0.02 * y + 0.1 * c + 0.001 * x * y;
  return img;
}

struct Scene {
  const Asset& asset = small_desk().asset;
  Points x = asset.neutral();
  Image plate = render_plate(asset.neutral(), asset.triangles, asset.lighting, asset.camera);
  ImagePyramid pyramid{plate};
  std::vector<bool> visible = compute_visibility(asset.neutral(), asset.triangles, asset.camera);
};

}  // namespace

TEST_CASE("projection examples") {
  const Camera c = simple_camera();
  const Projection p = c.project(Vec3(1.0, 2.0, 4.0));
  CHECK(p.pixel.x() == doctest::Approx(100.0 / 4.0 + 50.0));
  CHECK(p.pixel.y() == doctest::Approx(240.0 / 4.0 + 40.0));
  CHECK(p.depth == 4.0);
  CHECK((c.project(Vec3(0, 0, 3)).pixel - Vec2(50, 40)).norm() == 0.0);
  CHECK_THROWS_AS(c.project(Vec3(0, 0, -1)), InputError);
  CHECK_THROWS_AS(c.project(Vec3(0, 0, 0)), InputError);

  Camera r = c;
  std::mt19937_64 rng(41);
  r.rotation = random_rotation(rng);
  r.translation = Vec3(0.1, 0.2, 10.0);
  const Vec3 x(0.3, -0.2, 0.5);
  auto f = [&](const Vector& q) { return Vector(r.project(q).pixel); };
  CHECK(rel_err(r.project_jacobian(x), central_jacobian(f, x, 1e-6)) < 1e-8);
  CHECK((r.center() - (-r.rotation.transpose() * r.translation)).norm() == 0.0);
}

TEST_CASE("look-at camera sees its target at the principal point") {
  const Camera c = look_at(Vec3(0, 0, 10), Vec3::Zero(), Vec3::UnitY(), 500.0, 200, 100);
  const Projection p = c.project(Vec3::Zero());
  CHECK(p.depth == doctest::Approx(10.0));
  CHECK((p.pixel - Vec2(c.cx, c.cy)).norm() < 1e-12);
  // Image y points along -up.
  CHECK(c.project(Vec3(0, 1, 0)).pixel.y() < c.cy);
}

TEST_CASE("spherical harmonic examples") {
  const SH9 up = sh_basis(Vec3::UnitZ());
  CHECK(up[0] == doctest::Approx(0.282095).epsilon(1e-5));
  CHECK(up[1] == 0.0);
  CHECK(up[2] == doctest::Approx(0.488603).epsilon(1e-5));
  CHECK(up[3] == 0.0);
  CHECK(up[6] == doctest::Approx(2.0 * 0.315392).epsilon(1e-5));
  CHECK(up[8] == 0.0);

  SH9 ambient = SH9::Zero();
  ambient[0] = 1.0 / up[0];
  std::mt19937_64 rng(42);
  for (int i = 0; i < 5; ++i)
    CHECK(sh_irradiance(ambient, Vec3(random_vector(rng, 3)).normalized()) == doctest::Approx(1.0));
}

TEST_CASE("irradiance quadratic form equals the basis expansion and differentiates correctly") {
  std::mt19937_64 rng(43);
  for (int trial = 0; trial < 10; ++trial) {
    const SH9 gamma = random_vector(rng, 9);
    const Vec3 n = Vec3(random_vector(rng, 3)).normalized();
    CHECK(sh_irradiance(gamma, n) == doctest::Approx(gamma.dot(sh_basis(n))).epsilon(1e-12));
    Eigen::Vector4d h;
    h << n, 1.0;
    CHECK(h.dot(sh_quadratic_form(gamma) * h) == doctest::Approx(gamma.dot(sh_basis(n))).epsilon(1e-12));
    auto e = [&](const Vector& q) { return Vector::Constant(1, sh_irradiance(gamma, q)); };
    CHECK(rel_err(central_jacobian(e, n, 1e-6).transpose(), sh_irradiance_gradient(gamma, n)) < 1e-8);
    auto y = [&](const Vector& q) { return Vector(sh_basis(q)); };
    CHECK(rel_err(sh_basis_jacobian(n), central_jacobian(y, n, 1e-6)) < 1e-8);
  }
}

TEST_CASE("bilinear sampling examples and gradient") {
  const Image img = gradient_image(20, 15);
  CHECK(sample_bilinear(img, Vec2(3, 4)).value[1] == img.at(3, 4, 1));
  const Sample mid = sample_bilinear(img, Vec2(3.5, 4.0));
  CHECK(mid.value[0] == doctest::Approx(0.5 * (img.at(3, 4, 0) + img.at(4, 4, 0))));
  // Clamp to edge outside the image.
  CHECK(sample_bilinear(img, Vec2(-5, -5)).value[2] == img.at(0, 0, 2));

  const Vec2 uv(6.3, 7.6);
  auto f = [&](const Vector& q) { return Vector(sample_bilinear(img, q).value); };
  CHECK(rel_err(sample_bilinear(img, uv).gradient, central_jacobian(f, uv, 1e-6)) < 1e-8);
}

TEST_CASE("pyramid of a constant image stays constant") {
  const ImagePyramid pyr(Image(33, 20, 0.4), 3);
  REQUIRE(pyr.levels() == 3);
  CHECK(pyr.level(1).width() == 17);
  CHECK(pyr.level(1).height() == 10);
  for (int l = 0; l < 3; ++l)
    for (double v : pyr.level(l).data()) CHECK(v == doctest::Approx(0.4).epsilon(1e-14));
  const Image blurred = blur_binomial(gradient_image(9, 9));
  CHECK(blurred.width() == 9);
  // Linear ramps survive the symmetric blur away from the border.
  Image ramp(9, 9);
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 9; ++x)
      for (int c = 0; c < 3; ++c) ramp.at(x, y, c) = x + 2.0 * y;
  CHECK(blur_binomial(ramp).at(4, 4, 0) == doctest::Approx(12.0));
}

TEST_CASE("the model reproduces its own synthesized plate") {
  const Scene s;
  ShadingOptions level0;
  level0.level_weights = {1.0};
  const ShadingResidual r =
      vertex_shading_residual(s.x, s.asset.triangles, s.asset.lighting, s.asset.camera, s.pyramid, s.visible, level0);
  CHECK(r.r.cwiseAbs().maxCoeff() < 1e-12);
  CHECK(std::count(s.visible.begin(), s.visible.end(), true) > s.x.cols() / 3);

  // A constant plate gives residual = plate - model on visible rows.
  const ImagePyramid flat(Image(s.plate.width(), s.plate.height(), 0.5));
  const ShadingResidual rf =
      vertex_shading_residual(s.x, s.asset.triangles, s.asset.lighting, s.asset.camera, flat, s.visible, level0);
  const Points model = shade_vertices(s.x, s.asset.triangles, s.asset.lighting);
  for (int v = 0; v < s.x.cols(); ++v)
    for (int c = 0; c < 3; ++c)
      CHECK(rf.r[3 * v + c] == doctest::Approx(s.visible[v] ? 0.5 - model(c, v) : 0.0).epsilon(1e-12));
}

TEST_CASE("shifting the plate by a constant shifts every visible residual by the same amount") {
  const Scene s;
  Image shifted = s.plate;
  for (double& v : shifted.data()) v += 100.0 / 255.0;
  const ImagePyramid base_pyr(s.plate), shift_pyr(shifted);
  const ShadingResidual a =
      vertex_shading_residual(s.x, s.asset.triangles, s.asset.lighting, s.asset.camera, base_pyr, s.visible);
  const ShadingResidual b =
      vertex_shading_residual(s.x, s.asset.triangles, s.asset.lighting, s.asset.camera, shift_pyr, s.visible);
  const ShadingOptions opts;
  const int n = static_cast<int>(s.x.cols());
  for (int l = 0; l < 3; ++l)
    for (int v = 0; v < n; ++v)
      for (int c = 0; c < 3; ++c) {
        const int row = (l * n + v) * 3 + c;
        const double expected = s.visible[v] ? opts.level_weights[l] * 100.0 / 255.0 : 0.0;
        CHECK(b.r[row] - a.r[row] == doctest::Approx(expected).epsilon(1e-10));
      }
}

TEST_CASE("shading residual jacobians match finite differences") {
  const Scene s;
  std::mt19937_64 rng(44);
  const Points x = s.x + random_points(rng, s.x.cols(), 0.02);
  ShadingModel m = s.asset.lighting;
  m.gamma += random_vector(rng, 9, 0.05);
  const ShadingResidual r = vertex_shading_residual(x, s.asset.triangles, m, s.asset.camera, s.pyramid, s.visible);

  auto by_pos = [&](const Vector& q) {
    ShadingOptions o;
    o.with_jacobian = false;
    return vertex_shading_residual(unflatten(q), s.asset.triangles, m, s.asset.camera, s.pyramid, s.visible, o).r;
  };
  const int dofs = static_cast<int>(x.size());
  for (int col : {0, dofs / 5, dofs / 2, dofs - 1}) {
    Vector qp = flatten(x), qm = flatten(x);
    qp[col] += 1e-6;
    qm[col] -= 1e-6;
    CHECK(rel_err(r.d_positions.col(col), (by_pos(qp) - by_pos(qm)) / 2e-6) < 1e-5);
  }
  auto by_gamma = [&](const Vector& g) {
    ShadingModel mm = m;
    mm.gamma = g;
    return vertex_shading_residual(x, s.asset.triangles, mm, s.asset.camera, s.pyramid, s.visible).r;
  };
  CHECK(rel_err(r.d_gamma, central_jacobian(by_gamma, m.gamma, 1e-6)) < 1e-8);
  auto by_albedo = [&](const Vector& c) {
    ShadingModel mm = m;
    mm.albedo = unflatten(c);
    return vertex_shading_residual(x, s.asset.triangles, mm, s.asset.camera, s.pyramid, s.visible).r;
  };
  Vector alb = flatten(m.albedo);
  for (int col : {0, 7, dofs - 1}) {
    Vector qp = alb, qm = alb;
    qp[col] += 1e-6;
    qm[col] -= 1e-6;
    CHECK(rel_err(r.d_albedo.col(col), (by_albedo(qp) - by_albedo(qm)) / 2e-6) < 1e-8);
  }
}

TEST_CASE("roto residual examples and jacobian") {
  const Scene s;
  const auto roto = project_roto(s.x, s.asset.triangles, s.asset.roto_points, s.asset.camera);
  REQUIRE(!roto.empty());
  const RotoResidual r0 = roto_residual(s.x, s.asset.triangles, roto, s.asset.camera);
  CHECK(r0.r.cwiseAbs().maxCoeff() < 1e-9);

  std::vector<RotoConstraint> shifted = roto;
  for (RotoConstraint& c : shifted) c.target += Vec2(2.0, -1.0);
  const RotoResidual r1 = roto_residual(s.x, s.asset.triangles, shifted, s.asset.camera);
  for (size_t i = 0; i < roto.size(); ++i) {
    CHECK(r1.r[2 * i] == doctest::Approx(r0.r[2 * i] - 2.0));
    CHECK(r1.r[2 * i + 1] == doctest::Approx(r0.r[2 * i + 1] + 1.0));
  }

  const std::vector<RotoConstraint> few(roto.begin(), roto.begin() + std::min<size_t>(roto.size(), 25));
  std::mt19937_64 rng(45);
  const Points x = s.x + random_points(rng, s.x.cols(), 0.05);
  auto f = [&](const Vector& q) { return roto_residual(unflatten(q), s.asset.triangles, few, s.asset.camera, false).r; };
  CHECK(rel_err(roto_residual(x, s.asset.triangles, few, s.asset.camera).d_positions,
                central_jacobian(f, flatten(x), 1e-6)) < 1e-7);

  RotoConstraint bad;
  bad.triangle = 1 << 20;
  CHECK_THROWS_AS(roto_residual(s.x, s.asset.triangles, {bad}, s.asset.camera), InputError);
}

TEST_CASE("visibility: front faces visible, back faces hidden") {
  const Scene s;
  Points flipped = s.x;
  std::vector<Triangle> reversed = s.asset.triangles;
  for (Triangle& t : reversed) std::swap(t[1], t[2]);
  const auto hidden = compute_visibility(flipped, reversed, s.asset.camera);
  CHECK(std::count(hidden.begin(), hidden.end(), true) <
        std::count(s.visible.begin(), s.visible.end(), true));
}

TEST_CASE("png round trip quantizes to 8 bits") {
  Image img = gradient_image(16, 8);
  for (double& v : img.data()) v = std::clamp(v, 0.0, 1.0);
  const auto path = std::filesystem::temp_directory_path() / "facecap_png_roundtrip.png";
  write_png(img, path.string());
  const Image back = read_png(path.string());
  REQUIRE(back.width() == 16);
  REQUIRE(back.height() == 8);
  for (size_t i = 0; i < img.data().size(); ++i) CHECK(std::abs(back.data()[i] - img.data()[i]) <= 0.5 / 255.0 + 1e-12);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(read_png("/nonexistent/plate.png"), InputError);
}
