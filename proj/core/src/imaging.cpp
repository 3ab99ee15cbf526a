#include "facecap/imaging.hpp"

#include "facecap/geometry.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <limits>

namespace facecap {

namespace {

constexpr double kY00 = 0.282095;
constexpr double kY1 = 0.488603;
constexpr double kY2 = 1.092548;
constexpr double kY20 = 0.315392;
constexpr double kY22 = 0.546274;

int clamp_index(int i, int n) { return std::clamp(i, 0, n - 1); }

struct ScreenVertex {
  Vec2 p;
  double depth;
  bool valid;
};

ScreenVertex to_screen(const Camera& camera, const Vec3& x) {
  const Vec3 pc = camera.rotation * x + camera.translation;
  if (pc.z() <= 1e-9) return {Vec2::Zero(), 0.0, false};
  return {Vec2(camera.fx * pc.x() / pc.z() + camera.cx, camera.fy * pc.y() / pc.z() + camera.cy),
          pc.z(), true};
}

// Calls visit(x, y, barycentric) for pixel centers inside the projected triangle.
template <typename Visit>
void rasterize(const ScreenVertex& a, const ScreenVertex& b, const ScreenVertex& c, int width,
               int height, Visit&& visit) {
  if (!a.valid || !b.valid || !c.valid) return;
  const double area = (b.p - a.p).x() * (c.p - a.p).y() - (b.p - a.p).y() * (c.p - a.p).x();
  if (std::abs(area) < 1e-12) return;
  const int x0 = std::max(0, static_cast<int>(std::ceil(std::min({a.p.x(), b.p.x(), c.p.x()}))));
  const int x1 = std::min(width - 1, static_cast<int>(std::floor(std::max({a.p.x(), b.p.x(), c.p.x()}))));
  const int y0 = std::max(0, static_cast<int>(std::ceil(std::min({a.p.y(), b.p.y(), c.p.y()}))));
  const int y1 = std::min(height - 1, static_cast<int>(std::floor(std::max({a.p.y(), b.p.y(), c.p.y()}))));
  auto edge = [](const Vec2& p, const Vec2& q, const Vec2& r) {
    return (q - p).x() * (r - p).y() - (q - p).y() * (r - p).x();
  };
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const Vec2 s(x, y);
      const Vec3 w(edge(b.p, c.p, s) / area, edge(c.p, a.p, s) / area, edge(a.p, b.p, s) / area);
      if (w.minCoeff() < -1e-9) continue;
      visit(x, y, w);
    }
  }
}

std::vector<double> depth_buffer(const std::vector<ScreenVertex>& screen,
                                 const std::vector<Triangle>& triangles, int width, int height) {
  std::vector<double> z(static_cast<size_t>(width) * height, std::numeric_limits<double>::infinity());
  for (const Triangle& t : triangles) {
    const ScreenVertex &a = screen[t[0]], &b = screen[t[1]], &c = screen[t[2]];
    rasterize(a, b, c, width, height, [&](int x, int y, const Vec3& w) {
      double& d = z[static_cast<size_t>(y) * width + x];
      d = std::min(d, w[0] * a.depth + w[1] * b.depth + w[2] * c.depth);
    });
  }
  return z;
}

}  // namespace

void Camera::validate() const {
  if (!(fx > 0.0 && fy > 0.0)) throw InputError("camera focal lengths must be positive");
  if (width <= 0 || height <= 0) throw InputError("camera image size must be positive");
  if (!rotation.allFinite() || !translation.allFinite()) throw InputError("camera pose is not finite");
  if ((rotation * rotation.transpose() - Mat3::Identity()).norm() > 1e-8)
    throw InputError("camera rotation is not orthonormal");
}

Projection Camera::project(const Vec3& x) const {
  const Vec3 p = rotation * x + translation;
  if (p.z() <= 1e-9) throw InputError("point projects behind the camera");
  return {Vec2(fx * p.x() / p.z() + cx, fy * p.y() / p.z() + cy), p.z()};
}

Eigen::Matrix<double, 2, 3> Camera::project_jacobian(const Vec3& x) const {
  const Vec3 p = rotation * x + translation;
  if (p.z() <= 1e-9) throw InputError("point projects behind the camera");
  const double iz = 1.0 / p.z();
  Eigen::Matrix<double, 2, 3> d;
  d << fx * iz, 0.0, -fx * p.x() * iz * iz, 0.0, fy * iz, -fy * p.y() * iz * iz;
  return d * rotation;
}

Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double focal, int width,
               int height) {
  const Vec3 z = (target - eye).normalized();
  const Vec3 y = -(up - up.dot(z) * z).normalized();
  const Vec3 x = y.cross(z);
  Camera cam;
  cam.rotation.row(0) = x;
  cam.rotation.row(1) = y;
  cam.rotation.row(2) = z;
  cam.translation = -cam.rotation * eye;
  cam.fx = cam.fy = focal;
  cam.cx = 0.5 * (width - 1);
  cam.cy = 0.5 * (height - 1);
  cam.width = width;
  cam.height = height;
  cam.validate();
  return cam;
}

SH9 sh_basis(const Vec3& n) {
  const double x = n.x(), y = n.y(), z = n.z();
  SH9 b;
  b << kY00, kY1 * y, kY1 * z, kY1 * x, kY2 * x * y, kY2 * y * z, kY20 * (3.0 * z * z - 1.0),
      kY2 * x * z, kY22 * (x * x - y * y);
  return b;
}

Eigen::Matrix<double, 9, 3> sh_basis_jacobian(const Vec3& n) {
  const double x = n.x(), y = n.y(), z = n.z();
  Eigen::Matrix<double, 9, 3> d = Eigen::Matrix<double, 9, 3>::Zero();
  d(1, 1) = kY1;
  d(2, 2) = kY1;
  d(3, 0) = kY1;
  d.row(4) << kY2 * y, kY2 * x, 0.0;
  d.row(5) << 0.0, kY2 * z, kY2 * y;
  d(6, 2) = 6.0 * kY20 * z;
  d.row(7) << kY2 * z, 0.0, kY2 * x;
  d.row(8) << 2.0 * kY22 * x, -2.0 * kY22 * y, 0.0;
  return d;
}

Eigen::Matrix4d sh_quadratic_form(const SH9& g) {
  Eigen::Matrix4d m;
  m << kY22 * g[8], 0.5 * kY2 * g[4], 0.5 * kY2 * g[7], 0.5 * kY1 * g[3],
      0.5 * kY2 * g[4], -kY22 * g[8], 0.5 * kY2 * g[5], 0.5 * kY1 * g[1],
      0.5 * kY2 * g[7], 0.5 * kY2 * g[5], 3.0 * kY20 * g[6], 0.5 * kY1 * g[2],
      0.5 * kY1 * g[3], 0.5 * kY1 * g[1], 0.5 * kY1 * g[2], kY00 * g[0] - kY20 * g[6];
  return m;
}

double sh_irradiance(const SH9& gamma, const Vec3& n) {
  const Eigen::Vector4d h(n.x(), n.y(), n.z(), 1.0);
  return h.dot(sh_quadratic_form(gamma) * h);
}

Vec3 sh_irradiance_gradient(const SH9& gamma, const Vec3& n) {
  const Eigen::Vector4d h(n.x(), n.y(), n.z(), 1.0);
  return 2.0 * (sh_quadratic_form(gamma) * h).head<3>();
}

Image::Image(int width, int height, double fill) : width_(width), height_(height) {
  if (width <= 0 || height <= 0) throw InputError("image size must be positive");
  data_.assign(static_cast<size_t>(width) * height * 3, fill);
}

Sample sample_bilinear(const Image& image, const Vec2& uv) {
  const double fx0 = std::floor(uv.x()), fy0 = std::floor(uv.y());
  const double ax = uv.x() - fx0, ay = uv.y() - fy0;
  const int x0 = static_cast<int>(fx0), y0 = static_cast<int>(fy0);
  const int w = image.width(), h = image.height();
  const int xa = clamp_index(x0, w), xb = clamp_index(x0 + 1, w);
  const int ya = clamp_index(y0, h), yb = clamp_index(y0 + 1, h);
  Sample s;
  for (int c = 0; c < 3; ++c) {
    const double v00 = image.at(xa, ya, c), v10 = image.at(xb, ya, c);
    const double v01 = image.at(xa, yb, c), v11 = image.at(xb, yb, c);
    s.value[c] = (1 - ay) * ((1 - ax) * v00 + ax * v10) + ay * ((1 - ax) * v01 + ax * v11);
    s.gradient(c, 0) = (1 - ay) * (v10 - v00) + ay * (v11 - v01);
    s.gradient(c, 1) = (1 - ax) * (v01 - v00) + ax * (v11 - v10);
  }
  return s;
}

Image blur_binomial(const Image& image) {
  static constexpr double k[5] = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};
  const int w = image.width(), h = image.height();
  Image tmp(w, h), out(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        double s = 0.0;
        for (int i = -2; i <= 2; ++i) s += k[i + 2] * image.at(clamp_index(x + i, w), y, c);
        tmp.at(x, y, c) = s;
      }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        double s = 0.0;
        for (int i = -2; i <= 2; ++i) s += k[i + 2] * tmp.at(x, clamp_index(y + i, h), c);
        out.at(x, y, c) = s;
      }
  return out;
}

Image downsample(const Image& image) {
  Image out((image.width() + 1) / 2, (image.height() + 1) / 2);
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x)
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = image.at(2 * x, 2 * y, c);
  return out;
}

ImagePyramid::ImagePyramid(Image base, int levels) {
  if (levels < 1) throw InputError("a pyramid needs at least one level");
  levels_.push_back(std::move(base));
  for (int l = 1; l < levels; ++l) levels_.push_back(downsample(blur_binomial(levels_.back())));
}

std::vector<bool> compute_visibility(const Points& positions, const std::vector<Triangle>& triangles,
                                     const Camera& camera, double depth_tolerance) {
  const int n = static_cast<int>(positions.cols());
  std::vector<ScreenVertex> screen(n);
  for (int i = 0; i < n; ++i) screen[i] = to_screen(camera, positions.col(i));
  const std::vector<double> z = depth_buffer(screen, triangles, camera.width, camera.height);
  const Points normals = vertex_normals(positions, triangles);
  const Vec3 eye = camera.center();

  std::vector<bool> visible(n, false);
  for (int i = 0; i < n; ++i) {
    const ScreenVertex& s = screen[i];
    if (!s.valid || normals.col(i).dot(eye - positions.col(i)) <= 0.0) continue;
    const int x = static_cast<int>(std::lround(s.p.x())), y = static_cast<int>(std::lround(s.p.y()));
    if (x < 0 || y < 0 || x >= camera.width || y >= camera.height) continue;
    const double occluder = z[static_cast<size_t>(y) * camera.width + x];
    visible[i] = s.depth <= occluder * (1.0 + depth_tolerance);
  }
  return visible;
}

Points shade_vertices(const Points& positions, const std::vector<Triangle>& triangles,
                      const ShadingModel& shading) {
  if (shading.albedo.cols() != positions.cols()) throw InputError("one albedo per vertex required");
  const Points normals = vertex_normals(positions, triangles);
  Points out(3, positions.cols());
  for (Eigen::Index i = 0; i < positions.cols(); ++i)
    out.col(i) = shading.albedo.col(i) * sh_irradiance(shading.gamma, normals.col(i));
  return out;
}

ShadingResidual vertex_shading_residual(const Points& positions, const std::vector<Triangle>& triangles,
                                        const ShadingModel& shading, const Camera& camera,
                                        const ImagePyramid& plate, const std::vector<bool>& visible,
                                        const ShadingOptions& options) {
  const int n = static_cast<int>(positions.cols());
  if (static_cast<int>(visible.size()) != n) throw InputError("visibility does not match the surface");
  if (shading.albedo.cols() != n) throw InputError("one albedo per vertex required");
  if (std::none_of(visible.begin(), visible.end(), [](bool v) { return v; }))
    throw InputError("no surface vertex is visible in the plate");
  const int levels = std::min<int>(plate.levels(), static_cast<int>(options.level_weights.size()));
  const Eigen::Index rows = static_cast<Eigen::Index>(levels) * n * 3;

  ShadingResidual out;
  out.visible = visible;
  out.r = Vector::Zero(rows);
  if (options.with_jacobian) {
    out.d_positions = Matrix::Zero(rows, 3 * n);
    out.d_gamma = Matrix::Zero(rows, 9);
    out.d_albedo = Matrix::Zero(rows, 3 * n);
  }
  const Points normals = vertex_normals(positions, triangles);
  NormalJacobian dn;
  if (options.with_jacobian) dn = vertex_normal_jacobian(positions, triangles);

  for (int i = 0; i < n; ++i) {
    if (!visible[i]) continue;
    const Vec3 normal = normals.col(i);
    const Projection proj = camera.project(positions.col(i));
    const double e = sh_irradiance(shading.gamma, normal);
    Eigen::Matrix<double, 2, 3> jp;
    Vec3 de;
    SH9 basis;
    if (options.with_jacobian) {
      jp = camera.project_jacobian(positions.col(i));
      de = sh_irradiance_gradient(shading.gamma, normal);
      basis = sh_basis(normal);
    }
    double scale = 1.0;
    for (int l = 0; l < levels; ++l, scale *= 0.5) {
      const double w = options.level_weights[l];
      const Sample s = sample_bilinear(plate.level(l), scale * proj.pixel);
      for (int c = 0; c < 3; ++c) {
        const Eigen::Index row = (static_cast<Eigen::Index>(l) * n + i) * 3 + c;
        const double albedo = shading.albedo(c, i);
        out.r[row] = w * (s.value[c] - albedo * e);
        if (!options.with_jacobian) continue;
        out.d_positions.block<1, 3>(row, 3 * i) += w * scale * s.gradient.row(c) * jp;
        for (const auto& [j, block] : dn.entries[i])
          out.d_positions.block<1, 3>(row, 3 * j) -= w * albedo * de.transpose() * block;
        out.d_gamma.row(row) = -w * albedo * basis.transpose();
        out.d_albedo(row, 3 * i + c) = -w * e;
      }
    }
  }
  return out;
}

Vec3 roto_point(const Points& positions, const std::vector<Triangle>& triangles,
                const RotoConstraint& c) {
  if (c.triangle < 0 || c.triangle >= static_cast<int>(triangles.size()))
    throw InputError("roto constraint references a missing triangle");
  const Triangle& t = triangles[c.triangle];
  return c.barycentric[0] * positions.col(t[0]) + c.barycentric[1] * positions.col(t[1]) +
         c.barycentric[2] * positions.col(t[2]);
}

RotoResidual roto_residual(const Points& positions, const std::vector<Triangle>& triangles,
                           const std::vector<RotoConstraint>& constraints, const Camera& camera,
                           bool with_jacobian) {
  const Eigen::Index k = static_cast<Eigen::Index>(constraints.size());
  RotoResidual out;
  out.r.resize(2 * k);
  if (with_jacobian) out.d_positions = Matrix::Zero(2 * k, 3 * positions.cols());
  for (Eigen::Index i = 0; i < k; ++i) {
    const RotoConstraint& c = constraints[i];
    const Vec3 x = roto_point(positions, triangles, c);
    out.r.segment<2>(2 * i) = camera.project(x).pixel - c.target;
    if (!with_jacobian) continue;
    const Eigen::Matrix<double, 2, 3> jp = camera.project_jacobian(x);
    const Triangle& t = triangles[c.triangle];
    for (int a = 0; a < 3; ++a) out.d_positions.block<2, 3>(2 * i, 3 * t[a]) += c.barycentric[a] * jp;
  }
  return out;
}

Image render_plate(const Points& positions, const std::vector<Triangle>& triangles,
                   const ShadingModel& shading, const Camera& camera, double background) {
  camera.validate();
  const int n = static_cast<int>(positions.cols());
  const Points colors = shade_vertices(positions, triangles, shading);
  std::vector<ScreenVertex> screen(n);
  for (int i = 0; i < n; ++i) screen[i] = to_screen(camera, positions.col(i));

  Image image(camera.width, camera.height, background);
  std::vector<double> z(static_cast<size_t>(camera.width) * camera.height,
                        std::numeric_limits<double>::infinity());
  for (const Triangle& t : triangles) {
    const ScreenVertex &a = screen[t[0]], &b = screen[t[1]], &c = screen[t[2]];
    rasterize(a, b, c, camera.width, camera.height, [&](int x, int y, const Vec3& w) {
      const double d = w[0] * a.depth + w[1] * b.depth + w[2] * c.depth;
      double& zb = z[static_cast<size_t>(y) * camera.width + x];
      if (d >= zb) return;
      zb = d;
      const Vec3 col = w[0] * colors.col(t[0]) + w[1] * colors.col(t[1]) + w[2] * colors.col(t[2]);
      for (int ch = 0; ch < 3; ++ch) image.at(x, y, ch) = col[ch];
    });
  }

  const std::vector<bool> visible = compute_visibility(positions, triangles, camera);
  for (int i = 0; i < n; ++i) {
    if (!visible[i]) continue;
    const Vec2 p = screen[i].p;
    const int x0 = static_cast<int>(std::floor(p.x())), y0 = static_cast<int>(std::floor(p.y()));
    for (int dy = 0; dy <= 1; ++dy)
      for (int dx = 0; dx <= 1; ++dx) {
        const int x = clamp_index(x0 + dx, camera.width), y = clamp_index(y0 + dy, camera.height);
        for (int ch = 0; ch < 3; ++ch) image.at(x, y, ch) = colors(ch, i);
      }
  }
  return image;
}

}  // namespace facecap
