#pragma once

#include "facecap/common.hpp"

#include <string>
#include <vector>

namespace facecap {

using Vec2 = Eigen::Vector2d;
using SH9 = Eigen::Matrix<double, 9, 1>;

struct Projection {
  Vec2 pixel;
  double depth = 0.0;
};

/// Pinhole camera; rotation/translation map world to camera space.
struct Camera {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  int width = 1;
  int height = 1;

  void validate() const;
  Vec3 center() const { return -rotation.transpose() * translation; }
  /// Throws InputError when the camera-space depth is <= 1e-9.
  Projection project(const Vec3& x) const;
  /// d(u, v)/dx.
  Eigen::Matrix<double, 2, 3> project_jacobian(const Vec3& x) const;
};

/// Camera at `eye` looking at `target`, image y axis pointing along -up.
Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& up, double focal, int width,
               int height);

/// Real spherical-harmonic basis, bands 0-2, ordered
/// (1; y, z, x; xy, yz, 3z^2 - 1, xz, x^2 - y^2) with the usual constants.
SH9 sh_basis(const Vec3& n);
/// d(sh_basis)/dn, 9 x 3.
Eigen::Matrix<double, 9, 3> sh_basis_jacobian(const Vec3& n);

/// gamma . Y(n), evaluated as the equivalent quadratic form in (n, 1).
double sh_irradiance(const SH9& gamma, const Vec3& n);
Vec3 sh_irradiance_gradient(const SH9& gamma, const Vec3& n);
/// The symmetric 4x4 matrix M with E(n) = [n; 1]^T M [n; 1].
Eigen::Matrix4d sh_quadratic_form(const SH9& gamma);

/// Three-channel floating point image, row-major, interleaved.
class Image {
 public:
  Image() = default;
  Image(int width, int height, double fill = 0.0);

  int width() const { return width_; }
  int height() const { return height_; }
  double& at(int x, int y, int c) { return data_[(static_cast<size_t>(y) * width_ + x) * 3 + c]; }
  double at(int x, int y, int c) const { return data_[(static_cast<size_t>(y) * width_ + x) * 3 + c]; }
  const std::vector<double>& data() const { return data_; }
  std::vector<double>& data() { return data_; }

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<double> data_;
};

struct Sample {
  Vec3 value;
  Eigen::Matrix<double, 3, 2> gradient;  // d value / d(u, v)
};

/// Bilinear lookup with pixel centers at integer coordinates and
/// clamp-to-edge addressing.
Sample sample_bilinear(const Image& image, const Vec2& uv);

/// Separable 5-tap binomial blur (clamp-to-edge) followed by keeping every
/// second pixel; level l coordinates are level 0 coordinates / 2^l.
class ImagePyramid {
 public:
  ImagePyramid() = default;
  explicit ImagePyramid(Image base, int levels = 3);

  int levels() const { return static_cast<int>(levels_.size()); }
  const Image& level(int l) const { return levels_.at(l); }

 private:
  std::vector<Image> levels_;
};

Image blur_binomial(const Image& image);
Image downsample(const Image& image);

/// Front-facing and not occluded in a one-pixel depth buffer of the
/// triangles (0.5% relative depth tolerance).
std::vector<bool> compute_visibility(const Points& positions, const std::vector<Triangle>& triangles,
                                     const Camera& camera, double depth_tolerance = 0.005);

struct ShadingModel {
  SH9 gamma = SH9::Unit(0);
  Points albedo;  // RGB per vertex, 3 x V
};

/// Per-vertex, per-level, per-channel plate residuals. Rows are ordered
/// (level, vertex, channel); hidden vertices give zero rows.
struct ShadingResidual {
  Vector r;
  Matrix d_positions;  // rows x 3V
  Matrix d_gamma;      // rows x 9
  Matrix d_albedo;     // rows x 3V
  std::vector<bool> visible;
};

struct ShadingOptions {
  std::vector<double> level_weights = {1.0, 0.5, 0.25};
  bool with_jacobian = true;
};

ShadingResidual vertex_shading_residual(const Points& positions, const std::vector<Triangle>& triangles,
                                        const ShadingModel& shading, const Camera& camera,
                                        const ImagePyramid& plate, const std::vector<bool>& visible,
                                        const ShadingOptions& options = {});

/// c_i * E(n_i) at every vertex (3 x V).
Points shade_vertices(const Points& positions, const std::vector<Triangle>& triangles,
                      const ShadingModel& shading);

struct RotoConstraint {
  int triangle = -1;
  Vec3 barycentric = Vec3::Constant(1.0 / 3.0);
  Vec2 target = Vec2::Zero();
};

struct RotoResidual {
  Vector r;            // 2 per constraint: projected - target
  Matrix d_positions;  // 2K x 3V
};

Vec3 roto_point(const Points& positions, const std::vector<Triangle>& triangles,
                const RotoConstraint& c);

RotoResidual roto_residual(const Points& positions, const std::vector<Triangle>& triangles,
                           const std::vector<RotoConstraint>& constraints, const Camera& camera,
                           bool with_jacobian = true);

/// Synthetic plate: Gouraud-shaded raster of the visible surface over
/// `background`, then every visible vertex's own shaded value written into
/// its 2x2 bilinear footprint so that level-0 vertex sampling reproduces
/// the model exactly.
Image render_plate(const Points& positions, const std::vector<Triangle>& triangles,
                   const ShadingModel& shading, const Camera& camera, double background = 0.0);

/// 8-bit RGB PNG, values in [0, 1] (clamped on write).
Image read_png(const std::string& path);
void write_png(const Image& image, const std::string& path);

}  // namespace facecap
