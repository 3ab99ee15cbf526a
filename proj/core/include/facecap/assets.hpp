#pragma once

#include "facecap/anatomy.hpp"
#include "facecap/imaging.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace facecap {

/// Procedural slab "face". Resolution is the number of grid vertices per
/// axis; the slab spans (nx - 1) x (ny - 1) x (nz - 1) cells of `spacing`.
struct AssetSpec {
  int nx = 12;
  int ny = 8;
  int nz = 4;
  double spacing = 1.0;
  int num_muscles = 3;  // 1..3
  int num_shapes = 6;   // 1..6
  /// Jaw pivot in units of the slab extent; z is absolute (below the slab).
  Vec3 jaw_pivot = Vec3(0.7, 0.5, -0.5);
  std::uint64_t seed = 1;
  int image_width = 1600;
  int image_height = 1200;

  void validate() const;
};

/// A point on the surface mesh used for roto curves.
struct SurfacePoint {
  int triangle = -1;
  Vec3 barycentric = Vec3::Constant(1.0 / 3.0);
};

struct Asset {
  AssetSpec spec;
  TetMesh mesh;
  /// Neutral surface; vertex i is flesh vertex mesh.boundary()[i].
  std::vector<Triangle> triangles;
  Rig rig;
  Anatomy anatomy;
  Camera camera;
  /// Ground-truth lighting used for synthetic plates.
  ShadingModel lighting;
  std::vector<SurfacePoint> roto_points;
  /// Tets around the mouth for the lip-volume diagnostic.
  std::vector<int> lip_region;

  const Points& neutral() const { return rig.shapes.neutral; }
};

/// Deterministic given the AssetSpec, including its seed.
Asset generate_asset(const AssetSpec& spec);

/// Checks that every part of the asset is mutually consistent: mesh
/// validity, surface / boundary correspondence, rig, muscles, Laplacian
/// definiteness, rest lengths.
void validate_asset(const Asset& asset);

/// Muscle basis for the asset's rig, Laplacian constrained on the outer boundary.
PrecomputedMuscleBasis precompute_asset_basis(const Asset& asset);

/// Roto constraints whose targets are the projections of `surface`.
std::vector<RotoConstraint> project_roto(const Points& surface, const std::vector<Triangle>& triangles,
                                         const std::vector<SurfacePoint>& points, const Camera& camera);

}  // namespace facecap
