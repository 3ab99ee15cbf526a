#pragma once

#include "facecap/assets.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace facecap {

namespace fs = std::filesystem;

/// File names inside an asset directory.
struct AssetLayout {
  static constexpr const char* kFlesh = "flesh.json";
  static constexpr const char* kNeutral = "neutral.obj";
  static constexpr const char* kRig = "rig.json";
  static constexpr const char* kAnatomy = "anatomy.json";
  static constexpr const char* kCamera = "camera.json";
  static constexpr const char* kLighting = "lighting.json";
  static constexpr const char* kRoto = "roto_points.json";
  static constexpr const char* kSpec = "asset.json";
  static constexpr const char* kPlate = "neutral_plate.png";
  static constexpr const char* kBasis = "basis.json";
};

void write_tet_mesh(const TetMesh& mesh, const fs::path& path);
TetMesh read_tet_mesh(const fs::path& path);

/// Vertex colors, when given, are written as "v x y z r g b".
void write_obj(const fs::path& path, const Points& vertices, const std::vector<Triangle>& triangles,
               const Points* colors = nullptr);
void read_obj(const fs::path& path, Points& vertices, std::vector<Triangle>& triangles);

/// The rig file references the neutral OBJ by a path relative to itself.
void write_rig(const Rig& rig, const std::vector<Triangle>& triangles, const fs::path& path,
               const std::string& neutral_name = AssetLayout::kNeutral);
Rig read_rig(const fs::path& path, std::vector<Triangle>* triangles = nullptr);

void write_anatomy(const Anatomy& anatomy, const std::vector<int>& lip_region, const fs::path& path);
Anatomy read_anatomy(const fs::path& path, const TetMesh& mesh, std::vector<int>* lip_region = nullptr);

void write_camera(const Camera& camera, const fs::path& path);
Camera read_camera(const fs::path& path);

void write_shading(const ShadingModel& shading, const fs::path& path);
ShadingModel read_shading(const fs::path& path);

void write_surface_points(const std::vector<SurfacePoint>& points, const fs::path& path);
std::vector<SurfacePoint> read_surface_points(const fs::path& path);

void write_roto(const std::vector<RotoConstraint>& roto, const fs::path& path);
std::vector<RotoConstraint> read_roto(const fs::path& path);

void write_asset_spec(const AssetSpec& spec, const fs::path& path);
AssetSpec read_asset_spec(const fs::path& path);

/// Muscle basis cache, keyed by blendshape name.
void write_basis(const PrecomputedMuscleBasis& basis, const fs::path& path);
PrecomputedMuscleBasis read_basis(const fs::path& path);

void write_asset(const Asset& asset, const fs::path& dir);
Asset read_asset(const fs::path& dir);

/// The basis cache written by `facecap precompute`, checked against the asset.
PrecomputedMuscleBasis read_asset_basis(const fs::path& dir, const Asset& asset);

/// Layout files present in an asset directory, in a fixed order.
std::vector<fs::path> asset_files(const fs::path& dir);

/// 64-bit FNV-1a over the bytes of the given files, in order.
std::uint64_t fnv1a_files(const std::vector<fs::path>& files);
std::string hex64(std::uint64_t value);

}  // namespace facecap
