#include "facecap/io.hpp"

#include <json.hpp>

#include <charconv>
#include <fstream>
#include <sstream>

namespace facecap {

namespace {

using json = nlohmann::json;

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw InputError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << j.dump(1) << '\n';
  if (!out) throw InputError("failed writing " + path.string());
}

// Runs a reader and reports schema errors against the file.
template <typename F>
auto parse_file(const fs::path& path, F&& f) {
  const json j = read_json(path);
  try {
    return f(j);
  } catch (const json::exception& e) {
    throw InputError("invalid " + path.filename().string() + ": " + e.what());
  }
}

json flat(const Points& p) { return std::vector<double>(p.data(), p.data() + p.size()); }
json flat(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }
json flat(const Vec3& v) { return std::vector<double>{v.x(), v.y(), v.z()}; }

Points points_from(const json& j) {
  const auto values = j.get<std::vector<double>>();
  if (values.size() % 3 != 0) throw InputError("flat point array length is not a multiple of 3");
  return Eigen::Map<const Points>(values.data(), 3, static_cast<Eigen::Index>(values.size() / 3));
}

Vector vector_from(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

Vec3 vec3_from(const json& j) {
  const auto values = j.get<std::vector<double>>();
  if (values.size() != 3) throw InputError("expected a 3-vector");
  return Vec3(values[0], values[1], values[2]);
}

template <size_t N>
json index_arrays(const std::vector<std::array<int, N>>& items) {
  std::vector<int> out;
  out.reserve(items.size() * N);
  for (const auto& a : items) out.insert(out.end(), a.begin(), a.end());
  return out;
}

template <size_t N>
std::vector<std::array<int, N>> index_arrays_from(const json& j) {
  const auto values = j.get<std::vector<int>>();
  if (values.size() % N != 0) throw InputError("flat index array has the wrong length");
  std::vector<std::array<int, N>> out(values.size() / N);
  for (size_t i = 0; i < out.size(); ++i)
    for (size_t k = 0; k < N; ++k) out[i][k] = values[N * i + k];
  return out;
}

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

json proxy_json(const CollisionProxy& p) {
  json j;
  if (const auto* s = std::get_if<SphereProxy>(&p.shape)) {
    j = {{"type", "sphere"}, {"center", flat(s->center)}, {"radius", s->radius}};
  } else {
    const auto& h = std::get<HalfSpaceProxy>(p.shape);
    j = {{"type", "half_space"}, {"normal", flat(h.normal)}, {"offset", h.offset}};
  }
  j["stiffness"] = p.stiffness;
  return j;
}

CollisionProxy proxy_from(const json& j) {
  CollisionProxy p;
  const std::string type = j.at("type").get<std::string>();
  if (type == "sphere") {
    p.shape = SphereProxy{vec3_from(j.at("center")), j.at("radius").get<double>()};
  } else if (type == "half_space") {
    p.shape = HalfSpaceProxy{vec3_from(j.at("normal")).normalized(), j.at("offset").get<double>()};
  } else {
    throw InputError("unknown collision proxy type " + type);
  }
  p.stiffness = j.at("stiffness").get<double>();
  return p;
}

}  // namespace

void write_tet_mesh(const TetMesh& mesh, const fs::path& path) {
  json j;
  j["vertices"] = flat(mesh.rest());
  j["tets"] = index_arrays(mesh.tets());
  j["boundary"] = {{"vertices", mesh.boundary()}, {"triangles", index_arrays(mesh.boundary_triangles())}};
  j["inner_boundary"] = mesh.inner_boundary();
  write_json(j, path);
}

TetMesh read_tet_mesh(const fs::path& path) {
  return parse_file(path, [](const json& j) {
    return TetMesh(points_from(j.at("vertices")), index_arrays_from<4>(j.at("tets")),
                   j.at("boundary").at("vertices").get<std::vector<int>>(),
                   index_arrays_from<3>(j.at("boundary").at("triangles")),
                   j.at("inner_boundary").get<std::vector<int>>());
  });
}

void write_obj(const fs::path& path, const Points& vertices, const std::vector<Triangle>& triangles,
               const Points* colors) {
  if (colors && colors->cols() != vertices.cols()) throw InputError("one color per vertex required");
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  for (Eigen::Index i = 0; i < vertices.cols(); ++i) {
    out << "v " << format_double(vertices(0, i)) << ' ' << format_double(vertices(1, i)) << ' '
        << format_double(vertices(2, i));
    if (colors)
      out << ' ' << format_double((*colors)(0, i)) << ' ' << format_double((*colors)(1, i)) << ' '
          << format_double((*colors)(2, i));
    out << '\n';
  }
  for (const Triangle& t : triangles) out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  if (!out) throw InputError("failed writing " + path.string());
}

void read_obj(const fs::path& path, Points& vertices, std::vector<Triangle>& triangles) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::vector<double> coords;
  triangles.clear();
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream s(line);
    std::string tag;
    s >> tag;
    if (tag == "v") {
      double x, y, z;
      if (!(s >> x >> y >> z)) throw InputError(path.string() + ":" + std::to_string(line_no) + ": bad vertex");
      coords.insert(coords.end(), {x, y, z});
    } else if (tag == "f") {
      std::vector<int> face;
      std::string item;
      while (s >> item) face.push_back(std::stoi(item.substr(0, item.find('/'))) - 1);
      if (face.size() != 3) throw InputError(path.string() + ":" + std::to_string(line_no) + ": only triangles are supported");
      triangles.push_back({face[0], face[1], face[2]});
    }
  }
  vertices = Eigen::Map<const Points>(coords.data(), 3, static_cast<Eigen::Index>(coords.size() / 3));
  for (const Triangle& t : triangles)
    for (int v : t)
      if (v < 0 || v >= vertices.cols()) throw InputError(path.string() + ": face index out of range");
}

void write_rig(const Rig& rig, const std::vector<Triangle>& triangles, const fs::path& path,
               const std::string& neutral_name) {
  rig.validate();
  write_obj(path.parent_path() / neutral_name, rig.shapes.neutral, triangles);
  json shapes = json::array();
  for (int k = 0; k < rig.num_shapes(); ++k)
    shapes.push_back({{"name", rig.shapes.names[k]}, {"deltas", flat(rig.shapes.delta(k))}});
  json j = {{"neutral", neutral_name},
            {"shapes", shapes},
            {"pivot", flat(rig.jaw.pivot)},
            {"skin_weights", flat(rig.skin_weights)}};
  write_json(j, path);
}

Rig read_rig(const fs::path& path, std::vector<Triangle>* triangles) {
  return parse_file(path, [&](const json& j) {
    Rig rig;
    std::vector<Triangle> tris;
    read_obj(path.parent_path() / j.at("neutral").get<std::string>(), rig.shapes.neutral, tris);
    const auto& shapes = j.at("shapes");
    rig.shapes.deltas.resize(3 * rig.shapes.neutral.cols(), static_cast<Eigen::Index>(shapes.size()));
    for (size_t k = 0; k < shapes.size(); ++k) {
      const Points d = points_from(shapes[k].at("deltas"));
      if (d.cols() != rig.shapes.neutral.cols()) throw InputError("blendshape size does not match the neutral");
      rig.shapes.deltas.col(static_cast<Eigen::Index>(k)) = flatten(d);
      rig.shapes.names.push_back(shapes[k].at("name").get<std::string>());
    }
    rig.jaw.pivot = vec3_from(j.at("pivot"));
    rig.skin_weights = vector_from(j.at("skin_weights"));
    rig.validate();
    if (triangles) *triangles = std::move(tris);
    return rig;
  });
}

void write_anatomy(const Anatomy& anatomy, const std::vector<int>& lip_region, const fs::path& path) {
  const MaterialParams& m = anatomy.material;
  json j;
  j["material"] = {{"mu10", m.mu10},         {"mu01", m.mu01},
                   {"kappa", m.kappa},       {"k_passive", m.k_passive},
                   {"sigma_max", m.sigma_max}, {"clamp_sv", m.clamp_sv},
                   {"synthetic", true}};
  j["constrained"] = anatomy.constrained;
  j["lip_region"] = lip_region;
  json muscles = json::array();
  for (const Muscle& mu : anatomy.muscles) {
    std::vector<double> fibers;
    for (const Vec3& f : mu.fibers) fibers.insert(fibers.end(), {f.x(), f.y(), f.z()});
    muscles.push_back({{"name", mu.name},
                       {"tets", mu.tets},
                       {"fibers", fibers},
                       {"curve", flat(mu.curve_rest)},
                       {"stiffness", mu.stiffness},
                       {"shortening", mu.activation.shortening},
                       {"smoothing", mu.activation.smoothing}});
  }
  j["muscles"] = muscles;
  json proxies = json::array();
  for (const CollisionProxy& p : anatomy.proxies) proxies.push_back(proxy_json(p));
  j["proxies"] = proxies;
  write_json(j, path);
}

Anatomy read_anatomy(const fs::path& path, const TetMesh& mesh, std::vector<int>* lip_region) {
  return parse_file(path, [&](const json& j) {
    Anatomy a;
    const json& m = j.at("material");
    a.material.mu10 = m.at("mu10").get<double>();
    a.material.mu01 = m.at("mu01").get<double>();
    a.material.kappa = m.at("kappa").get<double>();
    a.material.k_passive = m.at("k_passive").get<double>();
    a.material.sigma_max = m.at("sigma_max").get<double>();
    a.material.clamp_sv = m.value("clamp_sv", a.material.clamp_sv);
    a.material.validate();
    a.constrained = j.at("constrained").get<std::vector<int>>();
    for (const json& mu : j.at("muscles")) {
      const Points fibers = points_from(mu.at("fibers"));
      std::vector<Vec3> dirs;
      for (Eigen::Index i = 0; i < fibers.cols(); ++i) dirs.push_back(fibers.col(i));
      const Points curve = points_from(mu.at("curve"));
      Muscle muscle = make_muscle(mu.at("name").get<std::string>(), mesh, mu.at("tets").get<std::vector<int>>(),
                                  dirs, curve, mu.at("stiffness").get<double>(),
                                  mu.at("shortening").get<double>(), 0.0, a.constrained);
      muscle.activation.smoothing = mu.at("smoothing").get<double>();
      muscle.validate(mesh);
      a.muscles.push_back(std::move(muscle));
    }
    for (const json& p : j.at("proxies")) a.proxies.push_back(proxy_from(p));
    if (lip_region) *lip_region = j.value("lip_region", std::vector<int>{});
    return a;
  });
}

void write_camera(const Camera& c, const fs::path& path) {
  std::vector<double> rotation;
  for (int r = 0; r < 3; ++r)
    for (int k = 0; k < 3; ++k) rotation.push_back(c.rotation(r, k));
  write_json({{"fx", c.fx},
              {"fy", c.fy},
              {"cx", c.cx},
              {"cy", c.cy},
              {"rotation", rotation},
              {"translation", flat(c.translation)},
              {"width", c.width},
              {"height", c.height}},
             path);
}

Camera read_camera(const fs::path& path) {
  return parse_file(path, [](const json& j) {
    Camera c;
    c.fx = j.at("fx").get<double>();
    c.fy = j.at("fy").get<double>();
    c.cx = j.at("cx").get<double>();
    c.cy = j.at("cy").get<double>();
    const auto r = j.at("rotation").get<std::vector<double>>();
    if (r.size() != 9) throw InputError("camera rotation needs 9 entries (row-major)");
    for (int i = 0; i < 3; ++i)
      for (int k = 0; k < 3; ++k) c.rotation(i, k) = r[3 * i + k];
    c.translation = vec3_from(j.at("translation"));
    c.width = j.at("width").get<int>();
    c.height = j.at("height").get<int>();
    c.validate();
    return c;
  });
}

void write_shading(const ShadingModel& s, const fs::path& path) {
  write_json({{"gamma", std::vector<double>(s.gamma.data(), s.gamma.data() + 9)}, {"albedo", flat(s.albedo)}},
             path);
}

ShadingModel read_shading(const fs::path& path) {
  return parse_file(path, [](const json& j) {
    ShadingModel s;
    const Vector g = vector_from(j.at("gamma"));
    if (g.size() != 9) throw InputError("lighting needs 9 coefficients");
    s.gamma = g;
    s.albedo = points_from(j.at("albedo"));
    return s;
  });
}

void write_surface_points(const std::vector<SurfacePoint>& points, const fs::path& path) {
  json j = json::array();
  for (const SurfacePoint& p : points) j.push_back({{"triangle", p.triangle}, {"barycentric", flat(p.barycentric)}});
  write_json(j, path);
}

std::vector<SurfacePoint> read_surface_points(const fs::path& path) {
  return parse_file(path, [](const json& j) {
    std::vector<SurfacePoint> out;
    for (const json& p : j) out.push_back({p.at("triangle").get<int>(), vec3_from(p.at("barycentric"))});
    return out;
  });
}

void write_roto(const std::vector<RotoConstraint>& roto, const fs::path& path) {
  json j = json::array();
  for (const RotoConstraint& c : roto)
    j.push_back({{"triangle", c.triangle},
                 {"barycentric", flat(c.barycentric)},
                 {"u", c.target.x()},
                 {"v", c.target.y()}});
  write_json(j, path);
}

std::vector<RotoConstraint> read_roto(const fs::path& path) {
  return parse_file(path, [](const json& j) {
    std::vector<RotoConstraint> out;
    for (const json& p : j) {
      RotoConstraint c;
      c.triangle = p.at("triangle").get<int>();
      c.barycentric = vec3_from(p.at("barycentric"));
      c.target = Vec2(p.at("u").get<double>(), p.at("v").get<double>());
      out.push_back(c);
    }
    return out;
  });
}

void write_asset_spec(const AssetSpec& s, const fs::path& path) {
  write_json({{"resolution", {s.nx, s.ny, s.nz}},
              {"spacing", s.spacing},
              {"muscles", s.num_muscles},
              {"blendshapes", s.num_shapes},
              {"jaw_pivot", flat(s.jaw_pivot)},
              {"seed", s.seed},
              {"image_size", {s.image_width, s.image_height}}},
             path);
}

AssetSpec read_asset_spec(const fs::path& path) {
  return parse_file(path, [](const json& j) {
    AssetSpec s;
    const auto res = j.at("resolution").get<std::vector<int>>();
    if (res.size() != 3) throw InputError("resolution needs three entries");
    s.nx = res[0];
    s.ny = res[1];
    s.nz = res[2];
    s.spacing = j.at("spacing").get<double>();
    s.num_muscles = j.at("muscles").get<int>();
    s.num_shapes = j.at("blendshapes").get<int>();
    s.jaw_pivot = vec3_from(j.at("jaw_pivot"));
    s.seed = j.at("seed").get<std::uint64_t>();
    const auto size = j.at("image_size").get<std::vector<int>>();
    if (size.size() != 2) throw InputError("image_size needs two entries");
    s.image_width = size[0];
    s.image_height = size[1];
    s.validate();
    return s;
  });
}

void write_basis(const PrecomputedMuscleBasis& basis, const fs::path& path) {
  json muscles = json::array();
  for (const MuscleBasis& m : basis.muscles)
    muscles.push_back({{"rest", flat(m.rest)},
                       {"skin_weights", flat(m.skin_weights)},
                       {"curve_rest", flat(m.curve_rest)},
                       {"curve_skin_weights", flat(m.curve_skin_weights)}});
  json shapes = json::object();
  for (int k = 0; k < basis.num_shapes(); ++k) {
    json per_muscle = json::array();
    for (const MuscleBasis& m : basis.muscles)
      per_muscle.push_back({{"targets", flat(m.shapes[k])}, {"curve", flat(m.curve_shapes[k])}});
    shapes[basis.shape_names[k]] = {{"volume_field", flat(basis.volume_fields[k])}, {"muscles", per_muscle}};
  }
  write_json({{"shape_order", basis.shape_names},
              {"jaw_pivot", flat(basis.jaw.pivot)},
              {"volume_skin_weights", flat(basis.volume_skin_weights)},
              {"muscles", muscles},
              {"shapes", shapes}},
             path);
}

PrecomputedMuscleBasis read_basis(const fs::path& path) {
  return parse_file(path, [](const json& j) {
    PrecomputedMuscleBasis b;
    b.shape_names = j.at("shape_order").get<std::vector<std::string>>();
    b.jaw.pivot = vec3_from(j.at("jaw_pivot"));
    b.volume_skin_weights = vector_from(j.at("volume_skin_weights"));
    for (const json& m : j.at("muscles")) {
      MuscleBasis mb;
      mb.rest = points_from(m.at("rest"));
      mb.skin_weights = vector_from(m.at("skin_weights"));
      mb.curve_rest = points_from(m.at("curve_rest"));
      mb.curve_skin_weights = vector_from(m.at("curve_skin_weights"));
      b.muscles.push_back(std::move(mb));
    }
    for (const std::string& name : b.shape_names) {
      const json& s = j.at("shapes").at(name);
      b.volume_fields.push_back(points_from(s.at("volume_field")));
      const json& per_muscle = s.at("muscles");
      if (per_muscle.size() != b.muscles.size()) throw InputError("basis shape " + name + " has the wrong muscle count");
      for (size_t m = 0; m < b.muscles.size(); ++m) {
        b.muscles[m].shapes.push_back(points_from(per_muscle[m].at("targets")));
        b.muscles[m].curve_shapes.push_back(points_from(per_muscle[m].at("curve")));
      }
    }
    return b;
  });
}

void write_asset(const Asset& asset, const fs::path& dir) {
  fs::create_directories(dir);
  write_asset_spec(asset.spec, dir / AssetLayout::kSpec);
  write_tet_mesh(asset.mesh, dir / AssetLayout::kFlesh);
  write_rig(asset.rig, asset.triangles, dir / AssetLayout::kRig);
  write_anatomy(asset.anatomy, asset.lip_region, dir / AssetLayout::kAnatomy);
  write_camera(asset.camera, dir / AssetLayout::kCamera);
  write_shading(asset.lighting, dir / AssetLayout::kLighting);
  write_surface_points(asset.roto_points, dir / AssetLayout::kRoto);
  write_png(render_plate(asset.neutral(), asset.triangles, asset.lighting, asset.camera),
            (dir / AssetLayout::kPlate).string());
}

Asset read_asset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw InputError("asset directory " + dir.string() + " does not exist");
  Asset asset;
  asset.spec = read_asset_spec(dir / AssetLayout::kSpec);
  asset.mesh = read_tet_mesh(dir / AssetLayout::kFlesh);
  asset.rig = read_rig(dir / AssetLayout::kRig, &asset.triangles);
  asset.anatomy = read_anatomy(dir / AssetLayout::kAnatomy, asset.mesh, &asset.lip_region);
  asset.camera = read_camera(dir / AssetLayout::kCamera);
  asset.lighting = read_shading(dir / AssetLayout::kLighting);
  asset.roto_points = read_surface_points(dir / AssetLayout::kRoto);
  validate_asset(asset);
  return asset;
}

PrecomputedMuscleBasis read_asset_basis(const fs::path& dir, const Asset& asset) {
  const fs::path path = dir / AssetLayout::kBasis;
  if (!fs::exists(path))
    throw InputError("muscle basis cache " + path.string() + " not found; run `facecap precompute --asset " +
                     dir.string() + "` first");
  PrecomputedMuscleBasis basis = read_basis(path);
  if (basis.shape_names != asset.rig.shapes.names)
    throw InputError("basis cache shapes do not match the rig; rerun `facecap precompute`");
  if (basis.num_muscles() != asset.anatomy.num_muscles() ||
      basis.volume_skin_weights.size() != asset.mesh.num_vertices())
    throw InputError("basis cache does not match the anatomy; rerun `facecap precompute`");
  for (int m = 0; m < basis.num_muscles(); ++m)
    if (basis.muscles[m].rest.cols() != static_cast<Eigen::Index>(asset.anatomy.muscles[m].vertices.size()))
      throw InputError("basis cache does not match muscle " + asset.anatomy.muscles[m].name +
                       "; rerun `facecap precompute`");
  return basis;
}

std::vector<fs::path> asset_files(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const char* name : {AssetLayout::kSpec, AssetLayout::kFlesh, AssetLayout::kNeutral, AssetLayout::kRig,
                           AssetLayout::kAnatomy, AssetLayout::kCamera, AssetLayout::kLighting,
                           AssetLayout::kRoto, AssetLayout::kPlate, AssetLayout::kBasis})
    if (fs::exists(dir / name)) files.push_back(dir / name);
  return files;
}

std::uint64_t fnv1a_files(const std::vector<fs::path>& files) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const fs::path& f : files) {
    std::ifstream in(f, std::ios::binary);
    if (!in) throw InputError("cannot open " + f.string());
    char buf[4096];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
      for (std::streamsize i = 0; i < in.gcount(); ++i) {
        h ^= static_cast<unsigned char>(buf[i]);
        h *= 0x100000001b3ULL;
      }
    }
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

}  // namespace facecap
