#include "run_config.hpp"

#include "facecap/assets.hpp"
#include "facecap/capture.hpp"
#include "facecap/io.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>

using namespace facecap;
using facecap::cli::RunConfig;
using nlohmann::json;

namespace {

constexpr double kGradcheckTolerance = 1e-3;

json to_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }
json to_json(const Vec3& v) { return std::vector<double>{v.x(), v.y(), v.z()}; }

void write_json(const json& j, const fs::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

fs::path output_dir(const RunConfig& c, const std::string& fallback) {
  const std::string dir = c.out.empty() ? fallback : c.out;
  if (dir.empty()) throw InputError(c.command + " needs --out");
  fs::create_directories(dir);
  return dir;
}

void write_manifest(const RunConfig& c, const fs::path& dir) {
  json m = {{"tool", "facecap"},
            {"version", kVersion},
            {"command", c.command},
            {"config", cli::to_json(c)},
            {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                          std::to_string(EIGEN_MINOR_VERSION)},
            {"compiler", __VERSION__}};
  if (!c.asset.empty() && fs::is_directory(c.asset)) {
    json files = json::array();
    const auto list = asset_files(c.asset);
    for (const auto& f : list) files.push_back(f.filename().string());
    m["asset_files"] = files;
    m["asset_hash"] = hex64(fnv1a_files(list));
  }
  write_json(m, dir / ("manifest-" + c.command + ".json"));
}

Asset load_asset(const RunConfig& c) {
  if (c.asset.empty()) throw InputError(c.command + " needs --asset");
  return read_asset(c.asset);
}

std::vector<double> resize_or_throw(const std::vector<double>& v, size_t n, const char* what) {
  if (v.empty()) return std::vector<double>(n, 0.0);
  if (v.size() != n)
    throw InputError(std::string(what) + " needs " + std::to_string(n) + " values, got " + std::to_string(v.size()));
  return v;
}

Vector as_vector(const std::vector<double>& v) { return Eigen::Map<const Vector>(v.data(), v.size()); }

struct Pipeline {
  Asset asset;
  std::shared_ptr<const TetMesh> mesh;
  std::shared_ptr<const PrecomputedMuscleBasis> basis;
  std::shared_ptr<const Simulator> sim;
};

Pipeline load_pipeline(const RunConfig& c) {
  Pipeline p;
  p.asset = load_asset(c);
  p.basis = std::make_shared<PrecomputedMuscleBasis>(read_asset_basis(c.asset, p.asset));
  p.mesh = std::make_shared<TetMesh>(p.asset.mesh);
  p.sim = std::make_shared<Simulator>(p.asset.mesh, p.asset.anatomy, *p.basis);
  return p;
}

std::unique_ptr<SurfaceDeformer> make_deformer(const RunConfig& c, const Pipeline& p) {
  if (c.deformer == "blendshape") return std::make_unique<BlendshapeDeformer>(p.asset.rig, p.mesh, p.basis);
  if (c.deformer == "simulation") {
    SimulationOptions options;
    options.solve = c.simulation;
    options.threads = c.threads;
    options.cold_start = c.cold_start;
    return std::make_unique<SimulationDeformer>(p.sim, options);
  }
  throw InputError("unknown deformer '" + c.deformer + "' (blendshape | simulation)");
}

json named(const std::vector<std::string>& names, const Vector& values) {
  json j = json::object();
  for (Eigen::Index i = 0; i < values.size(); ++i) j[names[i]] = values[i];
  return j;
}

std::vector<std::string> muscle_names(const Anatomy& anatomy) {
  std::vector<std::string> names;
  for (const Muscle& m : anatomy.muscles) names.push_back(m.name);
  return names;
}

json volume_json(const std::optional<VolumeDiagnostics>& v) {
  if (!v) return nullptr;
  return {{"rest_volume", v->rest_volume},
          {"volume_change", v->volume_change},
          {"lip_rest_volume", v->region_rest_volume},
          {"lip_volume_change", v->region_volume_change}};
}

json report_json(const DoglegReport& r) {
  return {{"iterations", r.iterations},
          {"accepted", r.accepted},
          {"failed_evaluations", r.failed_evaluations},
          {"cauchy_fallbacks", r.cauchy_fallbacks},
          {"initial_cost", r.initial_cost},
          {"final_cost", r.final_cost},
          {"gradient_norm", r.gradient_norm},
          {"termination", to_string(r.termination)},
          {"monotone", r.monotone()},
          {"cost_history", r.cost_history}};
}

json fit_json(const FitResult& f, const Pipeline& p) {
  std::vector<std::string> names = p.asset.rig.shapes.names;
  for (const char* jaw : {"jaw_rx", "jaw_ry", "jaw_rz", "jaw_tx", "jaw_ty", "jaw_tz"}) names.emplace_back(jaw);
  json terms = json::object();
  for (const auto& [name, norm] : f.terms) terms[name] = norm;
  json j = {{"parameters",
             {{"controls", named(names, f.controls)},
              {"rigid", {{"rotation", to_json(f.rigid.rotation)}, {"translation", to_json(f.rigid.translation)}}}}},
            {"terms", terms},
            {"report", report_json(f.report)},
            {"iterations", f.report.iterations},
            {"rmse", f.rmse},
            {"roto_rms_px", f.roto_rms},
            {"activations", f.activations.size() ? named(muscle_names(p.asset.anatomy), f.activations) : json(nullptr)},
            {"volume", volume_json(f.volume)}};
  return j;
}

// Surface vertices inside a muscle take that muscle's activation colour; the
// rest stay grey.
Points activation_colors(const Asset& asset, const Vector& activations) {
  const std::vector<int>& surface = asset.mesh.boundary();
  std::vector<int> slot(asset.mesh.num_vertices(), -1);
  for (size_t i = 0; i < surface.size(); ++i) slot[surface[i]] = static_cast<int>(i);
  Points colors = Points::Constant(3, surface.size(), 0.6);
  Vector best = Vector::Constant(surface.size(), -1.0);
  for (int m = 0; m < asset.anatomy.num_muscles(); ++m) {
    for (int v : asset.anatomy.muscles[m].vertices) {
      const int s = slot[v];
      if (s < 0 || activations[m] <= best[s]) continue;
      best[s] = activations[m];
      colors.col(s) = activation_color(activations[m]);
    }
  }
  return colors;
}

void write_fit(const FitResult& f, const Pipeline& p, const fs::path& dir, json extra = json::object()) {
  json j = fit_json(f, p);
  for (auto& [k, v] : extra.items()) j[k] = v;
  write_json(j, dir / "fit.json");
  write_obj(dir / "fit.obj", f.surface, p.asset.triangles);
  if (f.activations.size()) {
    const Points colors = activation_colors(p.asset, f.activations);
    write_obj(dir / "activations.obj", f.surface, p.asset.triangles, &colors);
  }
}

void print_fit(const std::string& label, const FitResult& f) {
  std::printf("%s: %d iterations (%s), cost %.6g -> %.6g", label.c_str(), f.report.iterations,
              to_string(f.report.termination).c_str(), f.report.initial_cost, f.report.final_cost);
  if (f.volume) std::printf(", volume change %.6g (lips %.6g)", f.volume->volume_change, f.volume->region_volume_change);
  std::printf("\n");
}

int gen_asset(const RunConfig& c) {
  AssetSpec spec;
  spec.nx = c.nx;
  spec.ny = c.ny;
  spec.nz = c.nz;
  spec.num_muscles = c.muscles;
  spec.num_shapes = c.shapes;
  spec.seed = c.seed;
  const fs::path dir = output_dir(c, "");
  const Asset asset = generate_asset(spec);
  write_asset(asset, dir);
  RunConfig record = c;
  record.asset = dir.string();
  write_manifest(record, dir);
  std::printf("asset: %d flesh vertices, %d tets, %d shapes, %d muscles -> %s\n", asset.mesh.num_vertices(),
              asset.mesh.num_tets(), asset.rig.num_shapes(), asset.anatomy.num_muscles(), dir.c_str());
  return 0;
}

int precompute(const RunConfig& c) {
  const Asset asset = load_asset(c);
  const PrecomputedMuscleBasis basis = precompute_asset_basis(asset);
  const fs::path path = fs::path(c.asset) / AssetLayout::kBasis;
  write_basis(basis, path);
  write_manifest(c, output_dir(c, c.asset));
  std::printf("basis: %d displacement fields, %d muscles -> %s\n", basis.num_shapes(), basis.num_muscles(),
              path.c_str());
  return 0;
}

int simulate(const RunConfig& c) {
  const Pipeline p = load_pipeline(c);
  const Vector b = as_vector(resize_or_throw(c.b, p.asset.rig.num_shapes(), "--b"));
  const JawParams j = as_vector(resize_or_throw(c.j, kJawDofs, "--j"));
  const EquilibriumState st = p.sim->solve(b, j, c.simulation);
  const fs::path dir = output_dir(c, "");

  Points surface(3, p.asset.mesh.boundary().size());
  for (size_t i = 0; i < p.asset.mesh.boundary().size(); ++i)
    surface.col(i) = st.positions.col(p.asset.mesh.boundary()[i]);
  write_obj(dir / "surface.obj", surface, p.asset.triangles);
  write_json({{"b", to_json(b)},
              {"j", to_json(Vector(j))},
              {"converged", st.converged},
              {"iterations", st.iterations},
              {"residual", st.residual},
              {"tolerance", st.tolerance},
              {"message", st.message},
              {"activations", named(muscle_names(p.asset.anatomy), st.activations)},
              {"volume", volume_json(volume_diagnostics(p.asset.mesh, st.positions, p.asset.lip_region))}},
             dir / "simulate.json");
  if (c.render) {
    write_png(render_plate(surface, p.asset.triangles, p.asset.lighting, p.asset.camera),
              (dir / "plate.png").string());
    write_roto(project_roto(surface, p.asset.triangles, p.asset.roto_points, p.asset.camera), dir / "roto.json");
  }
  write_manifest(c, dir);
  std::printf("simulate: %s after %d Newton iterations, |f| %.3g (tol %.3g)\n",
              st.converged ? "converged" : "FAILED", st.iterations, st.residual, st.tolerance);
  if (!st.converged) {
    std::fprintf(stderr, "equilibrium solve failed: %s\n", st.message.c_str());
    return 1;
  }
  return 0;
}

int fit_geometry_cmd(const RunConfig& c) {
  const Pipeline p = load_pipeline(c);
  if (c.target.empty()) throw InputError("fit-geometry needs --target (an OBJ of the surface)");
  Points target;
  std::vector<Triangle> tris;
  read_obj(c.target, target, tris);
  if (target.cols() != p.asset.rig.num_vertices())
    throw InputError("target has " + std::to_string(target.cols()) + " vertices, the rig has " +
                     std::to_string(p.asset.rig.num_vertices()));
  auto deformer = make_deformer(c, p);
  const FitResult f =
      fit_geometry(*deformer, p.asset.triangles, target, c.weights.geometry_regularization, c.solver, p.asset.lip_region);
  const fs::path dir = output_dir(c, "");
  write_fit(f, p, dir, {{"deformer", deformer->name()}});
  write_manifest(c, dir);
  print_fit("fit-geometry", f);
  std::printf("surface rmse %.6g\n", f.rmse);
  return 0;
}

ImagePyramid load_plate(const std::string& path) { return ImagePyramid(read_png(path)); }

int fit_lighting_cmd(const RunConfig& c) {
  const Pipeline p = load_pipeline(c);
  const std::string plate_path = c.plate.empty() ? (fs::path(c.asset) / AssetLayout::kPlate).string() : c.plate;
  const ImagePyramid plate = load_plate(plate_path);
  auto deformer = make_deformer(c, p);
  const LightingResult r = fit_lighting(*deformer, p.asset.triangles, p.asset.camera, plate, RigidParams{},
                                        c.weights.albedo_smoothness, c.solver);
  const fs::path dir = output_dir(c, "");
  write_shading(r.shading, dir / "lighting.json");
  int visible = 0;
  for (bool v : r.visible) visible += v;
  write_json({{"plate", plate_path},
              {"report", report_json(r.report)},
              {"iterations", r.report.iterations},
              {"initial_residual", r.initial_residual},
              {"final_residual", r.final_residual},
              {"visible_vertices", visible}},
             dir / "fit-lighting.json");
  write_manifest(c, dir);
  std::printf("fit-lighting: %d iterations (%s), residual %.6g -> %.6g, %d visible vertices\n",
              r.report.iterations, to_string(r.report.termination).c_str(), r.initial_residual, r.final_residual,
              visible);
  return 0;
}

int fit_image_cmd(const RunConfig& c) {
  const Pipeline p = load_pipeline(c);
  if (c.plate.empty()) throw InputError("fit-image needs --plate");
  if (c.roto.empty()) throw InputError("fit-image needs --roto (a roto constraint JSON)");
  const ImagePyramid plate = load_plate(c.plate);
  const std::vector<RotoConstraint> roto = read_roto(c.roto);
  const std::string lighting_path =
      c.lighting.empty() ? (fs::path(c.asset) / AssetLayout::kLighting).string() : c.lighting;
  const ShadingModel shading = read_shading(lighting_path);
  auto deformer = make_deformer(c, p);
  ImageFitOptions options;
  options.weights = c.weights;
  options.free_rigid = c.free_rigid;
  options.solver = c.solver;
  const ImageFitResult r = fit_image(*deformer, p.asset.triangles, p.asset.camera, plate, roto, shading,
                                     RigidParams{}, options, p.asset.lip_region);
  const fs::path dir = output_dir(c, "");
  write_fit(r.refinement, p, dir,
            {{"deformer", deformer->name()}, {"initialization", fit_json(r.initialization, p)}});
  write_manifest(c, dir);
  print_fit("stage 1 (roto)", r.initialization);
  print_fit("stage 2 (shading)", r.refinement);
  std::printf("roto rms %.4g px\n", r.refinement.roto_rms);
  return 0;
}

int gradcheck(const RunConfig& c) {
  const Pipeline p = load_pipeline(c);
  std::vector<double> bdef(p.asset.rig.num_shapes(), 0.3);
  std::vector<double> jdef = {0.05, 0.02, -0.03, 0.01, -0.02, 0.03};
  const Vector b = as_vector(c.b.empty() ? bdef : resize_or_throw(c.b, bdef.size(), "--b"));
  const JawParams j = as_vector(c.j.empty() ? jdef : resize_or_throw(c.j, kJawDofs, "--j"));
  const auto rows = gradient_check(*p.sim, b, j, p.asset.mesh.boundary(),
                                   parameter_names(*p.sim, p.asset.rig.shapes.names), c.step, c.threads);
  bool ok = true;
  json table = json::array();
  std::printf("%-12s %14s %14s %12s\n", "parameter", "|analytic|", "|fd|", "rel.err");
  for (const auto& row : rows) {
    const bool pass = row.rel_error < kGradcheckTolerance;
    ok = ok && pass;
    std::printf("%-12s %14.6e %14.6e %12.3e%s\n", row.parameter.c_str(), row.analytic_norm, row.fd_norm,
                row.rel_error, pass ? "" : "  FAIL");
    table.push_back({{"parameter", row.parameter},
                     {"analytic_norm", row.analytic_norm},
                     {"fd_norm", row.fd_norm},
                     {"rel_error", row.rel_error}});
  }
  if (!c.out.empty()) {
    const fs::path dir = output_dir(c, "");
    write_json({{"step", c.step}, {"tolerance", kGradcheckTolerance}, {"rows", table}}, dir / "gradcheck.json");
    write_manifest(c, dir);
  }
  return ok ? 0 : 1;
}

using Pending = std::vector<std::function<void(RunConfig&)>>;

template <class T, class F>
CLI::Option* flag(CLI::App* app, Pending& pending, const std::string& name, const std::string& help, F apply) {
  return app->add_option_function<T>(
      name, [&pending, apply](const T& v) { pending.push_back([apply, v](RunConfig& c) { apply(c, v); }); }, help);
}

void add_common(CLI::App* app, Pending& pending, std::string& config_path, bool needs_asset) {
  app->add_option("--config", config_path, "JSON run config; flags override its values");
  auto* asset = flag<std::string>(app, pending, "--asset", "asset directory",
                                  [](RunConfig& c, const std::string& v) { c.asset = v; });
  if (needs_asset) asset->check(CLI::ExistingDirectory);
  flag<std::string>(app, pending, "--out", "output directory", [](RunConfig& c, const std::string& v) { c.out = v; });
  flag<int>(app, pending, "--threads", "worker threads (default: FACECAP_THREADS or 1)",
            [](RunConfig& c, int v) { c.threads = v; })
      ->check(CLI::PositiveNumber);
  flag<std::uint64_t>(app, pending, "--seed", "random seed", [](RunConfig& c, std::uint64_t v) { c.seed = v; });
}

void add_simulation(CLI::App* app, Pending& pending) {
  flag<double>(app, pending, "--sim-tolerance", "equilibrium tolerance relative to the characteristic force",
               [](RunConfig& c, double v) { c.simulation.relative_tolerance = v; });
  flag<int>(app, pending, "--sim-max-iterations", "Newton iteration cap",
            [](RunConfig& c, int v) { c.simulation.max_iterations = v; });
}

void add_fit(CLI::App* app, Pending& pending) {
  flag<std::string>(app, pending, "--deformer", "blendshape | simulation",
                    [](RunConfig& c, const std::string& v) { c.deformer = v; })
      ->check(CLI::IsMember({"blendshape", "simulation"}));
  app->add_flag_callback("--cold-start", [&pending] { pending.push_back([](RunConfig& c) { c.cold_start = true; }); },
                         "solve every equilibrium from rest");
  flag<double>(app, pending, "--lambda-geometry", "control regularization in geometry fits",
               [](RunConfig& c, double v) { c.weights.geometry_regularization = v; });
  flag<double>(app, pending, "--lambda-albedo", "albedo smoothness in lighting fits",
               [](RunConfig& c, double v) { c.weights.albedo_smoothness = v; });
  flag<double>(app, pending, "--lambda-roto-init", "control regularization in the roto stage",
               [](RunConfig& c, double v) { c.weights.roto_initialization = v; });
  flag<double>(app, pending, "--lambda-roto", "roto weight in the shading stage",
               [](RunConfig& c, double v) { c.weights.roto_refinement = v; });
  flag<double>(app, pending, "--lambda-prior", "pull toward the roto-stage result in the shading stage",
               [](RunConfig& c, double v) { c.weights.prior = v; });
  flag<int>(app, pending, "--max-iterations", "optimizer iteration cap",
            [](RunConfig& c, int v) { c.solver.max_iterations = v; });
  add_simulation(app, pending);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Facial performance capture with a muscle simulation rig"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  Pending pending;
  std::string config_path;

  auto* gen = app.add_subcommand("gen-asset", "generate a procedural slab asset");
  add_common(gen, pending, config_path, false);
  flag<std::string>(gen, pending, "--resolution", "grid vertices per axis, e.g. 12,8,4",
                    [](RunConfig& c, const std::string& v) {
                      const auto r = cli::parse_list(v);
                      if (r.size() != 3) throw InputError("--resolution needs three values");
                      c.nx = static_cast<int>(r[0]);
                      c.ny = static_cast<int>(r[1]);
                      c.nz = static_cast<int>(r[2]);
                    });
  flag<int>(gen, pending, "--muscles", "number of muscles (1-3)", [](RunConfig& c, int v) { c.muscles = v; });
  flag<int>(gen, pending, "--shapes", "number of blendshapes (1-6)", [](RunConfig& c, int v) { c.shapes = v; });

  auto* pre = app.add_subcommand("precompute", "write the muscle basis cache into the asset");
  add_common(pre, pending, config_path, true);

  auto* sim = app.add_subcommand("simulate", "solve one equilibrium and write OBJ + JSON");
  add_common(sim, pending, config_path, true);
  add_simulation(sim, pending);
  flag<std::string>(sim, pending, "--b", "blendshape weights, comma separated",
                    [](RunConfig& c, const std::string& v) { c.b = cli::parse_list(v); });
  flag<std::string>(sim, pending, "--j", "jaw rx,ry,rz,tx,ty,tz",
                    [](RunConfig& c, const std::string& v) { c.j = cli::parse_list(v); });
  sim->add_flag_callback("--render", [&pending] { pending.push_back([](RunConfig& c) { c.render = true; }); },
                         "also write plate.png and roto.json for the result");

  auto* fg = app.add_subcommand("fit-geometry", "fit controls and rigid pose to a target surface");
  add_common(fg, pending, config_path, true);
  add_fit(fg, pending);
  flag<std::string>(fg, pending, "--target", "target surface OBJ",
                    [](RunConfig& c, const std::string& v) { c.target = v; });

  auto* fl = app.add_subcommand("fit-lighting", "fit SH lighting and albedo to a neutral plate");
  add_common(fl, pending, config_path, true);
  add_fit(fl, pending);
  flag<std::string>(fl, pending, "--plate", "plate PNG (default: the asset's neutral plate)",
                    [](RunConfig& c, const std::string& v) { c.plate = v; });

  auto* fi = app.add_subcommand("fit-image", "two-stage roto + shading fit to a plate");
  add_common(fi, pending, config_path, true);
  add_fit(fi, pending);
  flag<std::string>(fi, pending, "--plate", "plate PNG", [](RunConfig& c, const std::string& v) { c.plate = v; });
  flag<std::string>(fi, pending, "--roto", "roto constraints JSON",
                    [](RunConfig& c, const std::string& v) { c.roto = v; });
  flag<std::string>(fi, pending, "--lighting", "lighting JSON (default: the asset's)",
                    [](RunConfig& c, const std::string& v) { c.lighting = v; });
  fi->add_flag_callback("--free-rigid", [&pending] { pending.push_back([](RunConfig& c) { c.free_rigid = true; }); },
                        "also optimize the rigid pose");

  auto* gc = app.add_subcommand("gradcheck", "compare sensitivities with finite differences");
  add_common(gc, pending, config_path, true);
  add_simulation(gc, pending);
  flag<std::string>(gc, pending, "--b", "evaluation point blendshape weights",
                    [](RunConfig& c, const std::string& v) { c.b = cli::parse_list(v); });
  flag<std::string>(gc, pending, "--j", "evaluation point jaw parameters",
                    [](RunConfig& c, const std::string& v) { c.j = cli::parse_list(v); });
  flag<double>(gc, pending, "--step", "central difference step", [](RunConfig& c, double v) { c.step = v; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  const std::map<CLI::App*, std::function<int(const RunConfig&)>> commands = {
      {gen, gen_asset}, {pre, precompute}, {sim, simulate},       {fg, fit_geometry_cmd},
      {fl, fit_lighting_cmd}, {fi, fit_image_cmd}, {gc, gradcheck}};

  try {
    CLI::App* sub = app.get_subcommands().front();
    RunConfig config;
    config.command = sub->get_name();
    config.threads = cli::default_threads();
    if (!config_path.empty()) cli::apply_config_file(config, config_path);
    for (auto& apply : pending) apply(config);
    if (config.threads < 1) throw InputError("threads must be positive");
    config.solver.validate();
    return commands.at(sub)(config);
  } catch (const InputError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const SolverError& e) {
    std::fprintf(stderr, "solver failure: %s\n", e.what());
    return 1;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
