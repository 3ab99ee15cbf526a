#include "run_config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>

namespace facecap::cli {

using nlohmann::json;

namespace {

template <class T>
T get(const json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const json::exception&) {
    throw InputError("config key '" + key + "' has the wrong type");
  }
}

using Setters = std::map<std::string, std::function<void(const json&, const std::string&)>>;

void apply(const json& j, const Setters& setters, const std::string& scope) {
  if (!j.is_object()) throw InputError("config section '" + scope + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    const std::string path = scope.empty() ? key : scope + "." + key;
    auto it = setters.find(key);
    if (it == setters.end()) throw InputError("unknown config key '" + path + "'");
    it->second(value, path);
  }
}

template <class T>
auto set(T& field) {
  return [&field](const json& v, const std::string& key) { field = get<T>(v, key); };
}

}  // namespace

void apply_config(RunConfig& c, const json& j) {
  const Setters lambda = {
      {"geometry", set(c.weights.geometry_regularization)},
      {"albedo", set(c.weights.albedo_smoothness)},
      {"roto_init", set(c.weights.roto_initialization)},
      {"roto", set(c.weights.roto_refinement)},
      {"prior", set(c.weights.prior)},
  };
  const Setters solver = {
      {"initial_radius", set(c.solver.initial_radius)},
      {"min_radius", set(c.solver.min_radius)},
      {"gradient_tolerance", set(c.solver.gradient_tolerance)},
      {"step_tolerance", set(c.solver.step_tolerance)},
      {"max_iterations", set(c.solver.max_iterations)},
  };
  const Setters simulation = {
      {"relative_tolerance", set(c.simulation.relative_tolerance)},
      {"max_iterations", set(c.simulation.max_iterations)},
      {"project_definiteness", set(c.simulation.project_definiteness)},
  };
  const Setters top = {
      {"command", set(c.command)},
      {"asset", set(c.asset)},
      {"out", set(c.out)},
      {"deformer", set(c.deformer)},
      {"seed", set(c.seed)},
      {"threads", set(c.threads)},
      {"cold_start", set(c.cold_start)},
      {"nx", set(c.nx)},
      {"ny", set(c.ny)},
      {"nz", set(c.nz)},
      {"muscles", set(c.muscles)},
      {"shapes", set(c.shapes)},
      {"b", set(c.b)},
      {"j", set(c.j)},
      {"render", set(c.render)},
      {"step", set(c.step)},
      {"target", set(c.target)},
      {"plate", set(c.plate)},
      {"roto", set(c.roto)},
      {"lighting", set(c.lighting)},
      {"free_rigid", set(c.free_rigid)},
      {"lambda", [&](const json& v, const std::string& key) { apply(v, lambda, key); }},
      {"solver", [&](const json& v, const std::string& key) { apply(v, solver, key); }},
      {"simulation", [&](const json& v, const std::string& key) { apply(v, simulation, key); }},
  };
  apply(j, top, "");
}

void apply_config_file(RunConfig& config, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw InputError("config " + path + ": " + e.what());
  }
  apply_config(config, j);
}

json to_json(const RunConfig& c) {
  return {
      {"command", c.command},
      {"asset", c.asset},
      {"out", c.out},
      {"deformer", c.deformer},
      {"seed", c.seed},
      {"threads", c.threads},
      {"cold_start", c.cold_start},
      {"nx", c.nx},
      {"ny", c.ny},
      {"nz", c.nz},
      {"muscles", c.muscles},
      {"shapes", c.shapes},
      {"b", c.b},
      {"j", c.j},
      {"render", c.render},
      {"step", c.step},
      {"target", c.target},
      {"plate", c.plate},
      {"roto", c.roto},
      {"lighting", c.lighting},
      {"free_rigid", c.free_rigid},
      {"lambda",
       {{"geometry", c.weights.geometry_regularization},
        {"albedo", c.weights.albedo_smoothness},
        {"roto_init", c.weights.roto_initialization},
        {"roto", c.weights.roto_refinement},
        {"prior", c.weights.prior}}},
      {"solver",
       {{"initial_radius", c.solver.initial_radius},
        {"min_radius", c.solver.min_radius},
        {"gradient_tolerance", c.solver.gradient_tolerance},
        {"step_tolerance", c.solver.step_tolerance},
        {"max_iterations", c.solver.max_iterations}}},
      {"simulation",
       {{"relative_tolerance", c.simulation.relative_tolerance},
        {"max_iterations", c.simulation.max_iterations},
        {"project_definiteness", c.simulation.project_definiteness}}},
  };
}

int default_threads() {
  const char* env = std::getenv("FACECAP_THREADS");
  if (!env) return 1;
  int n = 0;
  const char* end = env + std::char_traits<char>::length(env);
  auto [ptr, ec] = std::from_chars(env, end, n);
  if (ec != std::errc() || ptr != end || n < 1) return 1;
  return n;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  if (text.empty()) return out;
  size_t start = 0;
  while (true) {
    const size_t comma = text.find(',', start);
    const std::string item = text.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    char* end = nullptr;
    const double v = std::strtod(item.c_str(), &end);
    if (item.empty() || end != item.c_str() + item.size()) throw InputError("bad number '" + item + "' in list");
    out.push_back(v);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace facecap::cli
