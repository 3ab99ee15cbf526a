#pragma once

#include "facecap/capture.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace facecap::cli {

/// Everything a run depends on. Precedence: defaults < config file < flags.
struct RunConfig {
  std::string command;
  std::string asset;
  std::string out;
  std::string deformer = "simulation";
  std::uint64_t seed = 1;
  int threads = 1;
  bool cold_start = false;

  CaptureWeights weights;
  DoglegSettings solver;
  SolveSettings simulation;

  // gen-asset
  int nx = 12, ny = 8, nz = 4;
  int muscles = 3;
  int shapes = 6;

  // simulate / gradcheck evaluation point; empty means zeros (simulate) or
  // the default check point (gradcheck)
  std::vector<double> b;
  std::vector<double> j;
  bool render = false;
  double step = 1e-5;

  // fits
  std::string target;
  std::string plate;
  std::string roto;
  std::string lighting;
  bool free_rigid = false;
};

/// Overwrites the fields present in `j`. Unknown keys and wrongly typed
/// values throw InputError.
void apply_config(RunConfig& config, const nlohmann::json& j);
void apply_config_file(RunConfig& config, const std::string& path);

nlohmann::json to_json(const RunConfig& config);

/// FACECAP_THREADS if set to a positive integer, otherwise 1.
int default_threads();

/// "0.1,0,-2" -> {0.1, 0, -2}
std::vector<double> parse_list(const std::string& text);

}  // namespace facecap::cli
