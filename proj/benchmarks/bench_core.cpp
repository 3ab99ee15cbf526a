#include "facecap/assets.hpp"
#include "facecap/capture.hpp"
#include "facecap/quasistatic.hpp"
#include "facecap/sensitivity.hpp"

#include <benchmark/benchmark.h>

#include <memory>

using namespace facecap;

namespace {

struct Fixture {
  Asset asset = generate_asset(AssetSpec{});
  PrecomputedMuscleBasis basis = precompute_asset_basis(asset);
  std::shared_ptr<const Simulator> sim = std::make_shared<Simulator>(asset.mesh, asset.anatomy, basis);
  Vector b = Vector::Constant(asset.rig.num_shapes(), 0.3);
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

void BM_Precompute(benchmark::State& state) {
  const Fixture& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(precompute_asset_basis(f.asset));
}
BENCHMARK(BM_Precompute)->Unit(benchmark::kMillisecond);

void BM_ForceJacobian(benchmark::State& state) {
  const Fixture& f = fixture();
  const Vector a = Vector::Constant(f.asset.anatomy.num_muscles(), 0.5);
  for (auto _ : state) benchmark::DoNotOptimize(f.sim->elastic().jacobian(f.asset.mesh.rest(), a, true));
}
BENCHMARK(BM_ForceJacobian)->Unit(benchmark::kMillisecond);

void BM_NewtonSolve(benchmark::State& state) {
  const Fixture& f = fixture();
  for (auto _ : state) benchmark::DoNotOptimize(f.sim->solve(f.b, JawParams::Zero(), SolveSettings{}));
}
BENCHMARK(BM_NewtonSolve)->Unit(benchmark::kMillisecond);

void BM_Sensitivities(benchmark::State& state) {
  const Fixture& f = fixture();
  const EquilibriumState st = f.sim->solve(f.b, JawParams::Zero(), SolveSettings{});
  SensitivitySettings s;
  s.threads = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(solve_sensitivities(*f.sim, st, s));
}
BENCHMARK(BM_Sensitivities)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_ShadingResidual(benchmark::State& state) {
  const Fixture& f = fixture();
  const ImagePyramid plate(render_plate(f.asset.neutral(), f.asset.triangles, f.asset.lighting, f.asset.camera));
  const auto visible = compute_visibility(f.asset.neutral(), f.asset.triangles, f.asset.camera);
  for (auto _ : state)
    benchmark::DoNotOptimize(vertex_shading_residual(f.asset.neutral(), f.asset.triangles, f.asset.lighting,
                                                     f.asset.camera, plate, visible));
}
BENCHMARK(BM_ShadingResidual)->Unit(benchmark::kMillisecond);

void BM_BlendshapeGeometryFit(benchmark::State& state) {
  const Fixture& f = fixture();
  BlendshapeDeformer def(f.asset.rig);
  Vector w = Vector::Zero(def.num_controls());
  w[0] = 0.7;
  const Points target = def.evaluate(w, nullptr);
  for (auto _ : state) benchmark::DoNotOptimize(fit_geometry(def, f.asset.triangles, target, 1e-6));
}
BENCHMARK(BM_BlendshapeGeometryFit)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
