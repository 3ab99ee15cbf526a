#pragma once

#include "facecap/dogleg.hpp"
#include "facecap/imaging.hpp"
#include "facecap/sensitivity.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace facecap {

/// Surface x(w) before the global rigid transform, one point per surface
/// vertex, and optionally its Jacobian (3V x |w|).
class SurfaceDeformer {
 public:
  virtual ~SurfaceDeformer() = default;
  virtual std::string name() const = 0;
  virtual int num_controls() const = 0;
  virtual Points evaluate(const Vector& w, Matrix* jacobian) = 0;
  /// Marks the last evaluation at w as the accepted iterate.
  virtual void accept(const Vector& /*w*/) {}
  /// Deformed flesh vertices at w, when the deformer can provide them.
  virtual std::optional<Points> volume_positions(const Vector& w) = 0;
  /// Flesh mesh matching volume_positions(), if any.
  virtual const TetMesh* volume_mesh() const { return nullptr; }
  /// Per-muscle activations at w; empty for deformers without muscles.
  virtual Vector activations(const Vector& /*w*/) { return {}; }
};

/// x(w) = T(j) (n + B b) straight from the rig. With a precomputed basis it
/// also reports the embedded flesh volume (morph followed by skinning, with
/// the bone side held on the skull).
class BlendshapeDeformer final : public SurfaceDeformer {
 public:
  explicit BlendshapeDeformer(Rig rig, std::shared_ptr<const TetMesh> mesh = nullptr,
                              std::shared_ptr<const PrecomputedMuscleBasis> basis = nullptr);

  std::string name() const override { return "blendshape"; }
  int num_controls() const override { return rig_.num_shapes() + kJawDofs; }
  Points evaluate(const Vector& w, Matrix* jacobian) override;
  std::optional<Points> volume_positions(const Vector& w) override;
  const TetMesh* volume_mesh() const override { return basis_ ? mesh_.get() : nullptr; }

 private:
  Rig rig_;
  std::shared_ptr<const TetMesh> mesh_;
  std::shared_ptr<const PrecomputedMuscleBasis> basis_;
};

struct SimulationOptions {
  SolveSettings solve;
  int threads = 1;
  /// Solve every evaluation from the rest state instead of the last
  /// accepted equilibrium.
  bool cold_start = false;
};

/// Surface = outer boundary vertices of the equilibrium; Jacobian from the
/// sensitivity solves.
class SimulationDeformer final : public SurfaceDeformer {
 public:
  SimulationDeformer(std::shared_ptr<const Simulator> sim, SimulationOptions options = {});

  std::string name() const override { return "simulation"; }
  int num_controls() const override { return sim_->num_parameters(); }
  Points evaluate(const Vector& w, Matrix* jacobian) override;
  void accept(const Vector& w) override;
  std::optional<Points> volume_positions(const Vector& w) override;
  const TetMesh* volume_mesh() const override { return &sim_->mesh(); }
  Vector activations(const Vector& w) override;

  const Simulator& simulator() const { return *sim_; }
  /// Throws SolverError naming w on non-convergence.
  const EquilibriumState& equilibrium(const Vector& w);

 private:
  std::shared_ptr<const Simulator> sim_;
  SimulationOptions options_;
  std::optional<EquilibriumState> last_;
  Vector last_w_;
  std::optional<Points> warm_;
};

/// Term weights; the squared residual of each block is scaled by its weight.
struct CaptureWeights {
  double geometry_regularization = 1e-6;
  double albedo_smoothness = 2500.0;
  double roto_initialization = 3600.0;  // on |w|^2 in the roto-only stage
  double roto_refinement = 1e-4;        // on the roto term in the shading stage
  double prior = 1.0;                   // on |w - w_hat|^2 in the shading stage
};

/// Residual blocks of one capture energy over a subset of
/// (w, theta, t, gamma, c). Every block is sqrt(weight) scaled.
class CaptureProblem final : public LeastSquaresProblem {
 public:
  struct Terms {
    std::optional<Points> geometry_target;
    double geometry_weight = 1.0;
    std::vector<RotoConstraint> roto;
    double roto_weight = 1.0;
    const ImagePyramid* plate = nullptr;
    ShadingOptions shading;
    double shading_weight = 1.0;
    double control_weight = 0.0;  // on |w - anchor|^2
    Vector anchor;
    double smoothness_weight = 0.0;  // on S(c), only with free lighting
  };
  struct FreeSet {
    bool controls = true;
    bool rigid = true;
    bool lighting = false;
  };

  CaptureProblem(SurfaceDeformer& deformer, std::vector<Triangle> triangles, Camera camera,
                 Terms terms, FreeSet free, Vector controls, RigidParams rigid, ShadingModel shading);

  int num_parameters() const override;
  void evaluate(const Vector& x, Vector& r, Matrix* jacobian) override;
  Vector project(const Vector& x) const override;
  void accept(const Vector& x) override;

  /// Packs / unpacks the free parameters; fixed ones keep their initial values.
  Vector pack() const;
  void unpack(const Vector& x, Vector& controls, RigidParams& rigid, ShadingModel& shading) const;

  /// Vertices entering the shading term: visible and off the open border,
  /// where the coarser pyramid levels blend in background.
  const std::vector<bool>& visibility() const { return visible_; }
  /// Named norms of every residual block at x.
  std::vector<std::pair<std::string, double>> term_norms(const Vector& x);

 private:
  struct Blocks;
  Blocks build(const Vector& x, bool with_jacobian);
  void refresh_visibility(const Vector& x);

  SurfaceDeformer& deformer_;
  std::vector<Triangle> triangles_;
  std::vector<std::pair<int, int>> edges_;
  Camera camera_;
  Terms terms_;
  FreeSet free_;
  Vector controls_;
  RigidParams rigid_;
  ShadingModel shading_;
  std::vector<bool> visible_;
  std::vector<bool> border_;
  int num_vertices_ = 0;
};

/// Albedo neighbour differences c_i - c_j over the mesh edges, per channel.
Vector albedo_smoothness(const Points& albedo, const std::vector<std::pair<int, int>>& edges);
std::vector<std::pair<int, int>> mesh_edges(const std::vector<Triangle>& triangles);
/// Vertices on an edge used by exactly one triangle.
std::vector<bool> open_border(const std::vector<Triangle>& triangles, int num_vertices);

struct VolumeDiagnostics {
  double rest_volume = 0.0;
  double volume_change = 0.0;
  double region_rest_volume = 0.0;
  double region_volume_change = 0.0;
};

VolumeDiagnostics volume_diagnostics(const TetMesh& mesh, const Points& positions,
                                     const std::vector<int>& region_tets);

struct FitResult {
  Vector controls;
  RigidParams rigid;
  DoglegReport report;
  double rmse = 0.0;      // surface RMSE against a geometry target
  double roto_rms = 0.0;  // pixels, for image fits
  Points surface;  // after the rigid transform
  Vector activations;
  std::optional<VolumeDiagnostics> volume;
  std::vector<std::pair<std::string, double>> terms;
};

FitResult fit_geometry(SurfaceDeformer& deformer, const std::vector<Triangle>& triangles,
                       const Points& target, double lambda, const DoglegSettings& settings = {},
                       const std::vector<int>& volume_region = {});

struct LightingResult {
  ShadingModel shading;
  DoglegReport report;
  std::vector<bool> visible;
  double initial_residual = 0.0;
  double final_residual = 0.0;
};

/// Fits (gamma, c) against level 0 of the plate with the surface at
/// controls = 0 and the given rigid pose.
LightingResult fit_lighting(SurfaceDeformer& deformer, const std::vector<Triangle>& triangles,
                            const Camera& camera, const ImagePyramid& plate,
                            const RigidParams& rigid, double smoothness,
                            const DoglegSettings& settings = {});

struct ImageFitOptions {
  CaptureWeights weights;
  bool free_rigid = false;
  DoglegSettings solver;
};

struct ImageFitResult {
  FitResult initialization;  // roto-only stage (w_hat)
  FitResult refinement;      // shading stage
};

ImageFitResult fit_image(SurfaceDeformer& deformer, const std::vector<Triangle>& triangles,
                         const Camera& camera, const ImagePyramid& plate,
                         const std::vector<RotoConstraint>& roto, const ShadingModel& shading,
                         const RigidParams& rigid, const ImageFitOptions& options = {},
                         const std::vector<int>& volume_region = {});

/// White at activation >= 0.5, red at 0, linear in between.
Vec3 activation_color(double activation);

double surface_rmse(const Points& a, const Points& b);
double bounding_box_diagonal(const Points& points);

}  // namespace facecap
