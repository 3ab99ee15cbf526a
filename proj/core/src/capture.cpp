#include "facecap/capture.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

namespace facecap {

namespace {

void split_controls(const Vector& w, int num_shapes, Vector& b, JawParams& j) {
  if (w.size() != num_shapes + kJawDofs) throw InputError("control vector has the wrong dimension");
  b = w.head(num_shapes);
  j = w.tail<kJawDofs>();
}

std::string format_vector(const Vector& v) {
  std::ostringstream s;
  s.precision(17);
  s << "[";
  for (Eigen::Index i = 0; i < v.size(); ++i) s << (i ? ", " : "") << v[i];
  s << "]";
  return s.str();
}

}  // namespace

BlendshapeDeformer::BlendshapeDeformer(Rig rig, std::shared_ptr<const TetMesh> mesh,
                                       std::shared_ptr<const PrecomputedMuscleBasis> basis)
    : rig_(std::move(rig)), mesh_(std::move(mesh)), basis_(std::move(basis)) {
  rig_.validate();
  if (basis_ && !mesh_) throw InputError("a volume basis needs its flesh mesh");
  if (basis_ && basis_->num_shapes() != rig_.num_shapes())
    throw InputError("volume basis does not match the rig");
}

Points BlendshapeDeformer::evaluate(const Vector& w, Matrix* jacobian) {
  if (jacobian) *jacobian = surface_jacobian(rig_, w);
  return evaluate_surface(rig_, w);
}

std::optional<Points> BlendshapeDeformer::volume_positions(const Vector& w) {
  if (!basis_) return std::nullopt;
  Vector b;
  JawParams j;
  split_controls(w, rig_.num_shapes(), b, j);
  Points x = skin_transform(basis_->jaw, basis_->volume_skin_weights, j, morph_volume(*mesh_, *basis_, b));
  // Blendshapes do not move bone: the skull side stays on the jaw/cranium frames.
  const std::vector<int>& bone = mesh_->inner_boundary();
  Points rest(3, bone.size());
  Vector weights(bone.size());
  for (size_t i = 0; i < bone.size(); ++i) {
    rest.col(i) = mesh_->rest().col(bone[i]);
    weights[i] = basis_->volume_skin_weights[bone[i]];
  }
  const Points placed = skin_transform(basis_->jaw, weights, j, rest);
  for (size_t i = 0; i < bone.size(); ++i) x.col(bone[i]) = placed.col(i);
  return x;
}

SimulationDeformer::SimulationDeformer(std::shared_ptr<const Simulator> sim, SimulationOptions options)
    : sim_(std::move(sim)), options_(options) {
  if (!sim_) throw InputError("simulation deformer needs a simulator");
}

const EquilibriumState& SimulationDeformer::equilibrium(const Vector& w) {
  if (last_ && last_w_.size() == w.size() && last_w_ == w) return *last_;
  Vector b;
  JawParams j;
  split_controls(w, sim_->num_shapes(), b, j);
  const Points* warm = (!options_.cold_start && warm_) ? &*warm_ : nullptr;
  EquilibriumState state = sim_->solve(b, j, options_.solve, warm);
  if (!state.converged)
    throw SolverError("equilibrium did not converge at w = " + format_vector(w) + ": " + state.message);
  last_ = std::move(state);
  last_w_ = w;
  return *last_;
}

Points SimulationDeformer::evaluate(const Vector& w, Matrix* jacobian) {
  const EquilibriumState& state = equilibrium(w);
  const std::vector<int>& surface = sim_->mesh().boundary();
  Points x(3, surface.size());
  for (size_t i = 0; i < surface.size(); ++i) x.col(i) = state.positions.col(surface[i]);
  if (jacobian) {
    SensitivitySettings settings;
    settings.threads = options_.threads;
    const Sensitivities sens = solve_sensitivities(*sim_, state, settings);
    jacobian->resize(3 * surface.size(), sens.dX.cols());
    for (size_t i = 0; i < surface.size(); ++i)
      jacobian->middleRows(3 * i, 3) = sens.dX.middleRows(3 * surface[i], 3);
  }
  return x;
}

void SimulationDeformer::accept(const Vector& w) {
  if (options_.cold_start) return;
  if (last_ && last_w_.size() == w.size() && last_w_ == w) warm_ = last_->positions;
}

std::optional<Points> SimulationDeformer::volume_positions(const Vector& w) {
  return equilibrium(w).positions;
}

Vector SimulationDeformer::activations(const Vector& w) { return equilibrium(w).activations; }

std::vector<std::pair<int, int>> mesh_edges(const std::vector<Triangle>& triangles) {
  std::set<std::pair<int, int>> edges;
  for (const Triangle& t : triangles)
    for (int a = 0; a < 3; ++a) {
      const int i = t[a], j = t[(a + 1) % 3];
      edges.emplace(std::min(i, j), std::max(i, j));
    }
  return {edges.begin(), edges.end()};
}

std::vector<bool> open_border(const std::vector<Triangle>& triangles, int num_vertices) {
  std::map<std::pair<int, int>, int> uses;
  for (const Triangle& t : triangles)
    for (int e = 0; e < 3; ++e) {
      const int a = t[e], b = t[(e + 1) % 3];
      ++uses[{std::min(a, b), std::max(a, b)}];
    }
  std::vector<bool> border(num_vertices, false);
  for (const auto& [edge, count] : uses) {
    if (count != 1) continue;
    if (edge.first < 0 || edge.second >= num_vertices) throw InputError("triangle index out of range");
    border[edge.first] = border[edge.second] = true;
  }
  return border;
}

Vector albedo_smoothness(const Points& albedo, const std::vector<std::pair<int, int>>& edges) {
  Vector s(3 * edges.size());
  for (size_t e = 0; e < edges.size(); ++e)
    s.segment<3>(3 * e) = albedo.col(edges[e].first) - albedo.col(edges[e].second);
  return s;
}

struct CaptureProblem::Blocks {
  std::vector<std::string> names;
  std::vector<Vector> residuals;
  std::vector<Matrix> jacobians;

  void add(std::string name, Vector r, Matrix j) {
    names.push_back(std::move(name));
    residuals.push_back(std::move(r));
    jacobians.push_back(std::move(j));
  }
};

CaptureProblem::CaptureProblem(SurfaceDeformer& deformer, std::vector<Triangle> triangles, Camera camera,
                               Terms terms, FreeSet free, Vector controls, RigidParams rigid,
                               ShadingModel shading)
    : deformer_(deformer),
      triangles_(std::move(triangles)),
      edges_(mesh_edges(triangles_)),
      camera_(std::move(camera)),
      terms_(std::move(terms)),
      free_(free),
      controls_(std::move(controls)),
      rigid_(rigid),
      shading_(std::move(shading)) {
  const int nc = deformer_.num_controls();
  if (controls_.size() != nc) throw InputError("initial controls have the wrong dimension");
  if (terms_.anchor.size() == 0) terms_.anchor = Vector::Zero(nc);
  if (terms_.anchor.size() != nc) throw InputError("control anchor has the wrong dimension");
  if (!terms_.geometry_target && terms_.roto.empty() && !terms_.plate)
    throw InputError("a capture problem needs at least one data term");
  if (!free_.controls && !free_.rigid && !free_.lighting)
    throw InputError("a capture problem needs at least one free parameter block");
  num_vertices_ = static_cast<int>(deformer_.evaluate(controls_, nullptr).cols());
  border_ = open_border(triangles_, num_vertices_);
  if (terms_.geometry_target && terms_.geometry_target->cols() != num_vertices_)
    throw InputError("geometry target does not correspond to the model surface");
  if ((terms_.plate || free_.lighting) && shading_.albedo.cols() != num_vertices_)
    throw InputError("one albedo per surface vertex required");
  if (terms_.plate || !terms_.roto.empty()) camera_.validate();
}

int CaptureProblem::num_parameters() const {
  return (free_.controls ? deformer_.num_controls() : 0) + (free_.rigid ? 6 : 0) +
         (free_.lighting ? 9 + 3 * num_vertices_ : 0);
}

Vector CaptureProblem::pack() const {
  Vector x(num_parameters());
  Eigen::Index o = 0;
  if (free_.controls) {
    x.segment(o, controls_.size()) = controls_;
    o += controls_.size();
  }
  if (free_.rigid) {
    x.segment<3>(o) = rigid_.rotation;
    x.segment<3>(o + 3) = rigid_.translation;
    o += 6;
  }
  if (free_.lighting) {
    x.segment<9>(o) = shading_.gamma;
    x.segment(o + 9, 3 * num_vertices_) = flatten(shading_.albedo);
  }
  return x;
}

void CaptureProblem::unpack(const Vector& x, Vector& controls, RigidParams& rigid,
                            ShadingModel& shading) const {
  if (x.size() != num_parameters()) throw InputError("parameter vector has the wrong dimension");
  controls = controls_;
  rigid = rigid_;
  shading = shading_;
  Eigen::Index o = 0;
  if (free_.controls) {
    controls = x.segment(o, controls_.size());
    o += controls_.size();
  }
  if (free_.rigid) {
    rigid.rotation = x.segment<3>(o);
    rigid.translation = x.segment<3>(o + 3);
    o += 6;
  }
  if (free_.lighting) {
    shading.gamma = x.segment<9>(o);
    shading.albedo = unflatten(x.segment(o + 9, 3 * num_vertices_));
  }
}

Vector CaptureProblem::project(const Vector& x) const {
  if (!free_.lighting) return x;
  Vector out = x;
  out.tail(3 * num_vertices_) = x.tail(3 * num_vertices_).cwiseMax(0.0);
  return out;
}

void CaptureProblem::refresh_visibility(const Vector& x) {
  Vector w;
  RigidParams rigid;
  ShadingModel shading;
  unpack(x, w, rigid, shading);
  visible_ = compute_visibility(rigid.apply(deformer_.evaluate(w, nullptr)), triangles_, camera_);
  for (size_t i = 0; i < visible_.size(); ++i) visible_[i] = visible_[i] && !border_[i];
}

void CaptureProblem::accept(const Vector& x) {
  if (free_.controls) deformer_.accept(x.head(deformer_.num_controls()));
  if (terms_.plate) refresh_visibility(x);
}

CaptureProblem::Blocks CaptureProblem::build(const Vector& x, bool with_jacobian) {
  Vector w;
  RigidParams rigid;
  ShadingModel shading;
  unpack(x, w, rigid, shading);
  if (terms_.plate && visible_.empty()) refresh_visibility(x);

  const int nc = deformer_.num_controls();
  const int n = num_parameters();
  const Eigen::Index col_w = 0;
  const Eigen::Index col_rigid = free_.controls ? nc : 0;
  const Eigen::Index col_gamma = col_rigid + (free_.rigid ? 6 : 0);
  const Eigen::Index col_albedo = col_gamma + 9;

  Matrix dx_dw;
  const bool need_shape = with_jacobian && (free_.controls || free_.rigid);
  const Points surface = deformer_.evaluate(w, need_shape && free_.controls ? &dx_dw : nullptr);
  if (need_shape && !free_.controls) dx_dw = Matrix::Zero(3 * surface.cols(), nc);
  const Points posed = rigid.apply(surface);
  Matrix j_obs;
  if (need_shape) j_obs = chain_to_observables(dx_dw, surface, rigid);

  // Maps d(residual)/d(posed surface) onto the free parameters.
  auto chain = [&](const Matrix& d_positions) {
    Matrix j = Matrix::Zero(d_positions.rows(), n);
    if (!need_shape) return j;
    const Matrix full = d_positions * j_obs;
    if (free_.controls) j.middleCols(col_w, nc) = full.leftCols(nc);
    if (free_.rigid) j.middleCols(col_rigid, 6) = full.rightCols(6);
    return j;
  };

  Blocks blocks;
  if (terms_.geometry_target) {
    const double s = std::sqrt(terms_.geometry_weight);
    const Points diff = posed - *terms_.geometry_target;
    Matrix j;
    if (with_jacobian) j = chain(s * Matrix::Identity(3 * num_vertices_, 3 * num_vertices_));
    blocks.add("geometry", s * flatten(diff), std::move(j));
  }
  if (!terms_.roto.empty()) {
    const double s = std::sqrt(terms_.roto_weight);
    const RotoResidual rr = roto_residual(posed, triangles_, terms_.roto, camera_, with_jacobian);
    Matrix j;
    if (with_jacobian) j = chain(s * rr.d_positions);
    blocks.add("roto", s * rr.r, std::move(j));
  }
  if (terms_.plate) {
    const double s = std::sqrt(terms_.shading_weight);
    ShadingOptions opts = terms_.shading;
    opts.with_jacobian = with_jacobian;
    const ShadingResidual sr =
        vertex_shading_residual(posed, triangles_, shading, camera_, *terms_.plate, visible_, opts);
    Matrix j;
    if (with_jacobian) {
      j = chain(s * sr.d_positions);
      if (free_.lighting) {
        j.middleCols(col_gamma, 9) = s * sr.d_gamma;
        j.middleCols(col_albedo, 3 * num_vertices_) = s * sr.d_albedo;
      }
    }
    blocks.add("shading", s * sr.r, std::move(j));
  }
  if (free_.controls && terms_.control_weight > 0.0) {
    const double s = std::sqrt(terms_.control_weight);
    Matrix j;
    if (with_jacobian) {
      j = Matrix::Zero(nc, n);
      j.middleCols(col_w, nc).diagonal().setConstant(s);
    }
    blocks.add("controls", s * (w - terms_.anchor), std::move(j));
  }
  if (free_.lighting && terms_.smoothness_weight > 0.0) {
    const double s = std::sqrt(terms_.smoothness_weight);
    Matrix j;
    if (with_jacobian) {
      j = Matrix::Zero(3 * edges_.size(), n);
      for (size_t e = 0; e < edges_.size(); ++e)
        for (int c = 0; c < 3; ++c) {
          j(3 * e + c, col_albedo + 3 * edges_[e].first + c) = s;
          j(3 * e + c, col_albedo + 3 * edges_[e].second + c) = -s;
        }
    }
    blocks.add("albedo_smoothness", s * albedo_smoothness(shading.albedo, edges_), std::move(j));
  }
  return blocks;
}

void CaptureProblem::evaluate(const Vector& x, Vector& r, Matrix* jacobian) {
  const Blocks blocks = build(x, jacobian != nullptr);
  Eigen::Index rows = 0;
  for (const Vector& b : blocks.residuals) rows += b.size();
  r.resize(rows);
  if (jacobian) jacobian->resize(rows, num_parameters());
  Eigen::Index o = 0;
  for (size_t k = 0; k < blocks.residuals.size(); ++k) {
    const Eigen::Index m = blocks.residuals[k].size();
    r.segment(o, m) = blocks.residuals[k];
    if (jacobian) jacobian->middleRows(o, m) = blocks.jacobians[k];
    o += m;
  }
}

std::vector<std::pair<std::string, double>> CaptureProblem::term_norms(const Vector& x) {
  const Blocks blocks = build(x, false);
  std::vector<std::pair<std::string, double>> out;
  for (size_t k = 0; k < blocks.names.size(); ++k) out.emplace_back(blocks.names[k], blocks.residuals[k].norm());
  return out;
}

VolumeDiagnostics volume_diagnostics(const TetMesh& mesh, const Points& positions,
                                     const std::vector<int>& region_tets) {
  const Vector rest = mesh.rest_volumes();
  const Vector now = mesh.volumes(positions);
  VolumeDiagnostics d;
  d.rest_volume = rest.sum();
  d.volume_change = now.sum() - d.rest_volume;
  for (int t : region_tets) {
    if (t < 0 || t >= mesh.num_tets()) throw InputError("volume region references a missing tet");
    d.region_rest_volume += rest[t];
    d.region_volume_change += now[t] - rest[t];
  }
  return d;
}

double surface_rmse(const Points& a, const Points& b) {
  if (a.cols() != b.cols() || a.cols() == 0) throw InputError("surfaces do not correspond");
  return std::sqrt((a - b).colwise().squaredNorm().mean());
}

double bounding_box_diagonal(const Points& points) {
  return (points.rowwise().maxCoeff() - points.rowwise().minCoeff()).norm();
}

Vec3 activation_color(double activation) {
  const double t = std::clamp(activation / 0.5, 0.0, 1.0);
  return Vec3(1.0, t, t);
}

namespace {

FitResult finish(SurfaceDeformer& deformer, CaptureProblem& problem, const Vector& x,
                 DoglegReport report, const std::vector<int>& volume_region) {
  FitResult out;
  ShadingModel shading;
  problem.unpack(x, out.controls, out.rigid, shading);
  out.report = std::move(report);
  out.surface = out.rigid.apply(deformer.evaluate(out.controls, nullptr));
  out.activations = deformer.activations(out.controls);
  if (const TetMesh* mesh = deformer.volume_mesh()) {
    if (auto positions = deformer.volume_positions(out.controls))
      out.volume = volume_diagnostics(*mesh, *positions, volume_region);
  }
  out.terms = problem.term_norms(x);
  return out;
}

}  // namespace

FitResult fit_geometry(SurfaceDeformer& deformer, const std::vector<Triangle>& triangles,
                       const Points& target, double lambda, const DoglegSettings& settings,
                       const std::vector<int>& volume_region) {
  if (!(lambda >= 0.0)) throw InputError("regularization weight must be nonnegative");
  CaptureProblem::Terms terms;
  terms.geometry_target = target;
  terms.control_weight = lambda;
  CaptureProblem problem(deformer, triangles, Camera{}, std::move(terms), {true, true, false},
                         Vector::Zero(deformer.num_controls()), RigidParams{}, ShadingModel{});
  Vector x = problem.pack();
  DoglegReport report = dogleg_minimize(problem, x, settings);
  FitResult out = finish(deformer, problem, x, std::move(report), volume_region);
  out.rmse = surface_rmse(out.surface, target);
  return out;
}

LightingResult fit_lighting(SurfaceDeformer& deformer, const std::vector<Triangle>& triangles,
                            const Camera& camera, const ImagePyramid& plate, const RigidParams& rigid,
                            double smoothness, const DoglegSettings& settings) {
  if (!(smoothness >= 0.0)) throw InputError("smoothness weight must be nonnegative");
  const Vector w0 = Vector::Zero(deformer.num_controls());
  const Points posed = rigid.apply(deformer.evaluate(w0, nullptr));
  const int n = static_cast<int>(posed.cols());
  const std::vector<bool> visible = compute_visibility(posed, triangles, camera);

  // Start from uniform band-0 light with the albedo read straight off the plate.
  ShadingModel init;
  init.gamma = SH9::Unit(0);
  const double e0 = sh_irradiance(init.gamma, Vec3::UnitZ());
  init.albedo = Points::Zero(3, n);
  Vec3 sum = Vec3::Zero();
  int count = 0;
  for (int i = 0; i < n; ++i) {
    if (!visible[i]) continue;
    const Vec3 value = sample_bilinear(plate.level(0), camera.project(posed.col(i)).pixel).value;
    init.albedo.col(i) = value / e0;
    sum += value;
    ++count;
  }
  if (count == 0) throw InputError("no surface vertex is visible in the plate");
  if (sum.maxCoeff() <= 1e-12 * count) throw InputError("plate is black at every visible vertex");
  for (int i = 0; i < n; ++i)
    if (!visible[i]) init.albedo.col(i) = sum / (count * e0);

  CaptureProblem::Terms terms;
  terms.plate = &plate;
  terms.shading.level_weights = {1.0};
  terms.smoothness_weight = smoothness;
  CaptureProblem problem(deformer, triangles, camera, std::move(terms), {false, false, true}, w0, rigid,
                         init);
  Vector x = problem.pack();
  const auto shading_norm = [&](const Vector& at) {
    for (const auto& [name, value] : problem.term_norms(at))
      if (name == "shading") return value;
    return 0.0;
  };

  LightingResult out;
  out.initial_residual = shading_norm(x);
  out.report = dogleg_minimize(problem, x, settings);
  Vector controls;
  RigidParams rigid_out;
  problem.unpack(x, controls, rigid_out, out.shading);
  out.visible = problem.visibility();
  out.final_residual = shading_norm(x);
  return out;
}

ImageFitResult fit_image(SurfaceDeformer& deformer, const std::vector<Triangle>& triangles,
                         const Camera& camera, const ImagePyramid& plate,
                         const std::vector<RotoConstraint>& roto, const ShadingModel& shading,
                         const RigidParams& rigid, const ImageFitOptions& options,
                         const std::vector<int>& volume_region) {
  if (roto.empty()) throw InputError("image fitting needs roto constraints");
  const CaptureWeights& wt = options.weights;
  ImageFitResult out;

  auto roto_rms = [&](const FitResult& fit) {
    const RotoResidual rr = roto_residual(fit.surface, triangles, roto, camera, false);
    return std::sqrt(rr.r.squaredNorm() / static_cast<double>(roto.size()));
  };

  {
    CaptureProblem::Terms terms;
    terms.roto = roto;
    terms.control_weight = wt.roto_initialization;
    CaptureProblem problem(deformer, triangles, camera, std::move(terms), {true, options.free_rigid, false},
                           Vector::Zero(deformer.num_controls()), rigid, shading);
    Vector x = problem.pack();
    DoglegReport report = dogleg_minimize(problem, x, options.solver);
    out.initialization = finish(deformer, problem, x, std::move(report), volume_region);
    out.initialization.roto_rms = roto_rms(out.initialization);
  }
  {
    CaptureProblem::Terms terms;
    terms.roto = roto;
    terms.roto_weight = wt.roto_refinement;
    terms.plate = &plate;
    terms.control_weight = wt.prior;
    terms.anchor = out.initialization.controls;
    CaptureProblem problem(deformer, triangles, camera, std::move(terms), {true, options.free_rigid, false},
                           out.initialization.controls, out.initialization.rigid, shading);
    Vector x = problem.pack();
    DoglegReport report = dogleg_minimize(problem, x, options.solver);
    out.refinement = finish(deformer, problem, x, std::move(report), volume_region);
    out.refinement.roto_rms = roto_rms(out.refinement);
  }
  return out;
}

}  // namespace facecap
