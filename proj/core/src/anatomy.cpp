#include "facecap/anatomy.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

namespace facecap {

namespace {

// Corner blend on [0, d] in ramp coordinates: value d (2 t^2 - t^3), t = u / d.
// Joins the linear ramp with matching value and unit slope at u = d.
struct Blend {
  double value;
  double slope;
};

Blend corner(double u, double d) {
  const double t = u / d;
  return {d * (2.0 * t * t - t * t * t), 4.0 * t - 3.0 * t * t};
}

Points pre_skin_field(const Points& rest, const std::vector<Points>& shapes, const Vector& b) {
  if (b.size() != static_cast<Eigen::Index>(shapes.size()))
    throw InputError("blendshape weight count does not match the muscle basis");
  Points out = rest;
  for (size_t k = 0; k < shapes.size(); ++k)
    if (b[k] != 0.0) out += b[k] * shapes[k];
  return out;
}

Points derivative(const JawJoint& jaw, const Points& rest, const std::vector<Points>& shapes,
                  const Vector& weights, const Vector& b, const JawParams& j, int param) {
  const int k = static_cast<int>(shapes.size());
  if (param < 0 || param >= k + kJawDofs) throw InputError("parameter index out of range");
  if (param < k) return skin_linear(jaw, weights, j, shapes[param]);
  return skin_transform_derivatives(jaw, weights, j, pre_skin_field(rest, shapes, b))[param - k];
}

}  // namespace

ActivationValue activation(const ActivationCurve& curve, double length) {
  const double l0 = curve.rest_length;
  const double span = curve.shortening * l0;
  const double u = (l0 - length) / span;
  const double d = std::min(2.0 * curve.smoothing / span, 0.5);
  const double du_dl = -1.0 / span;

  if (u <= 0.0) return {0.0, 0.0};
  if (u >= 1.0) return {1.0, 0.0};
  if (u < d) {
    const Blend c = corner(u, d);
    return {c.value, c.slope * du_dl};
  }
  if (u > 1.0 - d) {
    const Blend c = corner(1.0 - u, d);
    return {1.0 - c.value, c.slope * du_dl};
  }
  return {u, du_dl};
}

double curve_length(const Points& curve) {
  if (curve.cols() < 2) throw InputError("a curve needs at least two points");
  double len = 0.0;
  for (Eigen::Index i = 1; i < curve.cols(); ++i) len += (curve.col(i) - curve.col(i - 1)).norm();
  return len;
}

Points curve_length_gradient(const Points& curve) {
  Points g = Points::Zero(3, curve.cols());
  for (Eigen::Index i = 1; i < curve.cols(); ++i) {
    const Vec3 seg = curve.col(i) - curve.col(i - 1);
    const double len = seg.norm();
    if (len == 0.0) continue;
    g.col(i) += seg / len;
    g.col(i - 1) -= seg / len;
  }
  return g;
}

void Muscle::validate(const TetMesh& mesh) const {
  if (tets.size() != fibers.size()) throw InputError("muscle " + name + ": one fiber per tet required");
  for (int t : tets)
    if (t < 0 || t >= mesh.num_tets()) throw InputError("muscle " + name + ": tet index out of range");
  for (const Vec3& f : fibers)
    if (std::abs(f.norm() - 1.0) > 1e-9) throw InputError("muscle " + name + ": fiber not unit length");
  for (int v : vertices)
    if (v < 0 || v >= mesh.num_vertices()) throw InputError("muscle " + name + ": vertex out of range");
  if (curve_rest.cols() < 2) throw InputError("muscle " + name + ": curve needs at least two points");
  if (curve_embedding.size() != curve_rest.cols())
    throw InputError("muscle " + name + ": curve embedding size mismatch");
  if (!(stiffness >= 0.0)) throw InputError("muscle " + name + ": negative track stiffness");
  if (!(activation.shortening > 0.0 && activation.shortening < 1.0))
    throw InputError("muscle " + name + ": shortening must lie in (0, 1)");
  if (std::abs(curve_length(curve_rest) - activation.rest_length) > 1e-10 * activation.rest_length)
    throw InputError("muscle " + name + ": rest length does not match the curve");
}

Muscle make_muscle(std::string name, const TetMesh& mesh, std::vector<int> tets,
                   std::vector<Vec3> fibers, Points curve, double stiffness, double shortening,
                   double smoothing_fraction, const std::vector<int>& constrained) {
  Muscle m;
  m.name = std::move(name);
  m.tets = std::move(tets);
  m.fibers = std::move(fibers);
  for (Vec3& f : m.fibers) f.normalize();
  const std::set<int> fixed(constrained.begin(), constrained.end());
  std::set<int> members;
  for (int t : m.tets) {
    if (t < 0 || t >= mesh.num_tets()) throw InputError("muscle " + m.name + ": tet index out of range");
    for (int v : mesh.tets()[t])
      if (!fixed.count(v)) members.insert(v);
  }
  m.vertices.assign(members.begin(), members.end());
  m.stiffness = stiffness;
  m.curve_embedding = embed(curve, mesh);
  m.curve_rest = std::move(curve);
  m.activation.rest_length = curve_length(m.curve_rest);
  m.activation.shortening = shortening;
  m.activation.smoothing = smoothing_fraction * m.activation.rest_length;
  m.validate(mesh);
  return m;
}

PrecomputedMuscleBasis precompute_basis(const TetMesh& mesh, const Rig& rig,
                                        const std::vector<Muscle>& muscles,
                                        const VolumetricLaplacian& laplacian) {
  rig.validate();
  if (laplacian.constrained() != mesh.boundary())
    throw InputError("the Laplacian must constrain exactly the outer boundary");
  if (static_cast<int>(mesh.boundary().size()) != rig.num_vertices())
    throw InputError("surface vertices do not correspond one-to-one with the outer boundary");

  PrecomputedMuscleBasis basis;
  basis.shape_names = rig.shapes.names;
  basis.jaw = rig.jaw;

  basis.volume_skin_weights = laplacian.extend_scalar(rig.skin_weights).cwiseMax(0.0).cwiseMin(1.0);
  const int k_shapes = rig.num_shapes();
  basis.volume_fields.reserve(k_shapes);
  for (int k = 0; k < k_shapes; ++k) {
    try {
      basis.volume_fields.push_back(laplacian.extend(rig.shapes.delta(k)));
    } catch (const SolverError& e) {
      std::ostringstream msg;
      msg << "Poisson solve for blendshape " << k << " (" << rig.shapes.names[k] << ") failed: " << e.what();
      throw SolverError(msg.str());
    }
  }

  for (const Muscle& m : muscles) {
    m.validate(mesh);
    MuscleBasis mb;
    const int nv = static_cast<int>(m.vertices.size());
    mb.rest.resize(3, nv);
    mb.skin_weights.resize(nv);
    for (int i = 0; i < nv; ++i) {
      mb.rest.col(i) = mesh.rest().col(m.vertices[i]);
      mb.skin_weights[i] = basis.volume_skin_weights[m.vertices[i]];
    }
    mb.curve_rest = m.curve_embedding.apply(mesh, mesh.rest());
    mb.curve_skin_weights = m.curve_embedding.apply_scalar(mesh, basis.volume_skin_weights);
    for (int k = 0; k < k_shapes; ++k) {
      const Points& field = basis.volume_fields[k];
      Points s(3, nv);
      for (int i = 0; i < nv; ++i) s.col(i) = field.col(m.vertices[i]);
      mb.shapes.push_back(std::move(s));
      mb.curve_shapes.push_back(m.curve_embedding.apply(mesh, field));
    }
    basis.muscles.push_back(std::move(mb));
  }
  return basis;
}

std::vector<Points> muscle_targets(const PrecomputedMuscleBasis& basis, const Vector& b,
                                   const JawParams& j) {
  std::vector<Points> out;
  out.reserve(basis.muscles.size());
  for (const MuscleBasis& m : basis.muscles)
    out.push_back(skin_transform(basis.jaw, m.skin_weights, j, pre_skin_field(m.rest, m.shapes, b)));
  return out;
}

std::vector<Points> muscle_curves(const PrecomputedMuscleBasis& basis, const Vector& b,
                                  const JawParams& j) {
  std::vector<Points> out;
  out.reserve(basis.muscles.size());
  for (const MuscleBasis& m : basis.muscles)
    out.push_back(skin_transform(basis.jaw, m.curve_skin_weights, j,
                                 pre_skin_field(m.curve_rest, m.curve_shapes, b)));
  return out;
}

Points target_derivative(const PrecomputedMuscleBasis& basis, int muscle, const Vector& b,
                         const JawParams& j, int param) {
  const MuscleBasis& m = basis.muscles.at(muscle);
  return derivative(basis.jaw, m.rest, m.shapes, m.skin_weights, b, j, param);
}

Points curve_derivative(const PrecomputedMuscleBasis& basis, int muscle, const Vector& b,
                        const JawParams& j, int param) {
  const MuscleBasis& m = basis.muscles.at(muscle);
  return derivative(basis.jaw, m.curve_rest, m.curve_shapes, m.curve_skin_weights, b, j, param);
}

Points morph_volume(const TetMesh& mesh, const PrecomputedMuscleBasis& basis, const Vector& b) {
  return pre_skin_field(mesh.rest(), basis.volume_fields, b);
}

}  // namespace facecap
