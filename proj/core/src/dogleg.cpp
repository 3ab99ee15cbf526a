#include "facecap/dogleg.hpp"

#include <Eigen/Cholesky>

#include <cmath>

namespace facecap {

void DoglegSettings::validate() const {
  if (!(min_radius > 0.0 && min_radius < initial_radius))
    throw InputError("dogleg radii must satisfy 0 < min radius < initial radius");
  if (!(shrink_below > 0.0 && shrink_below < grow_above && grow_above < 1.0))
    throw InputError("dogleg gain thresholds must satisfy 0 < low < high < 1");
  if (max_iterations < 0) throw InputError("dogleg iteration budget must be nonnegative");
}

std::string to_string(Termination t) {
  switch (t) {
    case Termination::kGradient: return "gradient";
    case Termination::kRadius: return "radius";
    case Termination::kStep: return "step";
    case Termination::kMaxIterations: return "max_iterations";
  }
  return "unknown";
}

bool DoglegReport::monotone() const {
  for (size_t i = 1; i < cost_history.size(); ++i)
    if (cost_history[i] > cost_history[i - 1]) return false;
  return true;
}

DoglegReport dogleg_minimize(LeastSquaresProblem& problem, Vector& x, const DoglegSettings& settings) {
  settings.validate();
  if (x.size() != problem.num_parameters()) throw InputError("initial point has the wrong dimension");
  x = problem.project(x);

  DoglegReport report;
  Vector r;
  Matrix jac;
  problem.accept(x);
  problem.evaluate(x, r, &jac);
  double cost = 0.5 * r.squaredNorm();
  report.initial_cost = cost;
  report.cost_history.push_back(cost);
  double radius = settings.initial_radius;

  Vector r_trial;
  for (;;) {
    const Vector g = jac.transpose() * r;
    report.gradient_norm = g.lpNorm<Eigen::Infinity>();
    if (report.gradient_norm < settings.gradient_tolerance) {
      report.termination = Termination::kGradient;
      break;
    }
    if (report.iterations >= settings.max_iterations) {
      report.termination = Termination::kMaxIterations;
      break;
    }
    ++report.iterations;

    const Vector jg = jac * g;
    const Vector p_sd = -(g.squaredNorm() / jg.squaredNorm()) * g;
    Matrix normal = jac.transpose() * jac;
    normal.diagonal().array() += settings.damping;
    Eigen::LDLT<Matrix> ldlt(normal);
    Vector p_gn;
    bool have_gn = ldlt.info() == Eigen::Success;
    if (have_gn) {
      p_gn = ldlt.solve(-g);
      have_gn = p_gn.allFinite();
    }
    if (!have_gn) ++report.cauchy_fallbacks;

    Vector p;
    if (have_gn && p_gn.norm() <= radius) {
      p = p_gn;
    } else if (!have_gn || p_sd.norm() >= radius) {
      p = (radius / p_sd.norm()) * p_sd;
    } else {
      // |p_sd + tau (p_gn - p_sd)| = radius
      const Vector d = p_gn - p_sd;
      const double a = d.squaredNorm(), b = 2.0 * p_sd.dot(d), c = p_sd.squaredNorm() - radius * radius;
      const double tau = (-b + std::sqrt(b * b - 4.0 * a * c)) / (2.0 * a);
      p = p_sd + tau * d;
    }

    const double predicted = -(g.dot(p) + 0.5 * (jac * p).squaredNorm());
    const Vector x_trial = problem.project(x + p);
    double rho = -1.0;
    double cost_trial = cost;
    try {
      problem.evaluate(x_trial, r_trial, nullptr);
      cost_trial = 0.5 * r_trial.squaredNorm();
      if (std::isfinite(cost_trial) && predicted > 0.0) rho = (cost - cost_trial) / predicted;
    } catch (const SolverError&) {
      ++report.failed_evaluations;
    }

    const double step = (x_trial - x).norm();
    if (rho > 0.0 && cost_trial < cost) {
      x = x_trial;
      problem.accept(x);
      problem.evaluate(x, r, &jac);
      cost = 0.5 * r.squaredNorm();
      ++report.accepted;
      report.cost_history.push_back(cost);
      if (step <= settings.step_tolerance * (x.norm() + settings.step_tolerance)) {
        report.termination = Termination::kStep;
        break;
      }
    }
    if (rho < settings.shrink_below) {
      radius *= settings.shrink_factor;
    } else if (rho > settings.grow_above) {
      radius *= settings.grow_factor;
    }
    if (radius < settings.min_radius) {
      report.termination = Termination::kRadius;
      break;
    }
  }
  report.final_cost = cost;
  return report;
}

}  // namespace facecap
