#pragma once

#include "facecap/common.hpp"

#include <string>
#include <vector>

namespace facecap {

/// r(x) and dr/dx for a nonlinear least-squares objective 1/2 |r|^2.
class LeastSquaresProblem {
 public:
  virtual ~LeastSquaresProblem() = default;
  virtual int num_parameters() const = 0;
  /// Throws SolverError when the point cannot be evaluated (the optimizer
  /// then treats the trial step as rejected).
  virtual void evaluate(const Vector& x, Vector& r, Matrix* jacobian) = 0;
  /// Feasibility projection applied to every trial point.
  virtual Vector project(const Vector& x) const { return x; }
  /// Called once a point becomes the iterate, before its Jacobian is evaluated.
  virtual void accept(const Vector& /*x*/) {}
};

struct DoglegSettings {
  double initial_radius = 1.0;
  double min_radius = 1e-12;
  double gradient_tolerance = 1e-8;  // on |J^T r|_inf
  /// Stop when an accepted step is this small relative to |x|.
  double step_tolerance = 1e-14;
  int max_iterations = 200;
  double shrink_below = 0.25;
  double grow_above = 0.75;
  double shrink_factor = 0.25;
  double grow_factor = 2.0;
  double damping = 1e-10;

  void validate() const;
};

enum class Termination { kGradient, kRadius, kStep, kMaxIterations };

std::string to_string(Termination t);

struct DoglegReport {
  int iterations = 0;
  int accepted = 0;
  int failed_evaluations = 0;
  int cauchy_fallbacks = 0;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  double gradient_norm = 0.0;
  /// Cost at the start and after every accepted step.
  std::vector<double> cost_history;
  Termination termination = Termination::kMaxIterations;

  bool monotone() const;
};

/// Trust-region dogleg on 1/2 |r(x)|^2 with Gauss-Newton and Cauchy steps.
DoglegReport dogleg_minimize(LeastSquaresProblem& problem, Vector& x,
                             const DoglegSettings& settings = {});

}  // namespace facecap
