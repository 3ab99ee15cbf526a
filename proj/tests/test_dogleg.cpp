#include "support.hpp"

using namespace facecap;
using namespace facecap::test;

namespace {

class Linear final : public LeastSquaresProblem {
 public:
  Linear(Matrix a, Vector b) : a_(std::move(a)), b_(std::move(b)) {}
  int num_parameters() const override { return static_cast<int>(a_.cols()); }
  void evaluate(const Vector& x, Vector& r, Matrix* j) override {
    r = a_ * x - b_;
    if (j) *j = a_;
  }

 private:
  Matrix a_;
  Vector b_;
};

class Rosenbrock final : public LeastSquaresProblem {
 public:
  int num_parameters() const override { return 2; }
  void evaluate(const Vector& x, Vector& r, Matrix* j) override {
    r.resize(2);
    r << 10.0 * (x[1] - x[0] * x[0]), 1.0 - x[0];
    if (j) {
      j->resize(2, 2);
      *j << -20.0 * x[0], 10.0, -1.0, 0.0;
    }
  }
};

/// Rosenbrock that cannot be evaluated outside the box |x_i| <= 2; the
/// first Gauss-Newton step from (-1.2, 1) leaves it.
class Fenced final : public LeastSquaresProblem {
 public:
  int num_parameters() const override { return 2; }
  void evaluate(const Vector& x, Vector& r, Matrix* j) override {
    if (x.cwiseAbs().maxCoeff() > 2.0) throw SolverError("outside");
    Rosenbrock().evaluate(x, r, j);
  }
};

}  // namespace

TEST_CASE("linear least squares agrees with the normal equations") {
  std::mt19937_64 rng(51);
  const Matrix a = random_vector(rng, 40 * 6).reshaped(40, 6);
  const Vector b = random_vector(rng, 40);
  const Vector oracle = (a.transpose() * a).ldlt().solve(a.transpose() * b);
  Linear problem(a, b);
  Vector x = Vector::Zero(6);
  const DoglegReport rep = dogleg_minimize(problem, x);
  CHECK((x - oracle).norm() < 1e-8);
  CHECK(rep.monotone());
  CHECK(rep.termination != Termination::kMaxIterations);
}

TEST_CASE("rosenbrock converges to (1, 1)") {
  Rosenbrock problem;
  Vector x(2);
  x << -1.2, 1.0;
  const DoglegReport rep = dogleg_minimize(problem, x);
  CHECK((x - Vector::Ones(2)).norm() < 1e-6);
  CHECK(rep.monotone());
  CHECK(rep.final_cost < 1e-20);
}

TEST_CASE("a zero residual start terminates immediately") {
  Rosenbrock problem;
  Vector x = Vector::Ones(2);
  const DoglegReport rep = dogleg_minimize(problem, x);
  CHECK(rep.iterations == 0);
  CHECK(rep.termination == Termination::kGradient);
  CHECK(x == Vector::Ones(2));
}

TEST_CASE("failed evaluations shrink the trust region instead of aborting") {
  Fenced problem;
  Vector x(2);
  x << -1.2, 1.0;
  DoglegSettings s;
  s.initial_radius = 10.0;
  const DoglegReport rep = dogleg_minimize(problem, x, s);
  CHECK(rep.failed_evaluations > 0);
  CHECK((x - Vector::Ones(2)).norm() < 1e-6);
  CHECK(rep.monotone());
}

TEST_CASE("settings are validated") {
  DoglegSettings s;
  s.max_iterations = -1;
  CHECK_THROWS_AS(s.validate(), InputError);
  s = {};
  s.shrink_below = 0.9;
  CHECK_THROWS_AS(s.validate(), InputError);
  CHECK(to_string(Termination::kRadius) == "radius");
}
