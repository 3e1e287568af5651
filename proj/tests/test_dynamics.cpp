#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "frmab/dynamics.hpp"
#include "frmab/errors.hpp"
#include "helpers.hpp"

using namespace frmab;

namespace {

ProjectDynamics affine(double a0, double a1, double b0, double b1) {
  ProjectDynamics d;
  d.family = Family::Affine;
  d.alpha0 = a0, d.alpha1 = a1, d.beta0 = b0, d.beta1 = b1;
  d.r0 = 1.0, d.r1 = 2.0, d.c0 = 0.0, d.c1 = 0.5;
  return d;
}

ProjectDynamics logistic(double a0, double a1, double b0, double b1) {
  ProjectDynamics d = affine(a0, a1, b0, b1);
  d.family = Family::Quadratic;
  d.h_bound = std::max(-a0 / b0, -a1 / b1);
  return d;
}

// Composite Simpson of r x - c along the closed-form path.
double simpson_reward(const ProjectDynamics& d, double x0, int u, double dt, int panels) {
  const MixedCoeffs k = mix_coeffs(d, u);
  const double h = dt / panels;
  double sum = 0.0;
  for (int i = 0; i <= panels; ++i) {
    const double x = i == 0 ? x0 : propagate(d, x0, 0.0, u, i * h).x;
    const double w = (i == 0 || i == panels) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    sum += w * (k.r * x - k.c);
  }
  return sum * h / 3.0;
}

}  // namespace

TEST_CASE("affine closed form: hand values") {
  // x' = 1 - x from x = 3: x(t) = 1 + 2 e^{-t}
  const ProjectDynamics d = affine(1.0, 1.0, -1.0, -1.0);
  const ArmState s = propagate(d, 3.0, 0.0, 0, 0.5);
  CHECK(s.x == doctest::Approx(1.0 + 2.0 * std::exp(-0.5)).epsilon(1e-14));

  // beta = 0 is a pure drift
  const ProjectDynamics drift = affine(0.25, 2.0, 0.0, 0.0);
  CHECK(propagate(drift, 1.0, 0.0, 1, 0.3).x == doctest::Approx(1.6).epsilon(1e-14));
  CHECK(state_integral(drift, 1.0, 1, 0.3) == doctest::Approx(0.3 + 0.09).epsilon(1e-14));
}

TEST_CASE("quadratic closed form: logistic hand value") {
  // x' = x - x^2 from 0.5: x(t) = 1 / (1 + e^{-t})
  ProjectDynamics d = logistic(1.0, 1.0, -1.0, -1.0);
  const ArmState s = propagate(d, 0.5, 0.0, 1, 2.0);
  CHECK(s.x == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))).epsilon(1e-13));
}

TEST_CASE("closed form matches RK4 on random coefficients") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const bool quad = trial % 2;
    ProjectDynamics d = quad ? logistic(rng.uniform(0.2, 2.0), rng.uniform(0.2, 2.0),
                                        -rng.uniform(0.2, 2.0), -rng.uniform(0.2, 2.0))
                             : affine(rng.uniform(0.0, 2.0), rng.uniform(0.0, 2.0),
                                      rng.uniform(-2.0, 0.5), rng.uniform(-2.0, 0.5));
    const double x = quad ? rng.uniform(0.05, 0.9) * d.h_bound : rng.uniform(0.1, 5.0);
    const double y = rng.uniform(-2.0, 2.0);
    const int u = static_cast<int>(rng.below(2));
    const double dt = rng.uniform(0.0, 0.5);
    const ArmState exact = propagate(d, x, y, u, dt);
    const ArmState ref = rk4_oracle(d, x, y, u, dt, 1e-4);
    CAPTURE(trial);
    CHECK(std::abs(exact.x - ref.x) < 1e-9);
    CHECK(std::abs(exact.y - ref.y) < 1e-9);
  }
}

TEST_CASE("semigroup: two half steps equal one step") {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const bool quad = trial % 2;
    ProjectDynamics d = quad ? logistic(rng.uniform(0.2, 2.0), rng.uniform(0.2, 2.0),
                                        -rng.uniform(0.2, 2.0), -rng.uniform(0.2, 2.0))
                             : affine(rng.uniform(0.0, 2.0), rng.uniform(0.0, 2.0),
                                      rng.uniform(-2.0, 0.5), rng.uniform(-2.0, 0.5));
    const double x = quad ? rng.uniform(0.05, 0.9) * d.h_bound : rng.uniform(0.1, 5.0);
    const double y = rng.uniform(-2.0, 2.0);
    const int u = static_cast<int>(rng.below(2));
    const double a = rng.uniform(0.0, 0.3), b = rng.uniform(0.0, 0.3);
    const ArmState whole = propagate(d, x, y, u, a + b);
    const ArmState first = propagate(d, x, y, u, a);
    const ArmState split = propagate(d, first.x, first.y, u, b);
    CHECK(std::abs(whole.x - split.x) < 1e-10 * (1 + std::abs(whole.x)));
    CHECK(std::abs(whole.y - split.y) < 1e-10 * (1 + std::abs(whole.y)));
  }
}

TEST_CASE("reward integral agrees with quadrature") {
  const ProjectDynamics a = affine(0.5, 1.5, -0.7, -0.2);
  CHECK(reward_integral(a, 2.0, 1, 0.8) == doctest::Approx(simpson_reward(a, 2.0, 1, 0.8, 2000)).epsilon(1e-11));
  const ProjectDynamics q = logistic(1.2, 0.6, -1.0, -0.8);
  CHECK(reward_integral(q, 0.3, 0, 0.8) == doctest::Approx(simpson_reward(q, 0.3, 0, 0.8, 2000)).epsilon(1e-11));
}

TEST_CASE("zero-length step is the identity") {
  const ProjectDynamics q = logistic(1.2, 0.6, -1.0, -0.8);
  const ArmState s = propagate(q, 0.4, -0.3, 1, 0.0);
  CHECK(s.x == 0.4);
  CHECK(s.y == -0.3);
  CHECK(reward_integral(q, 0.4, 1, 0.0) == 0.0);
}

TEST_CASE("quadratic propagation rejects non-positive state") {
  const ProjectDynamics q = logistic(1.0, 1.0, -1.0, -1.0);
  CHECK_THROWS_AS(propagate(q, 0.0, 0.0, 1, 0.1), Error);
}

TEST_CASE("validate rejects malformed instances") {
  FrmabInstance inst = test::make(BenchmarkFamily::Machine, 4, 1).instance;
  CHECK_NOTHROW(validate(inst));
  auto expect_invalid = [](const FrmabInstance& bad) {
    try {
      validate(bad);
      FAIL("expected InvalidInstance");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::InvalidInstance);
    }
  };
  FrmabInstance b = inst;
  b.budget = 4;
  expect_invalid(b);
  b = inst;
  b.budget = 0;
  expect_invalid(b);
  b = inst;
  b.horizon = -1.0;
  expect_invalid(b);
  b = inst;
  b.projects[0].h_bound = 0.0;
  expect_invalid(b);
  b = inst;
  b.projects[1].alpha0 = std::nan("");
  expect_invalid(b);
  b = inst;
  b.projects.clear();
  expect_invalid(b);
}

TEST_CASE("instance JSON round trip") {
  for (auto family : test::families()) {
    const FrmabInstance inst = test::make(family, 4, 9).instance;
    CHECK(instance_from_json(to_json(inst)) == inst);
  }
}
