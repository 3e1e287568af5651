#pragma once

#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace frmab {

enum class Family { Affine, Quadratic };

const char* to_string(Family family);
Family parse_family(const std::string& name);

// Coefficients of one project (arm).
//
// Affine:    dx/dt = alpha(u) + beta(u) x
// Quadratic: dx/dt = alpha(u) x + beta(u) x^2
// Reward rate in both families: r(u) x - c(u).
struct ProjectDynamics {
  Family family = Family::Affine;
  double alpha0 = 0.0, alpha1 = 0.0;
  double beta0 = 0.0, beta1 = 0.0;
  double r0 = 0.0, r1 = 0.0;
  double c0 = 0.0, c1 = 0.0;
  // Open upper state bound; +inf for unbounded arms.
  double h_bound = std::numeric_limits<double>::infinity();

  bool operator==(const ProjectDynamics&) const = default;
};

// Coefficients for a fixed binary control value.
struct MixedCoeffs {
  double alpha;
  double beta;
  double r;
  double c;
};

MixedCoeffs mix_coeffs(const ProjectDynamics& d, int u);

struct FrmabInstance {
  std::vector<ProjectDynamics> projects;
  double horizon = 1.0;
  int budget = 1;
  double eps = 1e-5;
  double delta = 1e-4;

  std::size_t n() const { return projects.size(); }
  Family family() const;
  // Number of delta steps covering [0, horizon]; the last one may be short.
  std::size_t num_steps() const;
  // Grid time of step k, exact at k = num_steps().
  double grid_time(std::size_t k) const;

  bool operator==(const FrmabInstance&) const = default;
};

// Throws Error(InvalidInstance) on violated invariants.
void validate(const ProjectDynamics& d);
void validate(const FrmabInstance& inst);

struct StateCostatePoint {
  double t = 0.0;
  std::vector<double> x;
  std::vector<double> y;
};

// Scalar (x, y) pair for one project.
struct ArmState {
  double x;
  double y;
};

// Constants of the logistic closed form
//   x(tau) = K a e^{a tau} / (1 - K b e^{a tau})
//   y(tau) = G e^{-a tau} (1 - K b e^{a tau})^2
//            - r / (K a b) (1 - K b e^{a tau}) e^{-a tau}
// with tau measured from the segment start.
struct InterpCoeffs {
  double K;
  double G;
};

// Below this magnitude beta(u) is treated as zero in the affine closed form.
inline constexpr double kBetaZero = 1e-12;
// Below this magnitude alpha + beta x counts as a logistic equilibrium.
inline constexpr double kEquilibrium = 1e-12;

ArmState propagate_affine(const ProjectDynamics& d, double x_s, double y_s,
                          int u, double dt);

// Throws Error(NonPositiveState) when x_s <= 0.
ArmState propagate_quadratic(const ProjectDynamics& d, double x_s, double y_s,
                             int u, double dt);

// Dispatches on d.family.
ArmState propagate(const ProjectDynamics& d, double x_s, double y_s, int u,
                   double dt);

// Segment constants recovered from the segment initial condition.
// Requires |alpha + beta x_s| >= kEquilibrium.
InterpCoeffs quadratic_constants(const ProjectDynamics& d, double x_s,
                                 double y_s, int u);

// Evaluates the K/G closed form at local time tau.
ArmState evaluate_quadratic(const ProjectDynamics& d, const InterpCoeffs& k,
                            int u, double tau);

// Exact integral of x over [0, dt] starting from x_s with control u.
double state_integral(const ProjectDynamics& d, double x_s, int u, double dt);

// Exact integral of the reward rate r(u) x - c(u) over [0, dt].
double reward_integral(const ProjectDynamics& d, double x_s, int u, double dt);

// Right-hand sides for a constant control.
double state_rate(const ProjectDynamics& d, double x, int u);
double costate_rate(const ProjectDynamics& d, double x, double y, int u);
double reward_rate(const ProjectDynamics& d, double x, int u);

// Classical RK4 on the joint (x, y) system; the final step is shortened to
// land exactly on dt. Used only to check the closed forms.
ArmState rk4_oracle(const ProjectDynamics& d, double x_s, double y_s, int u,
                    double dt, double step);

// JSON schema:
// {"family", "projects": [{alpha0, alpha1, beta0, beta1, r0, r1, c0, c1,
//  h_bound}], "horizon", "budget", "eps", "delta"}; h_bound null means +inf.
nlohmann::json to_json(const FrmabInstance& inst);
FrmabInstance instance_from_json(const nlohmann::json& j);

}  // namespace frmab
