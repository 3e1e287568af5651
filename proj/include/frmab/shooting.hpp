#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "frmab/dynamics.hpp"
#include "frmab/pmp.hpp"

namespace frmab {

// Maximal run of grid steps sharing one control, [t_start, t_end).
struct Segment {
  double t_start = 0.0;
  double t_end = 0.0;
  Control control;
  std::vector<double> entry_state;
  std::vector<double> entry_costate;
  // Grid points belonging to the segment: [first_point, end_point). The final
  // grid point at t = T belongs to the last segment.
  std::size_t first_point = 0;
  std::size_t end_point = 0;
};

struct SolveInfo {
  int iterations = 0;  // residual evaluations after the initial guess, all attempts
  int restarts = 0;
  double residual_norm = 0.0;
};

struct PiecewiseTrajectory {
  std::vector<Segment> segments;
  // One point per multiple of delta, plus t = T.
  std::vector<StateCostatePoint> grid;
  // Control selected at each grid point; for i < grid.size() - 1 it is the
  // control held on [t_i, t_{i+1}).
  std::vector<Control> controls;
  double objective = 0.0;
  SolveInfo info;

  std::size_t segment_of(std::size_t point) const;
};

// Iterate of the quasi-Newton root finder on g(y0) = y(T).
struct BroydenState {
  Eigen::VectorXd y0_guess;
  Eigen::MatrixXd J;
  Eigen::VectorXd residual;
  int iter = 0;
};

struct SolveOptions {
  int max_iterations = 200;
  int max_restarts = 5;
  // Seeds the uniform [-1, 1]^n restart guesses.
  std::uint64_t seed = 0;
};

// Throws Error(InvalidInstance) unless 0 < x0_i < H_i.
void check_initial_state(const FrmabInstance& inst, std::span<const double> x0);

// Forward pass of the index policy from (x0, y0) on the delta grid, with the
// closed-form propagation inside each step and the exact reward integral.
// Throws Error(StateBoundViolation) if x leaves (0, H) by more than 1e-9.
PiecewiseTrajectory rollout(const FrmabInstance& inst, std::span<const double> x0,
                            std::span<const double> y0);

// y(T) of the rollout, without storing the grid.
std::vector<double> terminal_residual(const FrmabInstance& inst,
                                      std::span<const double> x0,
                                      std::span<const double> y0);

// Shooting method: Broyden iteration on the initial costate from y0 = 0,
// J = I until ||y(T)||_inf <= eps. Throws Error(NoConvergence) when every
// restart fails and Error(SingularJacobian) if the Jacobian update blows up.
PiecewiseTrajectory solve(const FrmabInstance& inst, std::span<const double> x0,
                          const SolveOptions& options = {});

// One Broyden update: takes the step -J^{-1} g, evaluates g there and applies
// the rank-one secant correction. Returns false when the step is unusable
// (singular J, non-finite step, or ||dy||^2 < 1e-16) and the caller should
// restart.
template <typename Residual>
bool broyden_step(BroydenState& state, Residual&& residual);

// CSV header t,x_1..x_n,y_1..y_n,u_1..u_n with one row per grid point.
void write_trajectory_csv(std::ostream& out, const PiecewiseTrajectory& traj);
// Segments, objective and solver diagnostics.
nlohmann::json trajectory_sidecar(const PiecewiseTrajectory& traj);

// ---------------------------------------------------------------------------

bool broyden_step_impl(BroydenState& state, const Eigen::VectorXd& step,
                       const Eigen::VectorXd& next_residual);
bool broyden_direction(const BroydenState& state, Eigen::VectorXd& step);

template <typename Residual>
bool broyden_step(BroydenState& state, Residual&& residual) {
  Eigen::VectorXd step;
  if (!broyden_direction(state, step)) return false;
  const Eigen::VectorXd next = residual(Eigen::VectorXd(state.y0_guess + step));
  return broyden_step_impl(state, step, next);
}

}  // namespace frmab
