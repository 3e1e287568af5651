#include "frmab/shooting.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "frmab/errors.hpp"
#include "frmab/io.hpp"
#include "frmab/rng.hpp"

namespace frmab {

namespace {

constexpr double kBoundSlack = 1e-9;
// Bracket width at which an in-step switch time is accepted.
constexpr double kSwitchTolerance = 1e-13;

void open_segment(PiecewiseTrajectory& traj, double t, std::size_t first_point,
                  const Control& u, const std::vector<double>& x,
                  const std::vector<double>& y) {
  if (!traj.segments.empty()) {
    traj.segments.back().t_end = t;
    traj.segments.back().end_point = first_point;
  }
  Segment s;
  s.t_start = t;
  s.control = u;
  s.entry_state = x;
  s.entry_costate = y;
  s.first_point = first_point;
  traj.segments.push_back(std::move(s));
}

// Top-m selection without allocations; same rule as select_control.
void select_into(const std::vector<double>& gamma, int m,
                 std::vector<std::size_t>& order, Control& u) {
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return gamma[a] > gamma[b]; });
  std::fill(u.begin(), u.end(), 0);
  int taken = 0;
  for (std::size_t i : order) {
    if (taken >= m || !(gamma[i] > 0.0)) break;
    u[i] = 1;
    ++taken;
  }
}

void compute_gamma(const FrmabInstance& inst, const std::vector<double>& x,
                   const std::vector<double>& y, std::vector<double>& gamma) {
  for (std::size_t i = 0; i < inst.n(); ++i) {
    const auto& d = inst.projects[i];
    gamma[i] = (d.r1 - d.r0) * x[i] - (d.c1 - d.c0) +
               y[i] * (state_rate(d, x[i], 1) - state_rate(d, x[i], 0));
  }
}

void check_bounds(const FrmabInstance& inst, const std::vector<double>& x, double t) {
  for (std::size_t i = 0; i < inst.n(); ++i) {
    if (!(x[i] > -kBoundSlack && x[i] < inst.projects[i].h_bound + kBoundSlack)) {
      throw Error(ErrorKind::StateBoundViolation,
                  "x_" + std::to_string(i + 1) + " = " + io::format_double(x[i]) +
                      " left (0, H) at t = " + io::format_double(t));
    }
  }
}

struct RolloutEnd {
  std::vector<double> y;
  double objective;
};

RolloutEnd run(const FrmabInstance& inst, std::span<const double> x0,
               std::span<const double> y0, PiecewiseTrajectory* record) {
  const std::size_t n = inst.n();
  if (y0.size() != n) {
    throw Error(ErrorKind::DimensionMismatch, "costate length differs from n");
  }
  check_initial_state(inst, x0);
  std::vector<double> x(x0.begin(), x0.end());
  std::vector<double> y(y0.begin(), y0.end());
  std::vector<double> gamma(n);
  std::vector<std::size_t> order(n);
  Control u(n, 0);
  double objective = 0.0;
  const std::size_t steps = inst.num_steps();

  if (record) {
    record->grid.reserve(steps + 1);
    record->controls.reserve(steps + 1);
  }

  std::vector<double> xs(n), ys(n), xe(n), ye(n);
  Control u_end(n, 0);
  const std::vector<double> zeros(n, 0.0);
  // Advances (x, y) by dt under u into (xo, yo); returns the reward earned.
  auto advance = [&](const std::vector<double>& xi, const std::vector<double>& yi,
                     const Control& uc, double dt, std::vector<double>& xo,
                     std::vector<double>& yo) {
    double earned = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& d = inst.projects[i];
      earned += reward_integral(d, xi[i], uc[i], dt);
      const ArmState next = propagate(d, xi[i], yi[i], uc[i], dt);
      xo[i] = next.x;
      yo[i] = next.y;
    }
    return earned;
  };
  auto selects_same = [&](const std::vector<double>& xq, const std::vector<double>& yq,
                          const Control& uc, Control& scratch) {
    compute_gamma(inst, xq, yq, gamma);
    select_into(gamma, inst.budget, order, scratch);
    return scratch == uc;
  };

  for (std::size_t k = 0; k < steps; ++k) {
    const double t = inst.grid_time(k);
    const double h = inst.grid_time(k + 1) - t;
    compute_gamma(inst, x, y, gamma);
    select_into(gamma, inst.budget, order, u);

    if (record) {
      if (record->segments.empty() || record->segments.back().control != u) {
        open_segment(*record, t, k, u, x, y);
      }
      record->grid.push_back({t, x, y});
      record->controls.push_back(u);
    }

    double earned = advance(x, y, u, h, xe, ye);
    // At T the costate is zero by transversality; the solved y(T) only
    // approximates that, and its residual must not break ties there.
    const bool last = k + 1 == steps;
    if (!selects_same(xe, last ? zeros : ye, u, u_end)) {
      // The index ranking changes inside the step: bisect for the first time
      // the selection differs and switch there.
      double lo = 0.0, hi = h;
      while (hi - lo > kSwitchTolerance) {
        const double mid = 0.5 * (lo + hi);
        advance(x, y, u, mid, xs, ys);
        if (selects_same(xs, ys, u, u_end)) {
          lo = mid;
        } else {
          hi = mid;
        }
      }
      earned = advance(x, y, u, hi, xs, ys);
      selects_same(xs, ys, u, u_end);
      if (hi < h) {
        earned += advance(xs, ys, u_end, h - hi, xe, ye);
        if (record) open_segment(*record, t + hi, k + 1, u_end, xs, ys);
      }
    }
    objective += earned;
    x.swap(xe);
    y.swap(ye);
    check_bounds(inst, x, t + h);
  }

  if (record) {
    compute_gamma(inst, x, y, gamma);
    select_into(gamma, inst.budget, order, u);
    record->grid.push_back({inst.horizon, x, y});
    record->controls.push_back(u);
    record->segments.back().t_end = inst.horizon;
    record->segments.back().end_point = record->grid.size();
    record->objective = objective;
  }
  return {std::move(y), objective};
}

bool all_finite(const Eigen::MatrixXd& m) { return m.allFinite(); }

}  // namespace

std::size_t PiecewiseTrajectory::segment_of(std::size_t point) const {
  const auto it = std::upper_bound(
      segments.begin(), segments.end(), point,
      [](std::size_t p, const Segment& s) { return p < s.end_point; });
  return it == segments.end() ? segments.size() - 1
                              : static_cast<std::size_t>(it - segments.begin());
}

void check_initial_state(const FrmabInstance& inst, std::span<const double> x0) {
  if (x0.size() != inst.n()) {
    throw Error(ErrorKind::DimensionMismatch, "initial state length differs from n");
  }
  for (std::size_t i = 0; i < inst.n(); ++i) {
    if (!(x0[i] > 0.0 && x0[i] < inst.projects[i].h_bound)) {
      throw Error(ErrorKind::InvalidInstance,
                  "initial state x_" + std::to_string(i + 1) + " outside (0, H)");
    }
  }
}

PiecewiseTrajectory rollout(const FrmabInstance& inst, std::span<const double> x0,
                            std::span<const double> y0) {
  PiecewiseTrajectory traj;
  run(inst, x0, y0, &traj);
  return traj;
}

std::vector<double> terminal_residual(const FrmabInstance& inst,
                                      std::span<const double> x0,
                                      std::span<const double> y0) {
  return run(inst, x0, y0, nullptr).y;
}

bool broyden_direction(const BroydenState& state, Eigen::VectorXd& step) {
  Eigen::FullPivLU<Eigen::MatrixXd> lu(state.J);
  if (!lu.isInvertible()) return false;
  step = -lu.solve(state.residual);
  return step.allFinite();
}

bool broyden_step_impl(BroydenState& state, const Eigen::VectorXd& step,
                       const Eigen::VectorXd& next_residual) {
  const double denom = step.squaredNorm();
  if (denom < 1e-16 || !next_residual.allFinite()) return false;
  state.J += (next_residual - state.residual - state.J * step) * step.transpose() / denom;
  if (!all_finite(state.J)) {
    throw Error(ErrorKind::SingularJacobian, "Broyden update produced non-finite entries");
  }
  state.y0_guess += step;
  state.residual = next_residual;
  ++state.iter;
  return true;
}

PiecewiseTrajectory solve(const FrmabInstance& inst, std::span<const double> x0,
                          const SolveOptions& options) {
  validate(inst);
  check_initial_state(inst, x0);
  const auto n = static_cast<Eigen::Index>(inst.n());
  auto residual = [&](const Eigen::VectorXd& y0) {
    const auto g = terminal_residual(inst, x0, std::span<const double>(y0.data(), y0.size()));
    return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(g.data(), n));
  };

  Rng rng(options.seed);
  int total_iterations = 0;
  double best_norm = std::numeric_limits<double>::infinity();
  for (int attempt = 0; attempt <= options.max_restarts; ++attempt) {
    BroydenState state;
    state.y0_guess = Eigen::VectorXd::Zero(n);
    if (attempt > 0) {
      for (Eigen::Index i = 0; i < n; ++i) state.y0_guess[i] = rng.uniform(-1.0, 1.0);
    }
    state.J = Eigen::MatrixXd::Identity(n, n);
    state.residual = residual(state.y0_guess);
    while (true) {
      const double norm = state.residual.lpNorm<Eigen::Infinity>();
      best_norm = std::min(best_norm, norm);
      if (norm <= inst.eps) {
        PiecewiseTrajectory traj = rollout(
            inst, x0, std::span<const double>(state.y0_guess.data(), state.y0_guess.size()));
        traj.info.iterations = total_iterations + state.iter;
        traj.info.restarts = attempt;
        traj.info.residual_norm = norm;
        return traj;
      }
      if (state.iter >= options.max_iterations) break;
      if (!broyden_step(state, residual)) break;
    }
    total_iterations += state.iter;
  }
  throw Error(ErrorKind::NoConvergence,
              "shooting did not reach ||y(T)|| <= eps after " +
                  std::to_string(options.max_restarts) + " restarts (best " +
                  io::format_double(best_norm) + ")");
}

void write_trajectory_csv(std::ostream& out, const PiecewiseTrajectory& traj) {
  const std::size_t n = traj.grid.empty() ? 0 : traj.grid.front().x.size();
  out << "t";
  for (const char* prefix : {"x_", "y_", "u_"}) {
    for (std::size_t i = 1; i <= n; ++i) out << ',' << prefix << i;
  }
  out << '\n';
  for (std::size_t k = 0; k < traj.grid.size(); ++k) {
    const auto& p = traj.grid[k];
    out << io::format_double(p.t);
    for (double v : p.x) out << ',' << io::format_double(v);
    for (double v : p.y) out << ',' << io::format_double(v);
    for (int v : traj.controls[k]) out << ',' << v;
    out << '\n';
  }
}

nlohmann::json trajectory_sidecar(const PiecewiseTrajectory& traj) {
  nlohmann::json segments = nlohmann::json::array();
  for (const auto& s : traj.segments) {
    segments.push_back({{"t_start", s.t_start},
                        {"t_end", s.t_end},
                        {"control", s.control},
                        {"entry_state", s.entry_state},
                        {"entry_costate", s.entry_costate}});
  }
  const auto& last = traj.grid.back();
  double terminal = 0.0;
  for (double v : last.y) terminal = std::max(terminal, std::abs(v));
  return {{"segments", std::move(segments)},
          {"objective", traj.objective},
          {"terminal_costate_inf_norm", terminal},
          {"iterations", traj.info.iterations},
          {"restarts", traj.info.restarts}};
}

}  // namespace frmab
