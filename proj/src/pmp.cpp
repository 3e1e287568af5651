#include "frmab/pmp.hpp"

#include <algorithm>
#include <numeric>

#include "frmab/errors.hpp"

namespace frmab {

namespace {

void check_sizes(const FrmabInstance& inst, std::size_t x, std::size_t y) {
  if (x != inst.n() || y != inst.n()) {
    throw Error(ErrorKind::DimensionMismatch, "state/costate length differs from n");
  }
}

void check_feasible(const FrmabInstance& inst, const Control& u) {
  if (u.size() != inst.n()) {
    throw Error(ErrorKind::DimensionMismatch, "control length differs from n");
  }
  int total = 0;
  for (int v : u) {
    if (v != 0 && v != 1) throw Error(ErrorKind::InfeasibleControl, "control not binary");
    total += v;
  }
  if (total > inst.budget) {
    throw Error(ErrorKind::InfeasibleControl, "control exceeds budget");
  }
}

double phi(const ProjectDynamics& d, double x, int u) { return state_rate(d, x, u); }

}  // namespace

IndexVector index_values(const FrmabInstance& inst, std::span<const double> x,
                         std::span<const double> y) {
  check_sizes(inst, x.size(), y.size());
  IndexVector gamma(inst.n());
  for (std::size_t i = 0; i < inst.n(); ++i) {
    const auto& d = inst.projects[i];
    gamma[i] = (d.r1 - d.r0) * x[i] - (d.c1 - d.c0) +
               y[i] * (phi(d, x[i], 1) - phi(d, x[i], 0));
  }
  return gamma;
}

Control select_control(std::span<const double> gamma, int m) {
  Control u(gamma.size(), 0);
  std::vector<std::size_t> order(gamma.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  // stable_sort keeps lower indices first among equal values.
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return gamma[a] > gamma[b]; });
  int taken = 0;
  for (std::size_t i : order) {
    if (taken >= m || !(gamma[i] > 0.0)) break;
    u[i] = 1;
    ++taken;
  }
  return u;
}

double hamiltonian(const FrmabInstance& inst, std::span<const double> x,
                   std::span<const double> y, const Control& u) {
  check_sizes(inst, x.size(), y.size());
  check_feasible(inst, u);
  double h = 0.0;
  for (std::size_t i = 0; i < inst.n(); ++i) {
    const auto& d = inst.projects[i];
    h += reward_rate(d, x[i], u[i]) + y[i] * state_rate(d, x[i], u[i]);
  }
  return h;
}

std::vector<double> costate_rhs(const FrmabInstance& inst,
                                std::span<const double> x,
                                std::span<const double> y, const Control& u) {
  check_sizes(inst, x.size(), y.size());
  check_feasible(inst, u);
  std::vector<double> out(inst.n());
  for (std::size_t i = 0; i < inst.n(); ++i) {
    out[i] = costate_rate(inst.projects[i], x[i], y[i], u[i]);
  }
  return out;
}

}  // namespace frmab
