#pragma once

#include <span>
#include <vector>

#include "frmab/dynamics.hpp"

namespace frmab {

// Binary effort vector, one entry per project.
using Control = std::vector<int>;

// gamma_i at a fixed time: the gain in Hamiltonian from switching arm i on.
using IndexVector = std::vector<double>;

IndexVector index_values(const FrmabInstance& inst, std::span<const double> x,
                         std::span<const double> y);

// Optimal vertex of  max sum gamma_i u_i  s.t. 0 <= u <= 1, sum u <= m.
// Picks at most m of the largest strictly positive indices; ties at the cutoff
// go to the lower project index.
Control select_control(std::span<const double> gamma, int m);

// Throws Error(InfeasibleControl) if u is not binary or sum u > m, and
// Error(DimensionMismatch) on size mismatch.
double hamiltonian(const FrmabInstance& inst, std::span<const double> x,
                   std::span<const double> y, const Control& u);

// dy/dt = -dH/dx for each project under control u.
std::vector<double> costate_rhs(const FrmabInstance& inst,
                                std::span<const double> x,
                                std::span<const double> y, const Control& u);

}  // namespace frmab
