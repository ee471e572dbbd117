#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pvi/sde.hpp"

namespace pvi {

// Grid function u(t_k, x_j) on a truncated 1D space-time grid. Shared by the
// backward chain solver and the finite-difference solvers. `mass`, when
// present, is the companion transport of the cumulative constraint mass
// (penalization integral, or projection amount for the projected scheme),
// with the same layout as `values`.
struct ValueSurface {
    TimeGrid grid;
    std::vector<double> xs;
    std::vector<double> values; // (n_steps+1) x xs.size(), time-major
    std::string boundary;
    double alpha = 0.0;
    std::string problem;
    std::optional<std::vector<double>> mass;

    int n_times() const { return grid.n_steps + 1; }
    int n_nodes() const { return static_cast<int>(xs.size()); }
    double& at(int k, int j) { return values[static_cast<std::size_t>(k) * xs.size() + j]; }
    double at(int k, int j) const { return values[static_cast<std::size_t>(k) * xs.size() + j]; }

    // Bilinear interpolation; clamps to the grid box.
    double eval(double t, double x) const;
    double eval_mass(double t, double x) const;

    void check_finite() const;
};

// CSV format: header "t,x,u", one row per node, 17-significant-digit floats.
void write_surface_csv(const std::string& path, const ValueSurface& s);
ValueSurface read_surface_csv(const std::string& path);

} // namespace pvi
