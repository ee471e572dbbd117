#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "pvi/problem.hpp"

namespace pvi {

struct TimeGrid {
    double t0 = 0.0;
    double t_end = 1.0;
    int n_steps = 1;

    TimeGrid() = default;
    TimeGrid(double t0_, double t_end_, int n_steps_) : t0(t0_), t_end(t_end_), n_steps(n_steps_) {
        if (!(t0 < t_end) || n_steps < 1)
            throw ConfigError("TimeGrid: need t0 < t_end and n_steps >= 1");
    }
    double dt() const { return (t_end - t0) / n_steps; }
    double time(int k) const { return t0 + k * dt(); }
};

// Forward Euler ensemble: states are [n_paths x (n_steps+1) x dim],
// increments [n_paths x n_steps x dim], both flat row-major. The increments
// are exactly the Gaussians used to produce the states, so any run can be
// replayed bit for bit.
struct PathEnsemble {
    TimeGrid grid;
    int dim = 1;
    int n_paths = 0;
    std::uint64_t seed = 0;
    std::vector<double> states;
    std::vector<double> increments;

    double state(int p, int k, int c) const {
        return states[(static_cast<std::size_t>(p) * (grid.n_steps + 1) + k) * dim + c];
    }
    double increment(int p, int k, int c) const {
        return increments[(static_cast<std::size_t>(p) * grid.n_steps + k) * dim + c];
    }
    const double* state_ptr(int p, int k) const {
        return states.data() + (static_cast<std::size_t>(p) * (grid.n_steps + 1) + k) * dim;
    }
    const double* increment_ptr(int p, int k) const {
        return increments.data() + (static_cast<std::size_t>(p) * grid.n_steps + k) * dim;
    }
};

// 1D deterministic Markov chain matching the Euler step's local mean b*dt and
// variance sigma^2*dt at every node (trinomial interior stencil, one-sided at
// the boundary). Each branch also carries the Brownian increment it
// represents, (delta_x - b*dt)/sigma, which is how the backward solver reads
// z off the chain. Boundary nodes whose one-sided moment match is infeasible
// are frozen in place (p_stay = 1) and counted in frozen_boundary_nodes.
struct ChainDiscretization {
    TimeGrid grid;
    double x_min = 0.0, x_max = 0.0, dx = 0.0;
    int n_space = 0; // number of intervals; nodes are 0..n_space
    std::vector<std::array<int, 3>> targets;
    std::vector<std::array<double, 3>> probs;
    std::vector<std::array<double, 3>> dw;
    int frozen_boundary_nodes = 0;

    int n_nodes() const { return n_space + 1; }
    double x(int j) const { return x_min + j * dx; }
    std::size_t idx(int k, int j) const {
        return static_cast<std::size_t>(k) * n_nodes() + j;
    }
};

// Euler-Maruyama ensemble; bitwise deterministic given (seed, n_paths, grid)
// regardless of PVI_THREADS.
PathEnsemble simulate_paths(const CoefficientSet& spec, double t0, VecRef x0,
                            const TimeGrid& grid, int n_paths, std::uint64_t seed);

ChainDiscretization build_chain(const CoefficientSet& spec, const TimeGrid& grid,
                                double x_min, double x_max, int n_space);

// Binary ensemble dump: magic "PVI1", then dim, n_paths, n_steps, seed as
// little-endian 64-bit integers, then states and increments as row-major
// 64-bit floats. The header does not carry the time interval, so loading
// requires the grid's (t0, t_end).
void save_ensemble(const std::string& path, const PathEnsemble& ensemble);
PathEnsemble load_ensemble(const std::string& path, double t0, double t_end);

} // namespace pvi
