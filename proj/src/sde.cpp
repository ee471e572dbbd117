#include "pvi/sde.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <sstream>

#include "pvi/parallel.hpp"
#include "pvi/rng.hpp"

namespace pvi {

namespace {

constexpr std::size_t kPathBlock = 1024;

void put_u64_le(std::FILE* f, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i)
        b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    std::fwrite(b, 1, 8, f);
}

std::uint64_t get_u64_le(std::FILE* f) {
    unsigned char b[8];
    if (std::fread(b, 1, 8, f) != 8)
        throw Error("load_ensemble: truncated header");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
        v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

} // namespace

PathEnsemble simulate_paths(const CoefficientSet& spec, double t0, VecRef x0,
                            const TimeGrid& grid, int n_paths, std::uint64_t seed) {
    spec.check();
    if (n_paths < 1)
        throw ConfigError("simulate_paths: n_paths must be >= 1");
    if (std::abs(grid.t0 - t0) > 1e-12)
        throw ConfigError("simulate_paths: grid.t0 must equal t0");
    if (std::abs(grid.t_end - spec.horizon) > 1e-12)
        throw ConfigError("simulate_paths: grid.t_end must equal spec.horizon");
    if (x0.size() != spec.dim)
        throw ConfigError("simulate_paths: x0 has wrong dimension");

    const int d = spec.dim;
    const int n = grid.n_steps;
    const double dt = grid.dt();
    const double sqrt_dt = std::sqrt(dt);

    PathEnsemble e;
    e.grid = grid;
    e.dim = d;
    e.n_paths = n_paths;
    e.seed = seed;
    e.states.resize(static_cast<std::size_t>(n_paths) * (n + 1) * d);
    e.increments.resize(static_cast<std::size_t>(n_paths) * n * d);

    const CounterRng rng{seed};
    parallel_blocks(static_cast<std::size_t>(n_paths), kPathBlock,
                    [&](std::size_t begin, std::size_t end, std::size_t) {
        Vec x(d), dwv(d);
        for (std::size_t p = begin; p < end; ++p) {
            x = x0;
            double* srow = e.states.data() + p * (n + 1) * d;
            double* irow = e.increments.data() + p * static_cast<std::size_t>(n) * d;
            std::memcpy(srow, x.data(), sizeof(double) * d);
            for (int k = 0; k < n; ++k) {
                const double t = grid.time(k);
                for (int c = 0; c < d; ++c)
                    dwv[c] = sqrt_dt * rng.gaussian(p, k, c);
                const Vec b = spec.drift(t, x);
                const Mat s = spec.diffusion(t, x);
                if (s.rows() != d || s.cols() != d)
                    throw ShapeError("simulate_paths: diffusion must return a dim x dim matrix");
                x += b * dt + s * dwv;
                if (!x.allFinite()) {
                    std::ostringstream os;
                    os << "simulate_paths: non-finite state at path " << p << ", step " << k + 1;
                    throw SimulationError(os.str());
                }
                std::memcpy(irow + static_cast<std::size_t>(k) * d, dwv.data(), sizeof(double) * d);
                std::memcpy(srow + static_cast<std::size_t>(k + 1) * d, x.data(), sizeof(double) * d);
            }
        }
    });
    return e;
}

ChainDiscretization build_chain(const CoefficientSet& spec, const TimeGrid& grid,
                                double x_min, double x_max, int n_space) {
    spec.check();
    if (spec.dim != 1)
        throw ShapeError("build_chain: requires spec.dim == 1");
    if (!(x_min < x_max) || n_space < 2)
        throw ConfigError("build_chain: need x_min < x_max and n_space >= 2");

    ChainDiscretization c;
    c.grid = grid;
    c.x_min = x_min;
    c.x_max = x_max;
    c.n_space = n_space;
    c.dx = (x_max - x_min) / n_space;

    const int nn = c.n_nodes();
    const double dt = grid.dt();
    const double tol = 1e-12;
    c.targets.resize(static_cast<std::size_t>(grid.n_steps) * nn);
    c.probs.resize(c.targets.size());
    c.dw.resize(c.targets.size());

    Vec xv(1);
    auto clip = [&](double p, int k, int j) {
        if (p < 0.0) {
            if (p < -tol) {
                std::ostringstream os;
                os << "build_chain: probability " << p << " outside [0,1] at step " << k
                   << ", node " << j << " (x=" << c.x(j)
                   << "); use a smaller dt or a different n_space";
                throw DiscretizationError(os.str());
            }
            return 0.0;
        }
        if (p > 1.0) {
            if (p > 1.0 + tol) {
                std::ostringstream os;
                os << "build_chain: probability " << p << " outside [0,1] at step " << k
                   << ", node " << j << " (x=" << c.x(j)
                   << "); use a smaller dt or a different n_space";
                throw DiscretizationError(os.str());
            }
            return 1.0;
        }
        return p;
    };

    for (int k = 0; k < grid.n_steps; ++k) {
        const double t = grid.time(k);
        for (int j = 0; j < nn; ++j) {
            xv[0] = c.x(j);
            const double m = spec.drift(t, xv)[0] * dt;      // local mean
            const double sig = spec.diffusion(t, xv)(0, 0);
            const double v = sig * sig * dt;                 // local variance
            if (!std::isfinite(m) || !std::isfinite(v))
                throw EvaluationError("build_chain: non-finite coefficient at node");
            const std::size_t id = c.idx(k, j);
            const double second = (v + m * m) / (c.dx * c.dx); // E[dX^2]/dx^2

            if (j > 0 && j < nn - 1) {
                double pu = 0.5 * (second + m / c.dx);
                double pd = 0.5 * (second - m / c.dx);
                double ps = 1.0 - pu - pd;
                pu = clip(pu, k, j);
                pd = clip(pd, k, j);
                ps = clip(ps, k, j);
                const double sum = pu + pd + ps;
                c.targets[id] = {j - 1, j, j + 1};
                c.probs[id] = {pd / sum, ps / sum, pu / sum};
                const double dxs[3] = {-c.dx, 0.0, c.dx};
                for (int b = 0; b < 3; ++b)
                    c.dw[id][b] = sig > 0.0 ? (dxs[b] - m) / sig : 0.0;
                continue;
            }

            // Boundary: one-sided second-order stencil pointing inward. The
            // two-moment match has a solution with nonnegative weights only
            // when the drift is strong relative to the diffusion; otherwise
            // freeze the node (pure driver dynamics at the edge row).
            const int dir = (j == 0) ? 1 : -1;
            const double a1 = dir * m / c.dx;          // p1 + 2 p2
            const double p2 = 0.5 * (second - a1);
            const double p1 = a1 - 2.0 * p2;
            const double p0 = 1.0 - p1 - p2;
            if (p1 >= -tol && p2 >= -tol && p0 >= -tol && p1 <= 1.0 + tol && p2 <= 1.0 + tol &&
                p0 <= 1.0 + tol) {
                const double q0 = clip(p0, k, j), q1 = clip(p1, k, j), q2 = clip(p2, k, j);
                const double sum = q0 + q1 + q2;
                c.targets[id] = {j, j + dir, j + 2 * dir};
                c.probs[id] = {q0 / sum, q1 / sum, q2 / sum};
                const double dxs[3] = {0.0, dir * c.dx, dir * 2.0 * c.dx};
                for (int b = 0; b < 3; ++b)
                    c.dw[id][b] = sig > 0.0 ? (dxs[b] - m) / sig : 0.0;
            } else {
                c.targets[id] = {j, j, j};
                c.probs[id] = {1.0, 0.0, 0.0};
                c.dw[id] = {0.0, 0.0, 0.0};
                ++c.frozen_boundary_nodes;
            }
        }
    }
    return c;
}

void save_ensemble(const std::string& path, const PathEnsemble& e) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f)
        throw Error("save_ensemble: cannot open " + path);
    std::fwrite("PVI1", 1, 4, f);
    put_u64_le(f, static_cast<std::uint64_t>(e.dim));
    put_u64_le(f, static_cast<std::uint64_t>(e.n_paths));
    put_u64_le(f, static_cast<std::uint64_t>(e.grid.n_steps));
    put_u64_le(f, e.seed);
    std::fwrite(e.states.data(), sizeof(double), e.states.size(), f);
    std::fwrite(e.increments.data(), sizeof(double), e.increments.size(), f);
    std::fclose(f);
}

PathEnsemble load_ensemble(const std::string& path, double t0, double t_end) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f)
        throw Error("load_ensemble: cannot open " + path);
    char magic[4];
    if (std::fread(magic, 1, 4, f) != 4 || std::memcmp(magic, "PVI1", 4) != 0) {
        std::fclose(f);
        throw Error("load_ensemble: bad magic in " + path);
    }
    PathEnsemble e;
    try {
        e.dim = static_cast<int>(get_u64_le(f));
        e.n_paths = static_cast<int>(get_u64_le(f));
        const int n_steps = static_cast<int>(get_u64_le(f));
        e.seed = get_u64_le(f);
        e.grid = TimeGrid(t0, t_end, n_steps);
        e.states.resize(static_cast<std::size_t>(e.n_paths) * (n_steps + 1) * e.dim);
        e.increments.resize(static_cast<std::size_t>(e.n_paths) * n_steps * e.dim);
        if (std::fread(e.states.data(), sizeof(double), e.states.size(), f) != e.states.size() ||
            std::fread(e.increments.data(), sizeof(double), e.increments.size(), f) !=
                e.increments.size())
            throw Error("load_ensemble: truncated payload in " + path);
    } catch (...) {
        std::fclose(f);
        throw;
    }
    std::fclose(f);
    return e;
}

} // namespace pvi
