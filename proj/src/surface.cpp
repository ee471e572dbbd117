#include "pvi/surface.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace pvi {

namespace {

double interp(const ValueSurface& s, const std::vector<double>& grid_values, double t, double x) {
    const int nt = s.n_times(), nx = s.n_nodes();
    const double dt = s.grid.dt();
    double ft = (t - s.grid.t0) / dt;
    ft = std::clamp(ft, 0.0, static_cast<double>(nt - 1));
    int k = std::min(static_cast<int>(ft), nt - 2);
    if (nt == 1)
        k = 0;
    const double wt = std::clamp(ft - k, 0.0, 1.0);

    const double dx = (s.xs.back() - s.xs.front()) / (nx - 1);
    double fx = (x - s.xs.front()) / dx;
    fx = std::clamp(fx, 0.0, static_cast<double>(nx - 1));
    int j = std::min(static_cast<int>(fx), nx - 2);
    const double wx = std::clamp(fx - j, 0.0, 1.0);

    auto v = [&](int kk, int jj) {
        return grid_values[static_cast<std::size_t>(kk) * nx + jj];
    };
    const int k1 = std::min(k + 1, nt - 1);
    return (1 - wt) * ((1 - wx) * v(k, j) + wx * v(k, j + 1)) +
           wt * ((1 - wx) * v(k1, j) + wx * v(k1, j + 1));
}

} // namespace

double ValueSurface::eval(double t, double x) const { return interp(*this, values, t, x); }

double ValueSurface::eval_mass(double t, double x) const {
    if (!mass)
        throw Error("ValueSurface: no mass companion stored");
    return interp(*this, *mass, t, x);
}

void ValueSurface::check_finite() const {
    for (double v : values)
        if (!std::isfinite(v))
            throw DivergenceError("ValueSurface: non-finite value");
}

void write_surface_csv(const std::string& path, const ValueSurface& s) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f)
        throw Error("write_surface_csv: cannot open " + path);
    std::fputs("t,x,u\n", f);
    char buf[128];
    for (int k = 0; k < s.n_times(); ++k) {
        const double t = s.grid.time(k);
        for (int j = 0; j < s.n_nodes(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", t, s.xs[j], s.at(k, j));
            std::fputs(buf, f);
        }
    }
    std::fclose(f);
}

ValueSurface read_surface_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw Error("read_surface_csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line != "t,x,u")
        throw Error("read_surface_csv: bad header in " + path);

    std::vector<double> ts, xs, us;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        std::istringstream ls(line);
        double t, x, u;
        char c1, c2;
        if (!(ls >> t >> c1 >> x >> c2 >> u) || c1 != ',' || c2 != ',')
            throw Error("read_surface_csv: bad row in " + path);
        ts.push_back(t);
        xs.push_back(x);
        us.push_back(u);
    }
    if (ts.empty())
        throw Error("read_surface_csv: no data in " + path);

    // Recover the rectangular layout: rows are grouped by time.
    std::size_t nx = 1;
    while (nx < ts.size() && ts[nx] == ts[0])
        ++nx;
    if (ts.size() % nx != 0)
        throw Error("read_surface_csv: ragged grid in " + path);
    const std::size_t nt = ts.size() / nx;

    ValueSurface s;
    s.grid = TimeGrid(ts.front(), ts.back(), static_cast<int>(nt - 1));
    s.xs.assign(xs.begin(), xs.begin() + nx);
    s.values = std::move(us);
    return s;
}

} // namespace pvi
