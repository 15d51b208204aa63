#include "ddfeec/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ddfeec/errors.hpp"

namespace ddfeec {

double side_length(const Rect& r, Side s) {
    return (s == Side::Bottom || s == Side::Top) ? r.width() : r.height();
}

Point side_point(const Rect& r, Side s, double arc) {
    switch (s) {
        case Side::Bottom: return {r.x0 + arc, r.y0};
        case Side::Top: return {r.x0 + arc, r.y1};
        case Side::Left: return {r.x0, r.y0 + arc};
        case Side::Right: return {r.x1, r.y0 + arc};
    }
    return {};
}

double side_arc(const Rect& r, Side s, const Point& p) {
    return (s == Side::Bottom || s == Side::Top) ? p.x - r.x0 : p.y - r.y0;
}

double InteriorEdge::length() const { return std::hypot(b.x - a.x, b.y - a.y); }
double BoundaryEdge::length() const { return std::hypot(b.x - a.x, b.y - a.y); }

std::array<bool, 4> Decomposition::boundary_sides(int i) const {
    const int ix = i % nx, iy = i / nx;
    return {iy == 0, ix == nx - 1, iy == ny - 1, ix == 0};
}

int Decomposition::neighbor(int i, Side s) const {
    const int ix = i % nx, iy = i / nx;
    switch (s) {
        case Side::Bottom: return iy > 0 ? index(ix, iy - 1) : -1;
        case Side::Top: return iy + 1 < ny ? index(ix, iy + 1) : -1;
        case Side::Left: return ix > 0 ? index(ix - 1, iy) : -1;
        case Side::Right: return ix + 1 < nx ? index(ix + 1, iy) : -1;
    }
    return -1;
}

Decomposition build_decomposition(const Rect& domain, int nx, int ny) {
    if (nx < 1 || ny < 1) throw InvalidInput("decomposition grid must be at least 1x1");
    if (!(domain.x1 > domain.x0) || !(domain.y1 > domain.y0))
        throw InvalidInput("domain rectangle is empty or inverted");

    Decomposition d;
    d.domain = domain;
    d.nx = nx;
    d.ny = ny;
    std::vector<double> xs(nx + 1), ys(ny + 1);
    for (int i = 0; i <= nx; ++i) xs[i] = domain.x0 + domain.width() * i / nx;
    for (int j = 0; j <= ny; ++j) ys[j] = domain.y0 + domain.height() * j / ny;
    xs[nx] = domain.x1;
    ys[ny] = domain.y1;

    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) d.subdomains.push_back({xs[i], ys[j], xs[i + 1], ys[j + 1]});

    // vertical interfaces first, then horizontal
    for (int j = 0; j < ny; ++j)
        for (int i = 1; i < nx; ++i)
            d.interior_edges.push_back(
                {d.index(i - 1, j), d.index(i, j), {xs[i], ys[j]}, {xs[i], ys[j + 1]}, true});
    for (int j = 1; j < ny; ++j)
        for (int i = 0; i < nx; ++i)
            d.interior_edges.push_back(
                {d.index(i, j - 1), d.index(i, j), {xs[i], ys[j]}, {xs[i + 1], ys[j]}, false});

    for (int i = 0; i < nx; ++i)
        d.boundary_edges.push_back({d.index(i, 0), Side::Bottom, {xs[i], ys[0]}, {xs[i + 1], ys[0]}});
    for (int j = 0; j < ny; ++j)
        d.boundary_edges.push_back(
            {d.index(nx - 1, j), Side::Right, {xs[nx], ys[j]}, {xs[nx], ys[j + 1]}});
    for (int i = 0; i < nx; ++i)
        d.boundary_edges.push_back(
            {d.index(i, ny - 1), Side::Top, {xs[i], ys[ny]}, {xs[i + 1], ys[ny]}});
    for (int j = 0; j < ny; ++j)
        d.boundary_edges.push_back({d.index(0, j), Side::Left, {xs[0], ys[j]}, {xs[0], ys[j + 1]}});
    return d;
}

Rule1D gauss_legendre(int n) {
    if (n < 1) throw InvalidInput("Gauss rule needs at least one point");
    Rule1D r;
    r.nodes.resize(n);
    r.weights.resize(n);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = 0.0;
            for (int k = 1; k <= n; ++k) {
                const double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p2) / k;
            }
            dp = n * (z * p0 - p1) / (z * z - 1.0);
            const double dz = p0 / dp;
            z -= dz;
            if (std::abs(dz) < 1e-16) break;
        }
        const double w = 2.0 / ((1.0 - z * z) * dp * dp);
        r.nodes[i] = 0.5 * (1.0 - z);
        r.nodes[n - 1 - i] = 0.5 * (1.0 + z);
        r.weights[i] = r.weights[n - 1 - i] = 0.5 * w;
    }
    if (n % 2 == 1) r.nodes[n / 2] = 0.5;
    return r;
}

Rule1D composite_gauss(const std::vector<double>& breaks, int points_per_cell) {
    const Rule1D g = gauss_legendre(points_per_cell);
    Rule1D r;
    for (std::size_t c = 0; c + 1 < breaks.size(); ++c) {
        const double a = breaks[c], h = breaks[c + 1] - breaks[c];
        if (h <= 0.0) continue;
        for (int q = 0; q < points_per_cell; ++q) {
            r.nodes.push_back(a + h * g.nodes[q]);
            r.weights.push_back(h * g.weights[q]);
        }
    }
    return r;
}

std::vector<double> merge_breaks(std::vector<double> a, const std::vector<double>& b, double lo,
                                 double hi, double tol) {
    a.insert(a.end(), b.begin(), b.end());
    a.push_back(lo);
    a.push_back(hi);
    std::sort(a.begin(), a.end());
    std::vector<double> out;
    const double scale = std::max(1.0, hi - lo);
    for (double v : a) {
        if (v < lo - tol * scale || v > hi + tol * scale) continue;
        v = std::clamp(v, lo, hi);
        if (out.empty() || v - out.back() > tol * scale) out.push_back(v);
    }
    out.front() = lo;
    out.back() = hi;
    return out;
}

std::vector<double> uniform_breaks(double lo, double hi, int cells) {
    std::vector<double> b(cells + 1);
    for (int i = 0; i <= cells; ++i) b[i] = lo + (hi - lo) * i / cells;
    b[cells] = hi;
    return b;
}

QuadratureRule tensor_rule(const Rule1D& rx, const Rule1D& ry, int order) {
    QuadratureRule q;
    q.order = order;
    q.points.reserve(rx.nodes.size() * ry.nodes.size());
    for (std::size_t j = 0; j < ry.nodes.size(); ++j)
        for (std::size_t i = 0; i < rx.nodes.size(); ++i) {
            q.points.push_back({rx.nodes[i], ry.nodes[j]});
            q.weights.push_back(rx.weights[i] * ry.weights[j]);
        }
    return q;
}

QuadratureRule tensor_gauss_rule(int cells_per_axis, int points_per_cell) {
    if (cells_per_axis < 1 || points_per_cell < 1)
        throw InvalidInput("tensor_gauss_rule arguments must be >= 1");
    const Rule1D r = composite_gauss(uniform_breaks(0.0, 1.0, cells_per_axis), points_per_cell);
    return tensor_rule(r, r, 2 * points_per_cell - 1);
}

QuadratureRule map_rule(const QuadratureRule& unit, const Rect& r) {
    QuadratureRule q = unit;
    for (auto& p : q.points) p = {r.x0 + r.width() * p.x, r.y0 + r.height() * p.y};
    for (auto& w : q.weights) w *= r.area();
    return q;
}

}  // namespace ddfeec
