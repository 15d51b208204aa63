#pragma once

#include <array>
#include <vector>

namespace ddfeec {

struct Point {
    double x = 0.0;
    double y = 0.0;
};

struct Rect {
    double x0 = 0.0, y0 = 0.0, x1 = 1.0, y1 = 1.0;

    double width() const { return x1 - x0; }
    double height() const { return y1 - y0; }
    double area() const { return width() * height(); }
    bool contains(const Point& p, double tol = 1e-12) const {
        return p.x >= x0 - tol && p.x <= x1 + tol && p.y >= y0 - tol && p.y <= y1 + tol;
    }
};

// Counterclockwise. Arc length on a side runs in the direction of increasing coordinate.
enum class Side { Bottom = 0, Right = 1, Top = 2, Left = 3 };

inline constexpr std::array<Side, 4> kSides = {Side::Bottom, Side::Right, Side::Top, Side::Left};

double side_length(const Rect& r, Side s);
Point side_point(const Rect& r, Side s, double arc);
// Arc position of p along side s (p assumed on that side).
double side_arc(const Rect& r, Side s, const Point& p);

struct InteriorEdge {
    int left = -1;   // west or south subdomain
    int right = -1;  // east or north subdomain
    Point a, b;      // a < b lexicographically
    bool vertical = false;
    double length() const;
};

struct BoundaryEdge {
    int owner = -1;
    Side side = Side::Bottom;
    Point a, b;
    double length() const;
};

struct Decomposition {
    Rect domain;
    int nx = 1, ny = 1;
    std::vector<Rect> subdomains;  // id = iy * nx + ix
    std::vector<InteriorEdge> interior_edges;
    std::vector<BoundaryEdge> boundary_edges;

    int index(int ix, int iy) const { return iy * nx + ix; }
    // Which sides of subdomain i lie on the outer boundary.
    std::array<bool, 4> boundary_sides(int i) const;
    // Neighbor across side s, or -1.
    int neighbor(int i, Side s) const;
};

Decomposition build_decomposition(const Rect& domain, int nx, int ny);

struct Rule1D {
    std::vector<double> nodes;
    std::vector<double> weights;
};

// Gauss-Legendre rule with n points on [0,1].
Rule1D gauss_legendre(int n);
// Composite Gauss rule on the cells delimited by sorted breakpoints.
Rule1D composite_gauss(const std::vector<double>& breaks, int points_per_cell);
// Merge breakpoint lists, dropping near-duplicates, restricted to [lo, hi].
std::vector<double> merge_breaks(std::vector<double> a, const std::vector<double>& b, double lo,
                                 double hi, double tol = 1e-12);
std::vector<double> uniform_breaks(double lo, double hi, int cells);

struct QuadratureRule {
    std::vector<Point> points;
    std::vector<double> weights;
    int order = 0;
};

QuadratureRule tensor_gauss_rule(int cells_per_axis, int points_per_cell);
QuadratureRule tensor_rule(const Rule1D& rx, const Rule1D& ry, int order);
QuadratureRule map_rule(const QuadratureRule& unit, const Rect& r);

}  // namespace ddfeec
