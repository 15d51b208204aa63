#include <doctest.h>

#include <cmath>
#include <random>

#include "ddfeec/errors.hpp"
#include "ddfeec/expr.hpp"
#include "ddfeec/geometry.hpp"
#include "ddfeec/problem.hpp"

using namespace ddfeec;

namespace {

double integrate(const QuadratureRule& q, auto&& f) {
    double s = 0.0;
    for (std::size_t k = 0; k < q.points.size(); ++k) s += q.weights[k] * f(q.points[k]);
    return s;
}

}  // namespace

TEST_CASE("2x2 decomposition of [0,2]^2") {
    const auto d = build_decomposition({0, 0, 2, 2}, 2, 2);
    REQUIRE(d.subdomains.size() == 4);
    REQUIRE(d.interior_edges.size() == 4);
    // top row: subdomains 2 and 3 share x = 1, y in [1,2]
    bool found = false;
    for (const auto& e : d.interior_edges)
        if (e.left == 2 && e.right == 3) {
            found = true;
            CHECK(e.vertical);
            CHECK(e.a.x == 1.0);
            CHECK(e.b.x == 1.0);
            CHECK(e.a.y == 1.0);
            CHECK(e.b.y == 2.0);
        }
    CHECK(found);
}

TEST_CASE("edge counts") {
    CHECK(build_decomposition({0, 0, 1, 1}, 1, 1).interior_edges.empty());
    CHECK(build_decomposition({0, 0, 1, 1}, 3, 3).interior_edges.size() == 12);
    for (int nx = 1; nx <= 8; ++nx)
        for (int ny = 1; ny <= 8; ++ny) {
            const auto d = build_decomposition({-1, 0.5, 2, 3}, nx, ny);
            CHECK(d.interior_edges.size() == std::size_t(ny * (nx - 1) + nx * (ny - 1)));
            CHECK(d.boundary_edges.size() == std::size_t(2 * (nx + ny)));
        }
}

TEST_CASE("tiling is complete and edges are consistent") {
    std::mt19937 rng(11);
    std::uniform_int_distribution<int> n(1, 8);
    for (int trial = 0; trial < 20; ++trial) {
        const Rect dom{-0.3, 1.0, 2.7, 1.4};
        const auto d = build_decomposition(dom, n(rng), n(rng));
        double area = 0.0;
        for (const auto& r : d.subdomains) area += r.area();
        CHECK(std::abs(area - dom.area()) <= 1e-12 * dom.area());
        for (std::size_t i = 0; i < d.subdomains.size(); ++i)
            for (std::size_t j = i + 1; j < d.subdomains.size(); ++j) {
                const Rect &a = d.subdomains[i], &b = d.subdomains[j];
                const double ox = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
                const double oy = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
                CHECK_FALSE((ox > 1e-12 && oy > 1e-12));
            }
        for (const auto& e : d.interior_edges) {
            CHECK(e.left != e.right);
            CHECK((e.a.x < e.b.x || (e.a.x == e.b.x && e.a.y < e.b.y)));
        }
        for (int i = 0; i < int(d.subdomains.size()); ++i)
            for (Side s : kSides) {
                const int j = d.neighbor(i, s);
                CHECK((j < 0) == d.boundary_sides(i)[int(s)]);
                if (j >= 0) CHECK(d.neighbor(j, Side((int(s) + 2) % 4)) == i);
            }
    }
}

TEST_CASE("invalid decompositions") {
    CHECK_THROWS_AS(build_decomposition({0, 0, 1, 1}, 0, 2), InvalidInput);
    CHECK_THROWS_AS(build_decomposition({1, 0, 0, 1}, 2, 2), InvalidInput);
}

TEST_CASE("side arc length round trip") {
    const Rect r{1, 2, 4, 3};
    for (Side s : kSides)
        for (double t : {0.0, 0.3, 1.0}) {
            const double arc = t * side_length(r, s);
            CHECK(side_arc(r, s, side_point(r, s, arc)) == doctest::Approx(arc).epsilon(1e-14));
        }
}

TEST_CASE("tensor Gauss rules") {
    const auto mid = tensor_gauss_rule(1, 1);
    REQUIRE(mid.points.size() == 1);
    CHECK(mid.points[0].x == doctest::Approx(0.5));
    CHECK(mid.weights[0] == doctest::Approx(1.0));

    const auto q2 = tensor_gauss_rule(1, 2);
    CHECK(q2.points.size() == 4);
    CHECK(integrate(q2, [](const Point& p) { return p.x * p.y; }) == doctest::Approx(0.25).epsilon(1e-15));

    const auto q8 = tensor_gauss_rule(8, 3);
    CHECK(std::abs(integrate(q8, [](const Point& p) { return std::cos(M_PI * p.x) * std::sin(M_PI * p.y); })) < 1e-10);

    for (int n = 1; n <= 5; ++n) {
        const auto q = tensor_gauss_rule(2, n);
        double wsum = 0.0;
        for (double w : q.weights) {
            CHECK(w > 0.0);
            wsum += w;
        }
        CHECK(std::abs(wsum - 1.0) <= 1e-14);
        CHECK(q.order == 2 * n - 1);
        for (int a = 0; a <= q.order; ++a)
            for (int b = 0; b <= q.order; ++b) {
                const double v = integrate(q, [&](const Point& p) { return std::pow(p.x, a) * std::pow(p.y, b); });
                CHECK(std::abs(v - 1.0 / ((a + 1) * (b + 1))) <= 1e-13);
            }
    }
}

TEST_CASE("merged breakpoints drop near duplicates") {
    const auto m = merge_breaks({0.0, 0.5, 1.0}, {0.25, 0.5 + 1e-14, 2.0}, 0.0, 1.0);
    REQUIRE(m.size() == 4);
    CHECK(m[1] == 0.25);
    CHECK(m.back() == 1.0);
}

TEST_CASE("expression grammar") {
    auto ev = [](const char* s, double x = 0.0, double y = 0.0) { return Expression::parse(s)(x, y); };
    CHECK(ev("1 + 2*3") == 7.0);
    CHECK(ev("2^3^2") == 512.0);
    CHECK(ev("-x^2", 3.0) == -9.0);
    CHECK(ev("if(x < 0.5, 1, 2)", 0.2) == 1.0);
    CHECK(ev("if(x < 0.5, 1, 2)", 0.7) == 2.0);
    CHECK(ev("max(x, y) - min(x, y)", 1.0, 4.0) == 3.0);
    CHECK(ev("cos(pi*x)", 1.0) == doctest::Approx(-1.0));
    CHECK(ev("floor(y) - 2*floor(y/2)", 0.0, 3.5) == 1.0);
    CHECK_THROWS(Expression::parse("1 +"));
    CHECK_THROWS(Expression::parse("foo(x)"));
}

TEST_CASE("problem parsing") {
    const auto j = nlohmann::json::parse(R"({
        "K": {"regions": [{"rect": [0, 0, 0.5, 1], "K": 3}, {"circle": [0.75, 0.5, 0.1], "K": {"xx": 2, "xy": 0.5, "yy": 4}}],
              "default": 1},
        "f": "x*y", "g": 2, "breaks_y": [0.25],
        "exact": {"p": "x", "px": 1, "py": 0}})");
    const auto p = parse_problem(j);
    CHECK(p.K({0.25, 0.5})(0, 0) == 3.0);
    CHECK(p.K({0.75, 0.5})(0, 1) == 0.5);
    CHECK(p.K({0.9, 0.9})(1, 1) == 1.0);
    CHECK(p.f({2, 3}) == 6.0);
    CHECK(p.g({0, 0}) == 2.0);
    CHECK(p.exact->grad({0.3, 0.3})[0] == 1.0);
    CHECK(std::find(p.breaks_x.begin(), p.breaks_x.end(), 0.5) != p.breaks_x.end());
    CHECK(std::find(p.breaks_y.begin(), p.breaks_y.end(), 0.25) != p.breaks_y.end());
}

TEST_CASE("conductivity checks") {
    auto p = make_problem([](const Point&) { return Mat2{{1.0, 0.3}, {0.2, 1.0}}; }, nullptr, nullptr);
    CHECK_THROWS_AS(check_conductivity(p, {{0.5, 0.5}}), InvalidInput);
    p.K = [](const Point&) { return Mat2{{1.0, 2.0}, {2.0, 1.0}}; };
    CHECK_THROWS_AS(check_conductivity(p, {{0.5, 0.5}}), InvalidInput);
    p.K = [](const Point&) { return Mat2{{2.0, 0.5}, {0.5, 1.0}}; };
    CHECK_NOTHROW(check_conductivity(p, {{0.5, 0.5}}));
}

TEST_CASE("Neumann compatibility") {
    // f = 1 on the unit square with outward flux -1/4 per unit length
    // default quadrature sums ~1e5 terms, so the defect is roundoff at the 1e-12 level
    auto p = make_problem([](const Point&) { return Mat2::Identity().eval(); }, [](const Point&) { return 1.0; },
                          [](const Point&) { return -0.25; }, BcKind::Neumann);
    CHECK(std::abs(compatibility_defect(p, {0, 0, 1, 1})) < 1e-11);
    p.g = [](const Point&) { return 0.0; };
    CHECK(compatibility_defect(p, {0, 0, 1, 1}) == doctest::Approx(1.0));
}
