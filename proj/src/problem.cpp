#include "ddfeec/problem.hpp"

#include <cmath>

#include "ddfeec/errors.hpp"
#include "ddfeec/expr.hpp"

namespace ddfeec {

using nlohmann::json;

ProblemSpec make_problem(TensorField K, ScalarField f, ScalarField g, BcKind bc) {
    ProblemSpec p;
    p.K = std::move(K);
    p.f = std::move(f);
    p.g = std::move(g);
    p.bc = bc;
    return p;
}

void check_conductivity(const ProblemSpec& problem, const std::vector<Point>& points, double tol) {
    for (const auto& x : points) {
        const Mat2 k = problem.K(x);
        const double scale = std::max(1.0, k.cwiseAbs().maxCoeff());
        if (std::abs(k(0, 1) - k(1, 0)) > tol * scale)
            throw InvalidInput("conductivity is not symmetric at (" + std::to_string(x.x) + ", " +
                               std::to_string(x.y) + ")");
        const double tr = k.trace(), det = k.determinant();
        const double disc = std::sqrt(std::max(0.0, 0.25 * tr * tr - det));
        const double lmin = 0.5 * tr - disc;
        if (!(lmin > tol * scale))
            throw InvalidInput("conductivity is not positive definite at (" + std::to_string(x.x) +
                               ", " + std::to_string(x.y) + ")");
    }
}

double compatibility_defect(const ProblemSpec& problem, const Rect& domain, int cells) {
    std::vector<double> bx = merge_breaks(uniform_breaks(domain.x0, domain.x1, cells),
                                          problem.breaks_x, domain.x0, domain.x1);
    std::vector<double> by = merge_breaks(uniform_breaks(domain.y0, domain.y1, cells),
                                          problem.breaks_y, domain.y0, domain.y1);
    const Rule1D rx = composite_gauss(bx, 4), ry = composite_gauss(by, 4);
    double total = 0.0;
    for (std::size_t j = 0; j < ry.nodes.size(); ++j)
        for (std::size_t i = 0; i < rx.nodes.size(); ++i)
            total += rx.weights[i] * ry.weights[j] * problem.f({rx.nodes[i], ry.nodes[j]});
    for (std::size_t i = 0; i < rx.nodes.size(); ++i)
        total += rx.weights[i] * (problem.g({rx.nodes[i], domain.y0}) + problem.g({rx.nodes[i], domain.y1}));
    for (std::size_t j = 0; j < ry.nodes.size(); ++j)
        total += ry.weights[j] * (problem.g({domain.x0, ry.nodes[j]}) + problem.g({domain.x1, ry.nodes[j]}));
    return total;
}

ScalarField parse_scalar(const json& j) {
    if (j.is_number()) {
        const double v = j.get<double>();
        return [v](const Point&) { return v; };
    }
    if (j.is_string()) {
        const Expression e = Expression::parse(j.get<std::string>());
        return [e](const Point& p) { return e(p.x, p.y); };
    }
    throw InvalidInput("scalar field must be a number or an expression string");
}

namespace {

TensorField parse_tensor_value(const json& j) {
    if (j.is_number() || j.is_string()) {
        ScalarField s = parse_scalar(j);
        return [s](const Point& p) { return Mat2(s(p) * Mat2::Identity()); };
    }
    if (j.is_array()) {
        if (j.size() != 2 || j[0].size() != 2 || j[1].size() != 2)
            throw InvalidInput("conductivity matrix must be 2x2");
        ScalarField a = parse_scalar(j[0][0]), b = parse_scalar(j[0][1]), c = parse_scalar(j[1][0]),
                    d = parse_scalar(j[1][1]);
        return [a, b, c, d](const Point& p) {
            Mat2 m;
            m << a(p), b(p), c(p), d(p);
            return m;
        };
    }
    if (j.is_object() && j.contains("xx")) {
        ScalarField a = parse_scalar(j.at("xx")), b = parse_scalar(j.value("xy", json(0.0))),
                    d = parse_scalar(j.at("yy"));
        return [a, b, d](const Point& p) {
            Mat2 m;
            m << a(p), b(p), b(p), d(p);
            return m;
        };
    }
    throw InvalidInput("unrecognized conductivity value");
}

}  // namespace

TensorField parse_conductivity(const json& j, std::vector<double>* breaks_x,
                               std::vector<double>* breaks_y) {
    if (!(j.is_object() && j.contains("regions"))) return parse_tensor_value(j);

    struct Region {
        bool circle = false;
        double a = 0, b = 0, c = 0, d = 0;
        TensorField K;
    };
    std::vector<Region> regions;
    for (const auto& r : j.at("regions")) {
        Region reg;
        reg.K = parse_tensor_value(r.at("K"));
        if (r.contains("rect")) {
            const auto v = r.at("rect").get<std::vector<double>>();
            if (v.size() != 4) throw InvalidInput("rect region needs [x0, y0, x1, y1]");
            reg.a = v[0];
            reg.b = v[1];
            reg.c = v[2];
            reg.d = v[3];
            if (breaks_x) breaks_x->insert(breaks_x->end(), {v[0], v[2]});
            if (breaks_y) breaks_y->insert(breaks_y->end(), {v[1], v[3]});
        } else if (r.contains("circle")) {
            const auto v = r.at("circle").get<std::vector<double>>();
            if (v.size() != 3) throw InvalidInput("circle region needs [cx, cy, radius]");
            reg.circle = true;
            reg.a = v[0];
            reg.b = v[1];
            reg.c = v[2];
        } else {
            throw InvalidInput("region must have 'rect' or 'circle'");
        }
        regions.push_back(std::move(reg));
    }
    TensorField fallback = parse_tensor_value(j.value("default", json(1.0)));
    if (breaks_x && j.contains("breaks_x")) {
        const auto v = j.at("breaks_x").get<std::vector<double>>();
        breaks_x->insert(breaks_x->end(), v.begin(), v.end());
    }
    if (breaks_y && j.contains("breaks_y")) {
        const auto v = j.at("breaks_y").get<std::vector<double>>();
        breaks_y->insert(breaks_y->end(), v.begin(), v.end());
    }
    return [regions, fallback](const Point& p) {
        for (const auto& r : regions) {
            const bool inside = r.circle ? std::hypot(p.x - r.a, p.y - r.b) < r.c
                                         : (p.x >= r.a && p.x < r.c && p.y >= r.b && p.y < r.d);
            if (inside) return r.K(p);
        }
        return fallback(p);
    };
}

ProblemSpec parse_problem(const json& j) {
    ProblemSpec p;
    p.K = parse_conductivity(j.value("K", json(1.0)), &p.breaks_x, &p.breaks_y);
    p.f = parse_scalar(j.value("f", json(0.0)));
    p.g = parse_scalar(j.value("g", json(0.0)));
    const std::string bc = j.value("bc", std::string("dirichlet"));
    if (bc == "dirichlet") p.bc = BcKind::Dirichlet;
    else if (bc == "neumann") p.bc = BcKind::Neumann;
    else throw InvalidInput("bc must be 'dirichlet' or 'neumann'");
    for (const char* key : {"breaks_x", "breaks_y"}) {
        if (!j.contains(key)) continue;
        const auto v = j.at(key).get<std::vector<double>>();
        auto& dst = key[7] == 'x' ? p.breaks_x : p.breaks_y;
        dst.insert(dst.end(), v.begin(), v.end());
    }
    if (j.contains("exact")) {
        const auto& e = j.at("exact");
        ScalarField pe = parse_scalar(e.at("p")), px = parse_scalar(e.at("px")),
                    py = parse_scalar(e.at("py"));
        p.exact = ExactSolution{pe, [px, py](const Point& x) { return Vec2(px(x), py(x)); }};
    }
    return p;
}

}  // namespace ddfeec
