#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <vector>

#include "ddfeec/geometry.hpp"
#include "json.hpp"

namespace ddfeec {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
using ScalarField = std::function<double(const Point&)>;
using VectorField = std::function<Vec2(const Point&)>;
using TensorField = std::function<Mat2(const Point&)>;

enum class BcKind { Dirichlet, Neumann };

struct ExactSolution {
    ScalarField p;
    VectorField grad;
};

// Flux is u = K grad p with -div u = f. Neumann data is g = u.n on the outer boundary.
struct ProblemSpec {
    TensorField K;
    ScalarField f;
    ScalarField g;
    BcKind bc = BcKind::Dirichlet;
    std::optional<ExactSolution> exact;
    // Lines across which K may jump; quadrature cells are split there.
    std::vector<double> breaks_x, breaks_y;

    Vec2 exact_flux(const Point& x) const { return K(x) * exact->grad(x); }
};

ProblemSpec make_problem(TensorField K, ScalarField f, ScalarField g,
                         BcKind bc = BcKind::Dirichlet);

// Throws InvalidInput if K is not symmetric positive definite at any of the points.
void check_conductivity(const ProblemSpec& problem, const std::vector<Point>& points,
                        double tol = 1e-12);

// Integral of f over the domain plus g over its boundary.
double compatibility_defect(const ProblemSpec& problem, const Rect& domain, int cells = 64);

// Parses K, f, g, bc and exact entries of a problem config.
ProblemSpec parse_problem(const nlohmann::json& j);
TensorField parse_conductivity(const nlohmann::json& j, std::vector<double>* breaks_x = nullptr,
                               std::vector<double>* breaks_y = nullptr);
ScalarField parse_scalar(const nlohmann::json& j);

}  // namespace ddfeec
