#pragma once

#include <Eigen/Dense>
#include <array>
#include <memory>
#include <optional>
#include <utility>
#include <vector>

#include "ddfeec/geometry.hpp"
#include "ddfeec/problem.hpp"

namespace ddfeec {

enum class BackendKind { Fem, Feec };

struct LocalField {
    Eigen::VectorXd pressure;
    Eigen::VectorXd flux;
    BackendKind backend = BackendKind::Fem;
    int subdomain = -1;
    bool loaded = false;  // carries forcing / Neumann loads (bar part)

    LocalField& operator+=(const LocalField& o);
};

LocalField operator+(LocalField a, const LocalField& b);
LocalField operator*(double s, LocalField a);

struct PointValue {
    double p = 0.0;
    Vec2 u = Vec2::Zero();
    Vec2 grad = Vec2::Zero();
};

struct ErrorIntegrals {
    double p2 = 0.0;     // int (p - p_h)^2
    double u2 = 0.0;     // int |u - u_h|^2
    double grad2 = 0.0;  // int |grad p - grad p_h|^2
};

// Sides carrying trace dofs are the sides where the mortar imposes values. The remaining sides
// carry the problem's Neumann data.
class LocalSolver {
public:
    virtual ~LocalSolver() = default;

    virtual BackendKind kind() const = 0;
    virtual int subdomain() const = 0;
    virtual const Rect& rect() const = 0;
    virtual const std::array<bool, 4>& trace_sides() const = 0;

    virtual int trace_size() const = 0;
    // Arc-length breakpoints of the trace basis along a side.
    virtual std::vector<double> trace_breaks(Side s) const = 0;
    // Nonzero trace basis values at arc position s along a trace side.
    virtual void eval_trace(Side side, double arc, std::vector<std::pair<int, double>>& out) const = 0;
    // Nodal position if the trace dof is a point value.
    virtual std::optional<Point> trace_node(int dof) const = 0;

    virtual LocalField solve_star(const Eigen::VectorXd& trace) const = 0;
    virtual LocalField solve_bar() const = 0;
    // Weak normal flux functional on trace dofs: residual of the local equations tested with the
    // trace basis. Loads enter only for loaded fields.
    virtual Eigen::VectorXd trace_flux(const LocalField& field) const = 0;
    virtual double energy(const LocalField& a, const LocalField& b) const = 0;
    // (u_a, grad w) with u_a the discrete flux of a and w a scalar field.
    virtual double flux_pairing(const LocalField& a, const LocalField& w) const = 0;
    // Extension of trace values minimizing the H1 norm.
    virtual LocalField h1_extension(const Eigen::VectorXd& trace) const = 0;

    virtual PointValue evaluate(const LocalField& field, const Point& x) const = 0;
    virtual ErrorIntegrals error_integrals(const LocalField& field, const ProblemSpec& problem) const = 0;
    virtual double mean_integral(const LocalField& field) const = 0;  // int p_h
    virtual LocalField constant_field(double c) const = 0;
    // (f,1) over the subdomain plus (g,1) over its Neumann sides.
    virtual double source_integral() const = 0;
};

using LocalSolverPtr = std::shared_ptr<const LocalSolver>;

}  // namespace ddfeec
