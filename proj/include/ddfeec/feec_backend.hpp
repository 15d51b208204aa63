#pragma once

#include <memory>
#include <mutex>

#include "ddfeec/feec_core.hpp"
#include "ddfeec/local_solver.hpp"
#include "ddfeec/whitney.hpp"

namespace ddfeec {

struct FeecOptions {
    int quad_points = 0;  // Gauss points per knot cell and axis (0: degree + 1)
    int data_points = 4;  // Gauss points per data cell for forcing and boundary loads
    int error_points = 5;
};

// Trained Whitney-form element mapped onto a square subdomain. Pressure dofs are POU
// coefficients, flux dofs are the pair values D1^-1 delta0 D0 p. Trace dofs are the boundary
// POUs whose trace reaches a trace side.
class FeecBackend final : public LocalSolver {
public:
    FeecBackend(int id, const Rect& rect, std::shared_ptr<const FeecElement> element,
                std::shared_ptr<const ProblemSpec> problem, std::array<bool, 4> trace_sides,
                FeecOptions options = {});

    BackendKind kind() const override { return BackendKind::Feec; }
    int subdomain() const override { return id_; }
    const Rect& rect() const override { return rect_; }
    const std::array<bool, 4>& trace_sides() const override { return trace_sides_; }

    int trace_size() const override { return static_cast<int>(trace_dofs_.size()); }
    std::vector<double> trace_breaks(Side s) const override;
    void eval_trace(Side side, double arc, std::vector<std::pair<int, double>>& out) const override;
    std::optional<Point> trace_node(int) const override { return std::nullopt; }

    LocalField solve_star(const Eigen::VectorXd& trace) const override;
    LocalField solve_bar() const override;
    Eigen::VectorXd trace_flux(const LocalField& field) const override;
    double energy(const LocalField& a, const LocalField& b) const override;
    double flux_pairing(const LocalField& a, const LocalField& w) const override;
    LocalField h1_extension(const Eigen::VectorXd& trace) const override;

    PointValue evaluate(const LocalField& field, const Point& x) const override;
    ErrorIntegrals error_integrals(const LocalField& field, const ProblemSpec& problem) const override;
    double mean_integral(const LocalField& field) const override;
    LocalField constant_field(double c) const override;
    double source_integral() const override;

    const FeecElement& element() const { return *element_; }
    const feec::Operator& op() const { return op_; }
    double side() const { return ls_; }
    const std::vector<int>& trace_dofs() const { return trace_dofs_; }
    const std::vector<int>& free_dofs() const { return free_dofs_; }
    Eigen::VectorXd load() const { return load_; }
    LocalField solve(const Eigen::VectorXd& trace, bool loaded) const;
    Eigen::VectorXd pair_flux(const Eigen::VectorXd& pressure) const;
    // Relative residual of M1 F = M1 D1^-1 delta0 D0 p.
    double slaving_residual(const LocalField& field) const;

private:
    Point to_ref(const Point& x) const;
    const Eigen::MatrixXd& m1() const;

    int id_;
    Rect rect_;
    double ls_;
    std::shared_ptr<const FeecElement> element_;
    std::shared_ptr<const ProblemSpec> problem_;
    std::array<bool, 4> trace_sides_;
    FeecOptions opt_;

    feec::Operator op_;
    std::vector<int> trace_dofs_, free_dofs_, trace_index_;
    Eigen::VectorXd load_;
    Eigen::MatrixXd L_ff_, L_ft_;
    Eigen::LDLT<Eigen::MatrixXd> ldlt_;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu_;

    mutable std::once_flag h1_once_, m1_once_;
    mutable Eigen::MatrixXd H_ft_, m1_;
    mutable Eigen::LDLT<Eigen::MatrixXd> h1_;
};

}  // namespace ddfeec
