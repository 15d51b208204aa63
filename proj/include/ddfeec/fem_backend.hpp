#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>
#include <memory>
#include <mutex>

#include "ddfeec/local_solver.hpp"

namespace ddfeec {

struct FemOptions {
    int gauss = 4;     // Gauss points per axis per quadrature cell
    int subcells = 1;  // extra uniform splitting of each element for rough K
};

// Bilinear pressure on a uniform cx-by-cy grid; flux in the lowest-order Nedelec space on
// rectangles (u_x constant in x and linear in y per column, u_y symmetric), obtained as the L2
// projection of K grad p.
class FemBackend final : public LocalSolver {
public:
    FemBackend(int id, const Rect& rect, int cells_x, int cells_y,
               std::shared_ptr<const ProblemSpec> problem, std::array<bool, 4> trace_sides,
               FemOptions options = {});

    BackendKind kind() const override { return BackendKind::Fem; }
    int subdomain() const override { return id_; }
    const Rect& rect() const override { return rect_; }
    const std::array<bool, 4>& trace_sides() const override { return trace_sides_; }

    int trace_size() const override { return static_cast<int>(trace_nodes_.size()); }
    std::vector<double> trace_breaks(Side s) const override;
    void eval_trace(Side side, double arc, std::vector<std::pair<int, double>>& out) const override;
    std::optional<Point> trace_node(int dof) const override;

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

    int cells_x() const { return cx_; }
    int cells_y() const { return cy_; }
    int node_count() const { return (cx_ + 1) * (cy_ + 1); }
    Point node_point(int n) const;
    const Eigen::SparseMatrix<double>& stiffness() const { return A_; }
    Eigen::VectorXd load() const { return F_ + G_; }
    const std::vector<int>& trace_nodes() const { return trace_nodes_; }

    // Solve with given trace values; loads included when loaded is set.
    LocalField solve(const Eigen::VectorXd& trace, bool loaded) const;
    Eigen::VectorXd project_flux(const Eigen::VectorXd& pressure) const;
    // Relative residual of the projection equations M_V flux = R pressure.
    double slaving_residual(const LocalField& field) const;
    // Flux dofs of grad phi_n for K = I and the max deviation of its evaluation from grad phi_n.
    double gradient_inclusion_defect() const;

private:
    struct CellRule {
        std::vector<double> a, b, w;  // local coordinates in [0,1] and physical weights
    };
    CellRule cell_rule(int i, int j) const;
    Vec2 grad_in_cell(const Eigen::VectorXd& p, int i, int j, double a, double b) const;
    void locate(const Point& x, int& i, int& j, double& a, double& b) const;
    Eigen::VectorXd flux_projection(const Eigen::VectorXd& pressure, bool identity_k,
                                    double* residual) const;

    int id_;
    Rect rect_;
    int cx_, cy_;
    double hx_, hy_;
    std::shared_ptr<const ProblemSpec> problem_;
    std::array<bool, 4> trace_sides_;
    FemOptions opt_;

    Eigen::SparseMatrix<double> A_;
    Eigen::VectorXd F_, G_, lumped_;
    std::vector<int> trace_nodes_, free_nodes_, trace_index_, free_index_;
    Eigen::SparseMatrix<double> A_ff_, A_ft_;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver_;

    mutable std::once_flag h1_once_;
    mutable Eigen::SparseMatrix<double> H_ff_, H_ft_;
    mutable std::unique_ptr<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>> h1_solver_;
};

}  // namespace ddfeec
