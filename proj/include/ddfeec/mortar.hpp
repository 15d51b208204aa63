#pragma once

#include <Eigen/Dense>
#include <memory>
#include <string>
#include <vector>

#include "ddfeec/geometry.hpp"
#include "ddfeec/local_solver.hpp"
#include "ddfeec/problem.hpp"

namespace ddfeec {

enum class MortarFlavor { Dirichlet, Neumann };
enum class ProjectionMode { L2, Interpolation };

struct MortarEdge {
    bool interior = true;
    Point a, b;
    int left = -1, right = -1;  // right is -1 on the outer boundary
    Side left_side = Side::Right, right_side = Side::Left;
    std::vector<int> nodes;  // mortar dofs from a to b
    double length() const;
};

// Continuous piecewise-linear functions on the skeleton. The Dirichlet flavor spans every
// subdomain side and fixes the dofs on the outer boundary; the Neumann flavor spans interior
// edges only.
struct MortarSpace {
    Decomposition decomposition;
    double H = 1.0;
    MortarFlavor flavor = MortarFlavor::Dirichlet;
    std::vector<Point> nodes;
    std::vector<bool> fixed;
    std::vector<int> free_dofs, fixed_dofs;
    std::vector<int> free_index;  // -1 for fixed dofs
    std::vector<MortarEdge> edges;
    std::vector<std::array<int, 4>> side_edge;  // per subdomain and side, edge index or -1
    std::vector<std::string> adjustments;

    int size() const { return static_cast<int>(nodes.size()); }
    int free_size() const { return static_cast<int>(free_dofs.size()); }
    // Nonzero basis values at arc position s along an edge.
    void basis_at(int edge, double arc, std::vector<std::pair<int, double>>& out) const;
    double eval(const Eigen::VectorXd& lambda, int edge, double arc) const;
    // Interior skeleton length.
    double interface_length() const;
    Eigen::VectorXd expand(const Eigen::VectorXd& free_values, const Eigen::VectorXd& fixed_values) const;
};

MortarSpace build_mortar_space(const Decomposition& decomposition, double H, MortarFlavor flavor);

struct TraceProjection {
    ProjectionMode mode = ProjectionMode::L2;
    std::vector<Eigen::MatrixXd> Q;  // per subdomain, trace dofs by all mortar dofs
    std::vector<std::vector<int>> touched;  // mortar dofs with a nonzero column per subdomain
    // max over subdomains of the Galerkin orthogonality residual (L2 mode)
    double orthogonality_residual = 0.0;
};

TraceProjection build_projection(const MortarSpace& mortar, const std::vector<LocalSolverPtr>& solvers,
                                 ProjectionMode mode);

// Smallest singular value of the stacked projections restricted to the free dofs.
double unisolvency_sigma(const MortarSpace& mortar, const TraceProjection& proj);
// Per interior edge, the largest relative jump |Q_l mu - Q_r mu| / |mu| over mortar basis mu.
std::vector<double> edge_jumps(const MortarSpace& mortar, const TraceProjection& proj,
                               const std::vector<LocalSolverPtr>& solvers);

struct SchurOptions {
    double tol = 1e-10;
    int max_iter = 2000;
    bool allow_rank_deficient = false;
    double unisolvency_threshold = 1e-8;
};

struct SolveResult {
    Eigen::VectorXd lambda;  // all mortar dofs
    int iterations = 0;
    std::vector<double> residuals;  // relative preconditioned-free residual norms
};

struct ErrorNorms {
    double L2_p = 0.0, L2_u = 0.0, L2_mortar = 0.0, H1_semi = 0.0;
};

struct SchurDiagnostics {
    double symmetry_defect = 0.0;
    // extreme eigenvalues of the dense Schur matrix, or Lanczos Ritz values without the spectrum
    double smallest_ritz = 0.0;
    double largest_ritz = 0.0;
    double flux_energy_gap = 0.0;
    double unisolvency_sigma = 0.0;
    std::vector<double> edge_jumps;
};

class SchurSystem {
public:
    SchurSystem(std::shared_ptr<const ProblemSpec> problem, MortarSpace mortar,
                std::vector<LocalSolverPtr> solvers, ProjectionMode mode = ProjectionMode::L2);

    const MortarSpace& mortar() const { return mortar_; }
    const TraceProjection& projection() const { return proj_; }
    const std::vector<LocalSolverPtr>& solvers() const { return solvers_; }
    const ProblemSpec& problem() const { return *problem_; }

    // Full-space operator: sum_i Q_i^T DtN_i Q_i lambda, energy form.
    Eigen::VectorXd apply_full(const Eigen::VectorXd& lambda) const;
    // Operator on free dofs.
    Eigen::VectorXd apply(const Eigen::VectorXd& lambda_free) const;
    double form_energy(const Eigen::VectorXd& lambda, const Eigen::VectorXd& mu) const;
    double form_flux(const Eigen::VectorXd& lambda, const Eigen::VectorXd& mu) const;

    const Eigen::VectorXd& fixed_values() const { return fixed_values_; }
    // L_h on free dofs with the Dirichlet lift folded in.
    Eigen::VectorXd rhs() const;
    Eigen::VectorXd diagonal() const;
    Eigen::MatrixXd dense() const;

    SolveResult solve(const SchurOptions& options = {}) const;
    std::vector<LocalField> reconstruct(const Eigen::VectorXd& lambda) const;
    double conservation_residual(const std::vector<LocalField>& fields, double* scale = nullptr) const;
    ErrorNorms error_norms(const Eigen::VectorXd& lambda, const std::vector<LocalField>& fields) const;
    SchurDiagnostics diagnostics(unsigned seed = 7, bool with_spectrum = true) const;
    double unisolvency() const;

    PointValue evaluate(const std::vector<LocalField>& fields, const Point& x) const;

private:
    std::shared_ptr<const ProblemSpec> problem_;
    MortarSpace mortar_;
    std::vector<LocalSolverPtr> solvers_;
    TraceProjection proj_;
    std::vector<LocalField> bar_;
    Eigen::VectorXd load_;  // sum_i -Q_i^T flux(bar_i), all dofs
    Eigen::VectorXd fixed_values_;
};

}  // namespace ddfeec
