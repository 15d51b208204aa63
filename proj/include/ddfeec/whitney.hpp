#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <array>
#include <string>
#include <utility>
#include <vector>

#include "ddfeec/geometry.hpp"
#include "json.hpp"

namespace ddfeec {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Coarse POUs 0..interior_count-1 are interior, the rest are boundary POUs. Fine splines are
// numbered a + nfx * b for the tensor product B_a(x) B_b(y).
struct PPOUParams {
    std::vector<double> knot_logits_x, knot_logits_y;
    // One row per fine spline, one column per coarse POU; softmax over each row.
    Eigen::MatrixXd combo_logits;
    int interior_count = 0;
    int boundary_count = 0;
    int degree = 2;

    int cells_x() const { return static_cast<int>(knot_logits_x.size()); }
    int cells_y() const { return static_cast<int>(knot_logits_y.size()); }
    int fine_x() const { return cells_x() + degree; }
    int fine_y() const { return cells_y() + degree; }
    int fine_count() const { return fine_x() * fine_y(); }
    int coarse_count() const { return interior_count + boundary_count; }
    bool is_boundary_fine(int f) const;
    // Whether fine spline f may feed coarse POU c.
    bool allowed(int f, int c) const;
};

enum class MetricMode { Symmetric, Independent };

// In symmetric mode B0 = D0^-1 and B1 = D1^-1; the b logs are ignored.
struct MetricWeights {
    Eigen::VectorXd log_b0, log_b1, log_d0, log_d1;
    MetricMode mode = MetricMode::Symmetric;

    static MetricWeights identity(int n_coarse, MetricMode mode = MetricMode::Symmetric);
    Eigen::VectorXd b0() const;
    Eigen::VectorXd b1() const;
    Eigen::VectorXd d0() const { return log_d0.array().exp(); }
    Eigen::VectorXd d1() const { return log_d1.array().exp(); }
};

struct FeecElement {
    PPOUParams pou;
    MetricWeights metric;
    int forcing_cells = 0;  // fixed data quadrature cells per axis (0: 2 x max knot cells)
    nlohmann::json info = nlohmann::json::object();

    int data_cells() const;
};

// Pairs i<j and triples i<j<k of the complete graph on n vertices.
int pair_count(int n);
int pair_index(int i, int j, int n);  // requires i<j
std::vector<std::pair<int, int>> pair_list(int n);
std::vector<std::array<int, 3>> triple_list(int n);

// Masked softmax of the combo logits (rows sum to 1).
RowMatrix combo_weights(const PPOUParams& params);

struct PouEval {
    Eigen::MatrixXd values, grad_x, grad_y;  // points by coarse POUs
};

PouEval eval_pou(const PPOUParams& params, const std::vector<Point>& points);

// Composite Gauss rule on the realized knot cells of the unit square.
QuadratureRule knot_rule(const PPOUParams& params, int points_per_cell = 0);

struct WhitneyAssembly {
    Eigen::MatrixXd pou_values, pou_grad_x, pou_grad_y;
    Eigen::MatrixXd m1;
    Eigen::MatrixXd m2;  // empty unless 2-forms requested
    Eigen::SparseMatrix<int> delta0, delta1;
    Eigen::MatrixXd div_matrix;        // (psi_ab, -grad phi_i), rows 0-forms
    Eigen::MatrixXd div_algebraic;     // DIV * M1 with DIV = -delta0^T
    Eigen::MatrixXd curl_matrix;       // (psi_abc, curl psi_ij) = (psi_abc, 2 grad phi_i x grad phi_j)
    Eigen::MatrixXd curl_algebraic;    // CURL * M2
    std::vector<bool> boundary_mask;
    double pou_residual = 0.0;
};

WhitneyAssembly assemble_whitney(const PPOUParams& params, const QuadratureRule& quad, bool build_2forms);

struct ZeroTraceSets {
    std::vector<int> interior;    // V^0_0
    std::vector<int> boundary;    // trace dofs
    std::vector<int> zero_pairs;  // pairs with at least one interior POU
};

ZeroTraceSets apply_zero_trace(const PPOUParams& params, const WhitneyAssembly& assembly);

// Element whose POUs are piecewise-linear interpolants on a coarse lattice (interior) and along
// the boundary loop (boundary), evaluated at the Greville points of the fine splines. Bilinear
// functions lie in its span.
struct ElementShape {
    int cells_x = 8, cells_y = 8, degree = 2;
    int interior_count = 16, boundary_count = 16;
    int lattice_x = 0, lattice_y = 0;  // interior lattice; 0 picks the most square factorization
    MetricMode mode = MetricMode::Symmetric;
    double saturation = 1e-8;  // weight floor for entries that the interpolant sets to zero
};
FeecElement initial_element(const ElementShape& shape);

nlohmann::json element_to_json(const FeecElement& e);
FeecElement element_from_json(const nlohmann::json& j);
FeecElement load_element(const std::string& path);
void save_element(const FeecElement& e, const std::string& path);

}  // namespace ddfeec
