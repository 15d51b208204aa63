#pragma once

#include <Eigen/Dense>
#include <array>
#include <vector>

#include "ddfeec/whitney.hpp"

// Building blocks shared by the FEEC backend and training: B-spline evaluation on point sets
// with reverse-mode adjoints, and the metric-weighted graph Laplacian of an element.
namespace ddfeec::feec {

// Points along one reference axis. Moving sets sit at fixed reference positions inside knot
// cells and follow the knots; fixed sets have knot-independent coordinates.
struct AxisSet {
    bool moving = false;
    std::vector<int> cell;
    std::vector<double> ref, gw;        // moving
    std::vector<double> coord, weight;  // fixed

    int size() const { return static_cast<int>(moving ? cell.size() : coord.size()); }
    static AxisSet knot_gauss(int cells, int points_per_cell);
    static AxisSet fixed(std::vector<double> coords, std::vector<double> weights = {});
    static AxisSet uniform_gauss(int cells, int points_per_cell);
};

// Nonzero spline values on an axis set: function k at point a is fine index first[a] + k.
struct AxisEval {
    int stride = 0;
    std::vector<double> x, w;
    std::vector<int> first;
    std::vector<double> val, der;
};

AxisEval eval_axis(const AxisSet& set, const std::vector<double>& breaks, int degree);
// Derivatives of x, w, val and der with respect to knot logit dir.
AxisEval tangent_axis(const AxisSet& set, const std::vector<double>& logits, int degree, int dir);

struct AxisAdjoint {
    std::vector<double> val, der, w;
    void resize(const AxisEval& e);
};

double contract(const AxisAdjoint& adj, const AxisEval& tangent);

// Tensor or paired product of two axis sets. Tensor point q is (q % nx, q / nx).
struct PointSet {
    AxisSet x, y;
    bool tensor = true;
    std::vector<std::array<int, 2>> pairs;

    int size() const { return tensor ? x.size() * y.size() : static_cast<int>(pairs.size()); }
    std::array<int, 2> index(int q) const {
        return tensor ? std::array<int, 2>{q % x.size(), q / x.size()} : pairs[q];
    }
};

struct Basis2D {
    Eigen::MatrixXd phi, gx, gy;  // points by coarse POUs, reference gradients
    Eigen::VectorXd w;
};

struct SetEval {
    AxisEval ex, ey;
    Basis2D basis;
};

SetEval eval_set(const PointSet& set, const PPOUParams& params, const std::vector<double>& bx,
                 const std::vector<double>& by, const RowMatrix& W);

// Accumulates W_bar and axis adjoints from adjoints of the basis; empty matrices are skipped.
void backward_set(const PointSet& set, const SetEval& ev, const RowMatrix& W, int fine_x,
                  const Eigen::MatrixXd& phi_bar, const Eigen::MatrixXd& gx_bar,
                  const Eigen::MatrixXd& gy_bar, const Eigen::VectorXd& w_bar, RowMatrix& W_bar,
                  AxisAdjoint& ax, AxisAdjoint& ay);

// Symmetric matrix with zero diagonal holding pair values.
Eigen::MatrixXd pair_matrix(const Eigen::VectorXd& pairs, int n);
// Gradient with respect to pair values of a function of pair_matrix(.).
Eigen::VectorXd pair_gradient(const Eigen::MatrixXd& E_bar);

// Component c of the flux field sum_{i<j} E_ij (v_j - v_i) psi_ij is xi(phi, g_c, E) v.
Eigen::MatrixXd xi(const Eigen::MatrixXd& phi, const Eigen::MatrixXd& gc, const Eigen::MatrixXd& E);
void xi_backward(const Eigen::MatrixXd& phi, const Eigen::MatrixXd& gc, const Eigen::MatrixXd& E,
                 const Eigen::MatrixXd& xi_bar, Eigen::MatrixXd& phi_bar, Eigen::MatrixXd& gc_bar,
                 Eigen::MatrixXd& E_bar);

// Adjoint of the masked row softmax.
Eigen::MatrixXd softmax_backward(const PPOUParams& params, const RowMatrix& W, const RowMatrix& W_bar);

// Reference-square operator L = B0^-1 Xi_b^T Wq Xi_d D0 with L p = b_f for the interior rows.
struct Operator {
    std::vector<double> bx, by;
    RowMatrix W;
    PointSet quad;
    SetEval q;
    Eigen::MatrixXd Ed, Eb;
    Eigen::VectorXd d0, b0inv;
    std::array<Eigen::MatrixXd, 2> Xd, Xb;
    Eigen::MatrixXd K, L;
    bool symmetric = true;
};

Operator build_operator(const FeecElement& e, int quad_points_per_cell = 0);

// Side sets on the reference square: the varying coordinate follows axis set s.
PointSet side_set(Side side, const AxisSet& along);

// Reference flux components at the points of an evaluated set for coefficient columns P.
std::array<Eigen::MatrixXd, 2> flux_at(const Operator& op, const Basis2D& b, const Eigen::MatrixXd& P);

}  // namespace ddfeec::feec
