#pragma once

#include <cmath>
#include <memory>
#include <random>

#include "ddfeec/problem.hpp"
#include "ddfeec/whitney.hpp"

namespace ddfeec::test {

inline std::shared_ptr<ProblemSpec> laplace(ScalarField g, ScalarField f = nullptr) {
    auto p = std::make_shared<ProblemSpec>();
    p->K = [](const Point&) { return Mat2::Identity().eval(); };
    p->f = f ? f : [](const Point&) { return 0.0; };
    p->g = std::move(g);
    return p;
}

// Element whose POUs are exactly the tensor hats of a uniform n x n grid (degree 1, identity combo).
// Interior hats come first in lexicographic order, then the boundary hats.
inline FeecElement hat_element(int n) {
    FeecElement e;
    PPOUParams& p = e.pou;
    p.degree = 1;
    p.knot_logits_x.assign(n, 0.0);
    p.knot_logits_y.assign(n, 0.0);
    p.interior_count = (n - 1) * (n - 1);
    p.boundary_count = 4 * n;
    const int nf = p.fine_count();
    p.combo_logits = Eigen::MatrixXd::Constant(nf, p.coarse_count(), -80.0);
    int ic = 0, bc = p.interior_count;
    for (int f = 0; f < nf; ++f) p.combo_logits(f, p.is_boundary_fine(f) ? bc++ : ic++) = 0.0;
    e.metric = MetricWeights::identity(p.coarse_count());
    return e;
}

// Position of the hat that feeds coarse POU c of hat_element(n).
inline Point hat_node(const FeecElement& e, int c) {
    const PPOUParams& p = e.pou;
    const int n = p.cells_x();
    for (int f = 0; f < p.fine_count(); ++f)
        if (p.combo_logits(f, c) == 0.0) return {double(f % (n + 1)) / n, double(f / (n + 1)) / n};
    return {-1, -1};
}

// Randomized element: knots, combos and metric logs drawn around the initial element.
inline FeecElement random_element(ElementShape shape, unsigned seed, double spread = 0.5) {
    FeecElement e = initial_element(shape);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n01(0.0, spread);
    for (double& v : e.pou.knot_logits_x) v += n01(rng);
    for (double& v : e.pou.knot_logits_y) v += n01(rng);
    for (int f = 0; f < e.pou.combo_logits.rows(); ++f)
        for (int c = 0; c < e.pou.combo_logits.cols(); ++c)
            if (e.pou.allowed(f, c)) e.pou.combo_logits(f, c) += n01(rng);
    for (auto* v : {&e.metric.log_d0, &e.metric.log_d1, &e.metric.log_b0, &e.metric.log_b1})
        for (int i = 0; i < v->size(); ++i) (*v)[i] += 0.3 * n01(rng);
    return e;
}

}  // namespace ddfeec::test
