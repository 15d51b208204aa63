#include "ddfeec/feec_core.hpp"

#include <cmath>

#include "ddfeec/bspline.hpp"
#include "ddfeec/errors.hpp"

namespace ddfeec::feec {

AxisSet AxisSet::knot_gauss(int cells, int ppc) {
    const Rule1D g = gauss_legendre(ppc);
    AxisSet s;
    s.moving = true;
    for (int c = 0; c < cells; ++c)
        for (int k = 0; k < ppc; ++k) {
            s.cell.push_back(c);
            s.ref.push_back(g.nodes[k]);
            s.gw.push_back(g.weights[k]);
        }
    return s;
}

AxisSet AxisSet::fixed(std::vector<double> coords, std::vector<double> weights) {
    AxisSet s;
    if (weights.empty()) weights.assign(coords.size(), 1.0);
    if (weights.size() != coords.size()) throw InvalidInput("axis weights do not match coordinates");
    s.coord = std::move(coords);
    s.weight = std::move(weights);
    return s;
}

AxisSet AxisSet::uniform_gauss(int cells, int ppc) {
    const Rule1D r = composite_gauss(uniform_breaks(0.0, 1.0, cells), ppc);
    return fixed(r.nodes, r.weights);
}

namespace {

template <class T>
void eval_axis_t(const AxisSet& set, const std::vector<T>& breaks, const std::vector<double>& bval,
                 int degree, std::vector<T>& x, std::vector<T>& w, std::vector<int>& first,
                 std::vector<T>& val, std::vector<T>& der) {
    const int n = set.size(), s = degree + 1;
    x.resize(n);
    w.resize(n);
    first.resize(n);
    val.resize(n * s);
    der.resize(n * s);
    for (int a = 0; a < n; ++a) {
        int c;
        if (set.moving) {
            c = set.cell[a];
            const T h = breaks[c + 1] - breaks[c];
            x[a] = breaks[c] + T(set.ref[a]) * h;
            w[a] = T(set.gw[a]) * h;
        } else {
            if (set.coord[a] < -1e-12 || set.coord[a] > 1 + 1e-12)
                throw OutOfDomain("point outside the reference square");
            const double xc = std::clamp(set.coord[a], 0.0, 1.0);
            c = find_cell(bval, xc);
            x[a] = T(xc);
            w[a] = T(set.weight[a]);
        }
        first[a] = c;
        bspline_cell<T>(breaks, degree, c, x[a], &val[a * s], &der[a * s]);
    }
}

}  // namespace

AxisEval eval_axis(const AxisSet& set, const std::vector<double>& breaks, int degree) {
    AxisEval e;
    e.stride = degree + 1;
    eval_axis_t<double>(set, breaks, breaks, degree, e.x, e.w, e.first, e.val, e.der);
    return e;
}

AxisEval tangent_axis(const AxisSet& set, const std::vector<double>& logits, int degree, int dir) {
    std::vector<Dual> l(logits.size());
    for (std::size_t k = 0; k < logits.size(); ++k) l[k] = Dual(logits[k], static_cast<int>(k) == dir ? 1.0 : 0.0);
    const std::vector<Dual> breaks = realize_knots_t<Dual>(l);
    std::vector<double> bval(breaks.size());
    for (std::size_t k = 0; k < breaks.size(); ++k) bval[k] = breaks[k].v;
    std::vector<Dual> x, w, val, der;
    AxisEval t;
    t.stride = degree + 1;
    eval_axis_t<Dual>(set, breaks, bval, degree, x, w, t.first, val, der);
    auto tan = [](const std::vector<Dual>& v) {
        std::vector<double> o(v.size());
        for (std::size_t k = 0; k < v.size(); ++k) o[k] = v[k].d;
        return o;
    };
    t.x = tan(x);
    t.w = tan(w);
    t.val = tan(val);
    t.der = tan(der);
    return t;
}

void AxisAdjoint::resize(const AxisEval& e) {
    val.assign(e.val.size(), 0.0);
    der.assign(e.der.size(), 0.0);
    w.assign(e.w.size(), 0.0);
}

double contract(const AxisAdjoint& adj, const AxisEval& t) {
    double s = 0.0;
    for (std::size_t k = 0; k < adj.val.size(); ++k) s += adj.val[k] * t.val[k] + adj.der[k] * t.der[k];
    for (std::size_t k = 0; k < adj.w.size(); ++k) s += adj.w[k] * t.w[k];
    return s;
}

SetEval eval_set(const PointSet& set, const PPOUParams& p, const std::vector<double>& bx,
                 const std::vector<double>& by, const RowMatrix& W) {
    SetEval ev;
    ev.ex = eval_axis(set.x, bx, p.degree);
    ev.ey = eval_axis(set.y, by, p.degree);
    const int nq = set.size(), nc = static_cast<int>(W.cols()), s = p.degree + 1, nfx = p.fine_x();
    Basis2D& b = ev.basis;
    b.phi = Eigen::MatrixXd::Zero(nq, nc);
    b.gx = Eigen::MatrixXd::Zero(nq, nc);
    b.gy = Eigen::MatrixXd::Zero(nq, nc);
    b.w.resize(nq);
    for (int q = 0; q < nq; ++q) {
        const auto [a, bb] = set.index(q);
        b.w[q] = ev.ex.w[a] * ev.ey.w[bb];
        const double *vx = &ev.ex.val[a * s], *dx = &ev.ex.der[a * s];
        const double *vy = &ev.ey.val[bb * s], *dy = &ev.ey.der[bb * s];
        for (int kb = 0; kb <= p.degree; ++kb)
            for (int ka = 0; ka <= p.degree; ++ka) {
                const int f = ev.ex.first[a] + ka + nfx * (ev.ey.first[bb] + kb);
                const auto row = W.row(f);
                b.phi.row(q) += (vx[ka] * vy[kb]) * row;
                b.gx.row(q) += (dx[ka] * vy[kb]) * row;
                b.gy.row(q) += (vx[ka] * dy[kb]) * row;
            }
    }
    return ev;
}

void backward_set(const PointSet& set, const SetEval& ev, const RowMatrix& W, int nfx,
                  const Eigen::MatrixXd& phi_bar, const Eigen::MatrixXd& gx_bar,
                  const Eigen::MatrixXd& gy_bar, const Eigen::VectorXd& w_bar, RowMatrix& W_bar,
                  AxisAdjoint& ax, AxisAdjoint& ay) {
    const int nq = set.size(), s = ev.ex.stride, d = s - 1;
    const bool hp = phi_bar.size() > 0, hx = gx_bar.size() > 0, hy = gy_bar.size() > 0, hw = w_bar.size() > 0;
    for (int q = 0; q < nq; ++q) {
        const auto [a, b] = set.index(q);
        if (hw) {
            ax.w[a] += w_bar[q] * ev.ey.w[b];
            ay.w[b] += w_bar[q] * ev.ex.w[a];
        }
        if (!hp && !hx && !hy) continue;
        const double *vx = &ev.ex.val[a * s], *dx = &ev.ex.der[a * s];
        const double *vy = &ev.ey.val[b * s], *dy = &ev.ey.der[b * s];
        for (int kb = 0; kb <= d; ++kb)
            for (int ka = 0; ka <= d; ++ka) {
                const int f = ev.ex.first[a] + ka + nfx * (ev.ey.first[b] + kb);
                const auto row = W.row(f);
                auto wbar = W_bar.row(f);
                double bv = 0, bgx = 0, bgy = 0;
                if (hp) {
                    bv = phi_bar.row(q).dot(row);
                    wbar += (vx[ka] * vy[kb]) * phi_bar.row(q);
                }
                if (hx) {
                    bgx = gx_bar.row(q).dot(row);
                    wbar += (dx[ka] * vy[kb]) * gx_bar.row(q);
                }
                if (hy) {
                    bgy = gy_bar.row(q).dot(row);
                    wbar += (vx[ka] * dy[kb]) * gy_bar.row(q);
                }
                ax.val[a * s + ka] += bv * vy[kb] + bgy * dy[kb];
                ax.der[a * s + ka] += bgx * vy[kb];
                ay.val[b * s + kb] += bv * vx[ka] + bgx * dx[ka];
                ay.der[b * s + kb] += bgy * vx[ka];
            }
    }
}

Eigen::MatrixXd pair_matrix(const Eigen::VectorXd& pairs, int n) {
    Eigen::MatrixXd E = Eigen::MatrixXd::Zero(n, n);
    int k = 0;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j, ++k) E(i, j) = E(j, i) = pairs[k];
    return E;
}

Eigen::VectorXd pair_gradient(const Eigen::MatrixXd& E_bar) {
    const int n = static_cast<int>(E_bar.rows());
    Eigen::VectorXd g(pair_count(n));
    int k = 0;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j, ++k) g[k] = E_bar(i, j) + E_bar(j, i);
    return g;
}

Eigen::MatrixXd xi(const Eigen::MatrixXd& phi, const Eigen::MatrixXd& gc, const Eigen::MatrixXd& E) {
    return (phi * E).cwiseProduct(gc) - phi.cwiseProduct(gc * E);
}

void xi_backward(const Eigen::MatrixXd& phi, const Eigen::MatrixXd& gc, const Eigen::MatrixXd& E,
                 const Eigen::MatrixXd& xb, Eigen::MatrixXd& phi_bar, Eigen::MatrixXd& gc_bar,
                 Eigen::MatrixXd& E_bar) {
    const Eigen::MatrixXd xg = xb.cwiseProduct(gc), xp = xb.cwiseProduct(phi);
    phi_bar += xg * E - xb.cwiseProduct(gc * E);
    gc_bar += xb.cwiseProduct(phi * E) - xp * E;
    E_bar += phi.transpose() * xg - gc.transpose() * xp;
}

Eigen::MatrixXd softmax_backward(const PPOUParams& p, const RowMatrix& W, const RowMatrix& W_bar) {
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(W.rows(), W.cols());
    for (int f = 0; f < W.rows(); ++f) {
        const double inner = W.row(f).dot(W_bar.row(f));
        for (int c = 0; c < W.cols(); ++c)
            if (p.allowed(f, c)) g(f, c) = W(f, c) * (W_bar(f, c) - inner);
    }
    return g;
}

Operator build_operator(const FeecElement& e, int ppc) {
    const PPOUParams& p = e.pou;
    const int n = p.coarse_count();
    if (ppc <= 0) ppc = p.degree + 1;
    Operator op;
    op.bx = realize_knots(p.knot_logits_x);
    op.by = realize_knots(p.knot_logits_y);
    op.W = combo_weights(p);
    op.quad.x = AxisSet::knot_gauss(p.cells_x(), ppc);
    op.quad.y = AxisSet::knot_gauss(p.cells_y(), ppc);
    op.q = eval_set(op.quad, p, op.bx, op.by, op.W);
    const MetricWeights& m = e.metric;
    if (m.log_d0.size() != n || m.log_d1.size() != pair_count(n))
        throw InvalidInput("metric weight sizes do not match the POU count");
    op.symmetric = m.mode == MetricMode::Symmetric;
    op.d0 = m.d0();
    op.Ed = pair_matrix((-m.log_d1).array().exp(), n);
    if (op.symmetric) {
        op.Eb = op.Ed;
        op.b0inv = op.d0;
    } else {
        if (m.log_b0.size() != n || m.log_b1.size() != pair_count(n))
            throw InvalidInput("metric weight sizes do not match the POU count");
        op.Eb = pair_matrix(m.log_b1.array().exp(), n);
        op.b0inv = (-m.log_b0).array().exp();
    }
    const Basis2D& b = op.q.basis;
    op.Xd = {xi(b.phi, b.gx, op.Ed), xi(b.phi, b.gy, op.Ed)};
    op.Xb = op.symmetric ? op.Xd : std::array<Eigen::MatrixXd, 2>{xi(b.phi, b.gx, op.Eb), xi(b.phi, b.gy, op.Eb)};
    op.K = Eigen::MatrixXd::Zero(n, n);
    for (int c = 0; c < 2; ++c) op.K += op.Xb[c].transpose() * b.w.asDiagonal() * op.Xd[c] * op.d0.asDiagonal();
    op.L = op.b0inv.asDiagonal() * op.K;
    if (op.symmetric) op.L = 0.5 * (op.L + op.L.transpose());
    return op;
}

PointSet side_set(Side side, const AxisSet& along) {
    PointSet s;
    switch (side) {
        case Side::Bottom: s.x = along; s.y = AxisSet::fixed({0.0}); break;
        case Side::Top: s.x = along; s.y = AxisSet::fixed({1.0}); break;
        case Side::Left: s.x = AxisSet::fixed({0.0}); s.y = along; break;
        case Side::Right: s.x = AxisSet::fixed({1.0}); s.y = along; break;
    }
    return s;
}

std::array<Eigen::MatrixXd, 2> flux_at(const Operator& op, const Basis2D& b, const Eigen::MatrixXd& P) {
    const Eigen::MatrixXd V = op.d0.asDiagonal() * P;
    return {xi(b.phi, b.gx, op.Ed) * V, xi(b.phi, b.gy, op.Ed) * V};
}

}  // namespace ddfeec::feec
