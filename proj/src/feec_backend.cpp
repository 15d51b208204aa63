#include "ddfeec/feec_backend.hpp"

#include <algorithm>
#include <cmath>

#include "ddfeec/errors.hpp"

namespace ddfeec {

using feec::AxisSet;
using feec::PointSet;

namespace {

// Fine spline indices along one side of the reference square.
std::vector<int> side_fines(const PPOUParams& p, Side s) {
    std::vector<int> out;
    const int nfx = p.fine_x(), nfy = p.fine_y();
    switch (s) {
        case Side::Bottom: for (int a = 0; a < nfx; ++a) out.push_back(a); break;
        case Side::Top: for (int a = 0; a < nfx; ++a) out.push_back(a + nfx * (nfy - 1)); break;
        case Side::Left: for (int b = 0; b < nfy; ++b) out.push_back(nfx * b); break;
        case Side::Right: for (int b = 0; b < nfy; ++b) out.push_back(nfx - 1 + nfx * b); break;
    }
    return out;
}

}  // namespace

FeecBackend::FeecBackend(int id, const Rect& rect, std::shared_ptr<const FeecElement> element,
                         std::shared_ptr<const ProblemSpec> problem, std::array<bool, 4> trace_sides,
                         FeecOptions options)
    : id_(id),
      rect_(rect),
      ls_(rect.width()),
      element_(std::move(element)),
      problem_(std::move(problem)),
      trace_sides_(trace_sides),
      opt_(options) {
    if (!(ls_ > 0) || std::abs(rect.width() - rect.height()) > 1e-12 * ls_)
        throw InvalidInput("FEEC elements need square subdomains");
    const PPOUParams& p = element_->pou;
    if (p.boundary_count <= 0) throw InvalidInput("FEEC backend needs boundary POUs for trace dofs");
    op_ = feec::build_operator(*element_, opt_.quad_points);
    const int n = p.coarse_count();

    trace_index_.assign(n, -1);
    for (int c = p.interior_count; c < n; ++c) {
        double mx = 0.0;
        for (Side s : kSides)
            if (trace_sides_[static_cast<int>(s)])
                for (int f : side_fines(p, s)) mx = std::max(mx, op_.W(f, c));
        if (mx > 1e-6) {
            trace_index_[c] = static_cast<int>(trace_dofs_.size());
            trace_dofs_.push_back(c);
        }
    }
    for (int c = 0; c < n; ++c)
        if (trace_index_[c] < 0) free_dofs_.push_back(c);

    // loads on a knot-independent rule
    load_ = Eigen::VectorXd::Zero(n);
    const int dc = element_->data_cells();
    PointSet data;
    data.x = AxisSet::uniform_gauss(dc, opt_.data_points);
    data.y = data.x;
    const feec::SetEval de = feec::eval_set(data, p, op_.bx, op_.by, op_.W);
    Eigen::VectorXd fw(data.size());
    for (int q = 0; q < data.size(); ++q) {
        const auto [a, b] = data.index(q);
        const Point x{rect_.x0 + ls_ * de.ex.x[a], rect_.y0 + ls_ * de.ey.x[b]};
        fw[q] = de.basis.w[q] * problem_->f(x);
    }
    load_ += ls_ * ls_ * de.basis.phi.transpose() * fw;
    if (problem_->bc == BcKind::Neumann) {
        const AxisSet along = AxisSet::uniform_gauss(dc, opt_.data_points);
        for (Side s : kSides) {
            if (trace_sides_[static_cast<int>(s)]) continue;
            const PointSet ss = feec::side_set(s, along);
            const feec::SetEval se = feec::eval_set(ss, p, op_.bx, op_.by, op_.W);
            Eigen::VectorXd gw(ss.size());
            for (int q = 0; q < ss.size(); ++q) {
                const auto [a, b] = ss.index(q);
                const Point x{rect_.x0 + ls_ * se.ex.x[a], rect_.y0 + ls_ * se.ey.x[b]};
                gw[q] = se.basis.w[q] * problem_->g(x);
            }
            load_ += ls_ * se.basis.phi.transpose() * gw;
        }
    }

    const int nf = static_cast<int>(free_dofs_.size()), nt = trace_size();
    L_ff_.resize(nf, nf);
    L_ft_.resize(nf, nt);
    for (int r = 0; r < nf; ++r) {
        for (int c = 0; c < nf; ++c) L_ff_(r, c) = op_.L(free_dofs_[r], free_dofs_[c]);
        for (int c = 0; c < nt; ++c) L_ft_(r, c) = op_.L(free_dofs_[r], trace_dofs_[c]);
    }
    if (nf > 0) {
        if (op_.symmetric) {
            ldlt_.compute(L_ff_);
            if (ldlt_.info() != Eigen::Success || !(ldlt_.vectorD().minCoeff() > 0))
                throw BackendFailure(id_, "FEEC interior operator is not positive definite");
        } else {
            lu_.compute(L_ff_);
        }
    }
}

std::vector<double> FeecBackend::trace_breaks(Side s) const {
    std::vector<double> b = (s == Side::Bottom || s == Side::Top) ? op_.bx : op_.by;
    for (double& v : b) v *= ls_;
    return b;
}

void FeecBackend::eval_trace(Side side, double arc, std::vector<std::pair<int, double>>& out) const {
    out.clear();
    const PPOUParams& p = element_->pou;
    const double t = std::clamp(arc / ls_, 0.0, 1.0);
    const bool horizontal = side == Side::Bottom || side == Side::Top;
    const feec::AxisEval e = feec::eval_axis(AxisSet::fixed({t}), horizontal ? op_.bx : op_.by, p.degree);
    const std::vector<int> fines = side_fines(p, side);
    for (int c : trace_dofs_) {
        double v = 0.0;
        for (int k = 0; k <= p.degree; ++k) v += e.val[k] * op_.W(fines[e.first[0] + k], c);
        if (v != 0.0) out.emplace_back(trace_index_[c], v);
    }
}

Eigen::VectorXd FeecBackend::pair_flux(const Eigen::VectorXd& pressure) const {
    const int n = element_->pou.coarse_count();
    const Eigen::VectorXd v = op_.d0.cwiseProduct(pressure);
    Eigen::VectorXd F(pair_count(n));
    int k = 0;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j, ++k) F[k] = op_.Ed(i, j) * (v[j] - v[i]);
    return F;
}

LocalField FeecBackend::solve(const Eigen::VectorXd& trace, bool loaded) const {
    if (trace.size() != trace_size()) throw InvalidInput("trace vector length does not match the trace dofs");
    const int n = element_->pou.coarse_count(), nf = static_cast<int>(free_dofs_.size());
    Eigen::VectorXd p(n);
    for (int t = 0; t < trace_size(); ++t) p[trace_dofs_[t]] = trace[t];
    if (nf > 0) {
        Eigen::VectorXd rhs = -(L_ft_ * trace);
        if (loaded)
            for (int k = 0; k < nf; ++k) rhs[k] += load_[free_dofs_[k]];
        auto apply = [&](const Eigen::VectorXd& r) -> Eigen::VectorXd {
            return op_.symmetric ? Eigen::VectorXd(ldlt_.solve(r)) : Eigen::VectorXd(lu_.solve(r));
        };
        Eigen::VectorXd x = apply(rhs);
        x += apply(rhs - L_ff_ * x);
        const double res = (L_ff_ * x - rhs).norm();
        const double scale = rhs.norm() + L_ff_.norm() * x.norm();
        if (!x.allFinite() || res > 1e-10 * std::max(scale, 1e-300))
            throw BackendFailure(id_, "FEEC local solve residual " + std::to_string(res));
        for (int k = 0; k < nf; ++k) p[free_dofs_[k]] = x[k];
    }
    LocalField f;
    f.pressure = std::move(p);
    f.flux = pair_flux(f.pressure);
    f.backend = BackendKind::Feec;
    f.subdomain = id_;
    f.loaded = loaded;
    return f;
}

LocalField FeecBackend::solve_star(const Eigen::VectorXd& trace) const { return solve(trace, false); }

LocalField FeecBackend::solve_bar() const { return solve(Eigen::VectorXd::Zero(trace_size()), true); }

Eigen::VectorXd FeecBackend::trace_flux(const LocalField& field) const {
    const Eigen::VectorXd r = op_.L * field.pressure;
    Eigen::VectorXd out(trace_size());
    for (int t = 0; t < trace_size(); ++t) {
        const int c = trace_dofs_[t];
        out[t] = r[c] - (field.loaded ? load_[c] : 0.0);
    }
    return out;
}

double FeecBackend::energy(const LocalField& a, const LocalField& b) const {
    if (a.backend != BackendKind::Feec || b.backend != BackendKind::Feec || a.subdomain != id_ ||
        b.subdomain != id_)
        throw InvalidInput("energy: fields belong to a different backend");
    return a.pressure.dot(op_.L * b.pressure);
}

const Eigen::MatrixXd& FeecBackend::m1() const {
    std::call_once(m1_once_, [this] {
        const int ppc = opt_.quad_points > 0 ? opt_.quad_points : element_->pou.degree + 1;
        m1_ = assemble_whitney(element_->pou, knot_rule(element_->pou, ppc), false).m1;
    });
    return m1_;
}

double FeecBackend::flux_pairing(const LocalField& a, const LocalField& w) const {
    // explicit Whitney 1-form path: G holds the pair coefficients of the test gradient
    const int n = element_->pou.coarse_count();
    const Eigen::VectorXd v = op_.b0inv.cwiseProduct(w.pressure);
    Eigen::VectorXd G(pair_count(n));
    int k = 0;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j, ++k) G[k] = op_.Eb(i, j) * (v[j] - v[i]);
    return a.flux.dot(m1() * G);
}

LocalField FeecBackend::h1_extension(const Eigen::VectorXd& trace) const {
    std::call_once(h1_once_, [this] {
        const feec::Basis2D& b = op_.q.basis;
        const Eigen::MatrixXd H = b.gx.transpose() * b.w.asDiagonal() * b.gx +
                                  b.gy.transpose() * b.w.asDiagonal() * b.gy +
                                  ls_ * ls_ * b.phi.transpose() * b.w.asDiagonal() * b.phi;
        const int nf = static_cast<int>(free_dofs_.size()), nt = trace_size();
        Eigen::MatrixXd Hff(nf, nf);
        H_ft_.resize(nf, nt);
        for (int r = 0; r < nf; ++r) {
            for (int c = 0; c < nf; ++c) Hff(r, c) = H(free_dofs_[r], free_dofs_[c]);
            for (int c = 0; c < nt; ++c) H_ft_(r, c) = H(free_dofs_[r], trace_dofs_[c]);
        }
        if (nf > 0) h1_.compute(Hff);
    });
    LocalField f;
    f.pressure.resize(element_->pou.coarse_count());
    for (int t = 0; t < trace_size(); ++t) f.pressure[trace_dofs_[t]] = trace[t];
    if (!free_dofs_.empty()) {
        const Eigen::VectorXd x = h1_.solve(-(H_ft_ * trace));
        for (std::size_t k = 0; k < free_dofs_.size(); ++k) f.pressure[free_dofs_[k]] = x[k];
    }
    f.flux = pair_flux(f.pressure);
    f.backend = BackendKind::Feec;
    f.subdomain = id_;
    return f;
}

Point FeecBackend::to_ref(const Point& x) const {
    const Point r{(x.x - rect_.x0) / ls_, (x.y - rect_.y0) / ls_};
    if (r.x < -1e-9 || r.x > 1 + 1e-9 || r.y < -1e-9 || r.y > 1 + 1e-9)
        throw OutOfDomain("point outside subdomain " + std::to_string(id_));
    return {std::clamp(r.x, 0.0, 1.0), std::clamp(r.y, 0.0, 1.0)};
}

PointValue FeecBackend::evaluate(const LocalField& field, const Point& x) const {
    const Point r = to_ref(x);
    PointSet s;
    s.x = AxisSet::fixed({r.x});
    s.y = AxisSet::fixed({r.y});
    const feec::SetEval e = feec::eval_set(s, element_->pou, op_.bx, op_.by, op_.W);
    const auto u = feec::flux_at(op_, e.basis, field.pressure);
    PointValue v;
    v.p = e.basis.phi.row(0).dot(field.pressure);
    v.grad = Vec2(e.basis.gx.row(0).dot(field.pressure), e.basis.gy.row(0).dot(field.pressure)) / ls_;
    v.u = Vec2(u[0](0, 0), u[1](0, 0)) / ls_;
    return v;
}

ErrorIntegrals FeecBackend::error_integrals(const LocalField& field, const ProblemSpec& problem) const {
    if (!problem.exact) throw InvalidInput("error integrals need an exact solution");
    auto breaks = [&](const std::vector<double>& knots, const std::vector<double>& lines, double o) {
        std::vector<double> mapped;
        for (double l : lines) mapped.push_back((l - o) / ls_);
        return merge_breaks(knots, mapped, 0.0, 1.0);
    };
    const Rule1D rx = composite_gauss(breaks(op_.bx, problem.breaks_x, rect_.x0), opt_.error_points);
    const Rule1D ry = composite_gauss(breaks(op_.by, problem.breaks_y, rect_.y0), opt_.error_points);
    PointSet s;
    s.x = AxisSet::fixed(rx.nodes, rx.weights);
    s.y = AxisSet::fixed(ry.nodes, ry.weights);
    const feec::SetEval e = feec::eval_set(s, element_->pou, op_.bx, op_.by, op_.W);
    const auto u = feec::flux_at(op_, e.basis, field.pressure);
    const Eigen::VectorXd ph = e.basis.phi * field.pressure, gx = e.basis.gx * field.pressure,
                          gy = e.basis.gy * field.pressure;
    ErrorIntegrals out;
    for (int q = 0; q < s.size(); ++q) {
        const auto [a, b] = s.index(q);
        const Point x{rect_.x0 + ls_ * rx.nodes[a], rect_.y0 + ls_ * ry.nodes[b]};
        const double w = e.basis.w[q] * ls_ * ls_;
        const Vec2 gex = problem.exact->grad(x);
        const Vec2 uh(u[0](q, 0) / ls_, u[1](q, 0) / ls_), gh(gx[q] / ls_, gy[q] / ls_);
        out.p2 += w * std::pow(ph[q] - problem.exact->p(x), 2);
        out.u2 += w * (uh - problem.K(x) * gex).squaredNorm();
        out.grad2 += w * (gh - gex).squaredNorm();
    }
    return out;
}

double FeecBackend::mean_integral(const LocalField& field) const {
    const feec::Basis2D& b = op_.q.basis;
    return ls_ * ls_ * b.w.dot(b.phi * field.pressure);
}

LocalField FeecBackend::constant_field(double c) const {
    LocalField f;
    f.pressure = Eigen::VectorXd::Constant(element_->pou.coarse_count(), c);
    f.flux = pair_flux(f.pressure);
    f.backend = BackendKind::Feec;
    f.subdomain = id_;
    return f;
}

double FeecBackend::source_integral() const { return load_.sum(); }

double FeecBackend::slaving_residual(const LocalField& field) const {
    const Eigen::VectorXd a = m1() * field.flux, b = m1() * pair_flux(field.pressure);
    return (a - b).norm() / std::max(b.norm(), 1e-300);
}

}  // namespace ddfeec
