#include "ddfeec/fem_backend.hpp"

#include <algorithm>
#include <cmath>

#include "ddfeec/errors.hpp"

namespace ddfeec {

namespace {

using Triplets = std::vector<Eigen::Triplet<double>>;

// Thomas algorithm for a symmetric tridiagonal system.
Eigen::VectorXd solve_tridiagonal(const Eigen::VectorXd& diag, const Eigen::VectorXd& off,
                                  Eigen::VectorXd rhs) {
    const Eigen::Index n = diag.size();
    Eigen::VectorXd c(n), d = diag;
    for (Eigen::Index k = 1; k < n; ++k) {
        const double m = off[k - 1] / d[k - 1];
        d[k] -= m * off[k - 1];
        rhs[k] -= m * rhs[k - 1];
    }
    rhs[n - 1] /= d[n - 1];
    for (Eigen::Index k = n - 2; k >= 0; --k) rhs[k] = (rhs[k] - off[k] * rhs[k + 1]) / d[k];
    return rhs;
}

}  // namespace

FemBackend::FemBackend(int id, const Rect& rect, int cells_x, int cells_y,
                       std::shared_ptr<const ProblemSpec> problem, std::array<bool, 4> trace_sides,
                       FemOptions options)
    : id_(id),
      rect_(rect),
      cx_(cells_x),
      cy_(cells_y),
      hx_(rect.width() / cells_x),
      hy_(rect.height() / cells_y),
      problem_(std::move(problem)),
      trace_sides_(trace_sides),
      opt_(options) {
    if (cx_ < 1 || cy_ < 1) throw InvalidInput("FEM backend needs at least one cell per axis");
    const int nn = node_count(), stride = cx_ + 1;

    Triplets trip;
    F_ = Eigen::VectorXd::Zero(nn);
    G_ = Eigen::VectorXd::Zero(nn);
    lumped_ = Eigen::VectorXd::Zero(nn);
    for (int j = 0; j < cy_; ++j)
        for (int i = 0; i < cx_; ++i) {
            const int idx[4] = {j * stride + i, j * stride + i + 1, (j + 1) * stride + i,
                                (j + 1) * stride + i + 1};
            const CellRule r = cell_rule(i, j);
            double ke[4][4] = {};
            double fe[4] = {};
            for (std::size_t q = 0; q < r.w.size(); ++q) {
                const double a = r.a[q], b = r.b[q];
                const Point x{rect_.x0 + (i + a) * hx_, rect_.y0 + (j + b) * hy_};
                const double phi[4] = {(1 - a) * (1 - b), a * (1 - b), (1 - a) * b, a * b};
                const Vec2 g[4] = {Vec2(-(1 - b) / hx_, -(1 - a) / hy_), Vec2((1 - b) / hx_, -a / hy_),
                                   Vec2(-b / hx_, (1 - a) / hy_), Vec2(b / hx_, a / hy_)};
                const Mat2 k = problem_->K(x);
                const double fx = problem_->f(x);
                for (int s = 0; s < 4; ++s) {
                    const Vec2 kg = k * g[s];
                    for (int t = 0; t < 4; ++t) ke[t][s] += r.w[q] * g[t].dot(kg);
                    fe[s] += r.w[q] * fx * phi[s];
                }
            }
            for (int s = 0; s < 4; ++s) {
                F_[idx[s]] += fe[s];
                lumped_[idx[s]] += 0.25 * hx_ * hy_;
                for (int t = 0; t < 4; ++t) trip.emplace_back(idx[t], idx[s], ke[t][s]);
            }
        }
    A_.resize(nn, nn);
    A_.setFromTriplets(trip.begin(), trip.end());

    if (problem_->bc == BcKind::Neumann) {
        const Rule1D g1 = gauss_legendre(opt_.gauss);
        for (Side s : kSides) {
            if (trace_sides_[static_cast<int>(s)]) continue;
            const bool horiz = (s == Side::Bottom || s == Side::Top);
            const int ncell = horiz ? cx_ : cy_;
            const double h = horiz ? hx_ : hy_;
            for (int c = 0; c < ncell; ++c) {
                int n0, n1;
                switch (s) {
                    case Side::Bottom: n0 = c; n1 = c + 1; break;
                    case Side::Top: n0 = cy_ * stride + c; n1 = n0 + 1; break;
                    case Side::Left: n0 = c * stride; n1 = (c + 1) * stride; break;
                    default: n0 = c * stride + cx_; n1 = (c + 1) * stride + cx_; break;
                }
                for (std::size_t q = 0; q < g1.nodes.size(); ++q) {
                    const double t = g1.nodes[q];
                    const double gv = problem_->g(side_point(rect_, s, (c + t) * h));
                    G_[n0] += h * g1.weights[q] * gv * (1 - t);
                    G_[n1] += h * g1.weights[q] * gv * t;
                }
            }
        }
    }

    trace_index_.assign(nn, -1);
    free_index_.assign(nn, -1);
    for (int n = 0; n < nn; ++n) {
        const int i = n % stride, j = n / stride;
        const bool on = (j == 0 && trace_sides_[0]) || (i == cx_ && trace_sides_[1]) ||
                        (j == cy_ && trace_sides_[2]) || (i == 0 && trace_sides_[3]);
        if (on) {
            trace_index_[n] = static_cast<int>(trace_nodes_.size());
            trace_nodes_.push_back(n);
        } else {
            free_index_[n] = static_cast<int>(free_nodes_.size());
            free_nodes_.push_back(n);
        }
    }

    Triplets tff, tft;
    for (int col = 0; col < A_.outerSize(); ++col)
        for (Eigen::SparseMatrix<double>::InnerIterator it(A_, col); it; ++it) {
            const int r = static_cast<int>(it.row()), c = static_cast<int>(it.col());
            if (free_index_[r] < 0) continue;
            if (free_index_[c] >= 0) tff.emplace_back(free_index_[r], free_index_[c], it.value());
            else tft.emplace_back(free_index_[r], trace_index_[c], it.value());
        }
    const int nf = static_cast<int>(free_nodes_.size()), nt = trace_size();
    A_ff_.resize(nf, nf);
    A_ff_.setFromTriplets(tff.begin(), tff.end());
    A_ft_.resize(nf, nt);
    A_ft_.setFromTriplets(tft.begin(), tft.end());
    if (nf > 0) {
        solver_.compute(A_ff_);
        if (solver_.info() != Eigen::Success) throw BackendFailure(id_, "local stiffness factorization failed");
        if ((solver_.vectorD().array() <= 0.0).any())
            throw BackendFailure(id_, "local stiffness matrix is singular");
    }
}

FemBackend::CellRule FemBackend::cell_rule(int i, int j) const {
    auto local_breaks = [&](const std::vector<double>& global, double origin, double h) {
        std::vector<double> loc;
        for (double v : global) loc.push_back((v - origin) / h);
        return merge_breaks(uniform_breaks(0.0, 1.0, opt_.subcells), loc, 0.0, 1.0, 1e-10);
    };
    const auto bx = local_breaks(problem_->breaks_x, rect_.x0 + i * hx_, hx_);
    const auto by = local_breaks(problem_->breaks_y, rect_.y0 + j * hy_, hy_);
    const Rule1D rx = composite_gauss(bx, opt_.gauss), ry = composite_gauss(by, opt_.gauss);
    CellRule r;
    for (std::size_t q = 0; q < ry.nodes.size(); ++q)
        for (std::size_t p = 0; p < rx.nodes.size(); ++p) {
            r.a.push_back(rx.nodes[p]);
            r.b.push_back(ry.nodes[q]);
            r.w.push_back(rx.weights[p] * ry.weights[q] * hx_ * hy_);
        }
    return r;
}

Point FemBackend::node_point(int n) const {
    const int stride = cx_ + 1;
    const int i = n % stride, j = n / stride;
    return {i == cx_ ? rect_.x1 : rect_.x0 + i * hx_, j == cy_ ? rect_.y1 : rect_.y0 + j * hy_};
}

std::vector<double> FemBackend::trace_breaks(Side s) const {
    const bool horiz = (s == Side::Bottom || s == Side::Top);
    return uniform_breaks(0.0, horiz ? rect_.width() : rect_.height(), horiz ? cx_ : cy_);
}

void FemBackend::eval_trace(Side side, double arc, std::vector<std::pair<int, double>>& out) const {
    out.clear();
    if (!trace_sides_[static_cast<int>(side)]) return;
    const bool horiz = (side == Side::Bottom || side == Side::Top);
    const int ncell = horiz ? cx_ : cy_;
    const double h = horiz ? hx_ : hy_;
    const int k = std::clamp(static_cast<int>(std::floor(arc / h)), 0, ncell - 1);
    const double t = std::clamp(arc / h - k, 0.0, 1.0);
    const int stride = cx_ + 1;
    auto node = [&](int m) {
        switch (side) {
            case Side::Bottom: return m;
            case Side::Top: return cy_ * stride + m;
            case Side::Left: return m * stride;
            default: return m * stride + cx_;
        }
    };
    out.emplace_back(trace_index_[node(k)], 1.0 - t);
    out.emplace_back(trace_index_[node(k + 1)], t);
}

std::optional<Point> FemBackend::trace_node(int dof) const { return node_point(trace_nodes_.at(dof)); }

LocalField FemBackend::solve(const Eigen::VectorXd& trace, bool loaded) const {
    if (trace.size() != trace_size())
        throw InvalidInput("trace vector length does not match the trace dofs");
    Eigen::VectorXd p(node_count());
    for (int t = 0; t < trace_size(); ++t) p[trace_nodes_[t]] = trace[t];
    if (!free_nodes_.empty()) {
        Eigen::VectorXd rhs = -(A_ft_ * trace);
        if (loaded)
            for (std::size_t k = 0; k < free_nodes_.size(); ++k)
                rhs[k] += F_[free_nodes_[k]] + G_[free_nodes_[k]];
        Eigen::VectorXd x = solver_.solve(rhs);
        x += solver_.solve(rhs - A_ff_ * x);
        if (!x.allFinite()) throw BackendFailure(id_, "local solve produced non-finite values");
        for (std::size_t k = 0; k < free_nodes_.size(); ++k) p[free_nodes_[k]] = x[k];
    }
    LocalField f;
    f.pressure = std::move(p);
    f.flux = project_flux(f.pressure);
    f.backend = BackendKind::Fem;
    f.subdomain = id_;
    f.loaded = loaded;
    return f;
}

LocalField FemBackend::solve_star(const Eigen::VectorXd& trace) const { return solve(trace, false); }

LocalField FemBackend::solve_bar() const { return solve(Eigen::VectorXd::Zero(trace_size()), true); }

Eigen::VectorXd FemBackend::trace_flux(const LocalField& field) const {
    const Eigen::VectorXd r = A_ * field.pressure;
    Eigen::VectorXd out(trace_size());
    for (int t = 0; t < trace_size(); ++t) {
        const int n = trace_nodes_[t];
        out[t] = r[n] - (field.loaded ? F_[n] + G_[n] : 0.0);
    }
    return out;
}

double FemBackend::energy(const LocalField& a, const LocalField& b) const {
    if (a.backend != BackendKind::Fem || b.backend != BackendKind::Fem || a.subdomain != id_ ||
        b.subdomain != id_)
        throw InvalidInput("energy: fields belong to a different backend");
    return a.pressure.dot(A_ * b.pressure);
}

double FemBackend::flux_pairing(const LocalField& a, const LocalField& w) const {
    const Rule1D g = gauss_legendre(2);
    double total = 0.0;
    const int ux_off = cx_ * (cy_ + 1);
    for (int j = 0; j < cy_; ++j)
        for (int i = 0; i < cx_; ++i)
            for (int q = 0; q < 2; ++q)
                for (int p = 0; p < 2; ++p) {
                    const double aa = g.nodes[p], bb = g.nodes[q];
                    const double ux = a.flux[i * (cy_ + 1) + j] * (1 - bb) + a.flux[i * (cy_ + 1) + j + 1] * bb;
                    const double uy = a.flux[ux_off + j * (cx_ + 1) + i] * (1 - aa) +
                                      a.flux[ux_off + j * (cx_ + 1) + i + 1] * aa;
                    const Vec2 gw = grad_in_cell(w.pressure, i, j, aa, bb);
                    total += g.weights[p] * g.weights[q] * hx_ * hy_ * (ux * gw.x() + uy * gw.y());
                }
    return total;
}

LocalField FemBackend::h1_extension(const Eigen::VectorXd& trace) const {
    std::call_once(h1_once_, [this] {
        const int stride = cx_ + 1;
        Triplets tff, tft;
        const double kx = hy_ / hx_, ky = hx_ / hy_, m = hx_ * hy_;
        // bilinear Laplacian plus mass element matrices
        const double lx[4][4] = {{2, -2, 1, -1}, {-2, 2, -1, 1}, {1, -1, 2, -2}, {-1, 1, -2, 2}};
        const double ly[4][4] = {{2, 1, -2, -1}, {1, 2, -1, -2}, {-2, -1, 2, 1}, {-1, -2, 1, 2}};
        const double mm[4][4] = {{4, 2, 2, 1}, {2, 4, 1, 2}, {2, 1, 4, 2}, {1, 2, 2, 4}};
        for (int j = 0; j < cy_; ++j)
            for (int i = 0; i < cx_; ++i) {
                const int idx[4] = {j * stride + i, j * stride + i + 1, (j + 1) * stride + i,
                                    (j + 1) * stride + i + 1};
                for (int s = 0; s < 4; ++s) {
                    const int r = free_index_[idx[s]];
                    if (r < 0) continue;
                    for (int t = 0; t < 4; ++t) {
                        const double v = kx * lx[s][t] / 6.0 + ky * ly[s][t] / 6.0 + m * mm[s][t] / 36.0;
                        if (free_index_[idx[t]] >= 0) tff.emplace_back(r, free_index_[idx[t]], v);
                        else tft.emplace_back(r, trace_index_[idx[t]], v);
                    }
                }
            }
        const int nf = static_cast<int>(free_nodes_.size());
        H_ff_.resize(nf, nf);
        H_ff_.setFromTriplets(tff.begin(), tff.end());
        H_ft_.resize(nf, trace_size());
        H_ft_.setFromTriplets(tft.begin(), tft.end());
        h1_solver_ = std::make_unique<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>();
        if (nf > 0) h1_solver_->compute(H_ff_);
    });
    Eigen::VectorXd p(node_count());
    for (int t = 0; t < trace_size(); ++t) p[trace_nodes_[t]] = trace[t];
    if (!free_nodes_.empty()) {
        const Eigen::VectorXd x = h1_solver_->solve(-(H_ft_ * trace));
        for (std::size_t k = 0; k < free_nodes_.size(); ++k) p[free_nodes_[k]] = x[k];
    }
    LocalField f;
    f.pressure = std::move(p);
    f.flux = project_flux(f.pressure);
    f.subdomain = id_;
    return f;
}

Vec2 FemBackend::grad_in_cell(const Eigen::VectorXd& p, int i, int j, double a, double b) const {
    const int stride = cx_ + 1;
    const double p0 = p[j * stride + i], p1 = p[j * stride + i + 1], p2 = p[(j + 1) * stride + i],
                 p3 = p[(j + 1) * stride + i + 1];
    return Vec2(((p1 - p0) * (1 - b) + (p3 - p2) * b) / hx_, ((p2 - p0) * (1 - a) + (p3 - p1) * a) / hy_);
}

Eigen::VectorXd FemBackend::project_flux(const Eigen::VectorXd& pressure) const {
    return flux_projection(pressure, false, nullptr);
}

Eigen::VectorXd FemBackend::flux_projection(const Eigen::VectorXd& pressure, bool identity_k,
                                            double* residual) const {
    const int nux = cx_ * (cy_ + 1), nuy = (cx_ + 1) * cy_;
    Eigen::VectorXd u(nux + nuy);
    double res2 = 0.0, ref2 = 0.0;
    std::vector<CellRule> rules;
    auto kgrad = [&](int i, int j, double a, double b) {
        const Vec2 g = grad_in_cell(pressure, i, j, a, b);
        if (identity_k) return g;
        const Point x{rect_.x0 + (i + a) * hx_, rect_.y0 + (j + b) * hy_};
        return Vec2(problem_->K(x) * g);
    };
    // u_x: per column of cells, hats in y
    for (int i = 0; i < cx_; ++i) {
        Eigen::VectorXd d = Eigen::VectorXd::Zero(cy_ + 1), o = Eigen::VectorXd::Zero(cy_),
                        r = Eigen::VectorXd::Zero(cy_ + 1);
        for (int j = 0; j < cy_; ++j) {
            d[j] += hx_ * hy_ / 3.0;
            d[j + 1] += hx_ * hy_ / 3.0;
            o[j] += hx_ * hy_ / 6.0;
            const CellRule cr = cell_rule(i, j);
            for (std::size_t q = 0; q < cr.w.size(); ++q) {
                const double v = kgrad(i, j, cr.a[q], cr.b[q]).x();
                r[j] += cr.w[q] * v * (1 - cr.b[q]);
                r[j + 1] += cr.w[q] * v * cr.b[q];
            }
        }
        const Eigen::VectorXd s = solve_tridiagonal(d, o, r);
        for (int j = 0; j <= cy_; ++j) {
            u[i * (cy_ + 1) + j] = s[j];
            double mv = d[j] * s[j] + (j > 0 ? o[j - 1] * s[j - 1] : 0.0) + (j < cy_ ? o[j] * s[j + 1] : 0.0);
            res2 += (mv - r[j]) * (mv - r[j]);
            ref2 += r[j] * r[j];
        }
    }
    // u_y: per row of cells, hats in x
    for (int j = 0; j < cy_; ++j) {
        Eigen::VectorXd d = Eigen::VectorXd::Zero(cx_ + 1), o = Eigen::VectorXd::Zero(cx_),
                        r = Eigen::VectorXd::Zero(cx_ + 1);
        for (int i = 0; i < cx_; ++i) {
            d[i] += hx_ * hy_ / 3.0;
            d[i + 1] += hx_ * hy_ / 3.0;
            o[i] += hx_ * hy_ / 6.0;
            const CellRule cr = cell_rule(i, j);
            for (std::size_t q = 0; q < cr.w.size(); ++q) {
                const double v = kgrad(i, j, cr.a[q], cr.b[q]).y();
                r[i] += cr.w[q] * v * (1 - cr.a[q]);
                r[i + 1] += cr.w[q] * v * cr.a[q];
            }
        }
        const Eigen::VectorXd s = solve_tridiagonal(d, o, r);
        for (int i = 0; i <= cx_; ++i) {
            u[nux + j * (cx_ + 1) + i] = s[i];
            double mv = d[i] * s[i] + (i > 0 ? o[i - 1] * s[i - 1] : 0.0) + (i < cx_ ? o[i] * s[i + 1] : 0.0);
            res2 += (mv - r[i]) * (mv - r[i]);
            ref2 += r[i] * r[i];
        }
    }
    if (residual) *residual = std::sqrt(res2) / std::max(std::sqrt(ref2), 1e-300);
    return u;
}

double FemBackend::slaving_residual(const LocalField& field) const {
    double res = 0.0;
    const Eigen::VectorXd u = flux_projection(field.pressure, false, &res);
    // residual of the stored flux against the projection equations
    const double drift = (u - field.flux).norm() / std::max(u.norm(), 1e-300);
    return std::max(res, drift);
}

double FemBackend::gradient_inclusion_defect() const {
    double worst = 0.0;
    const Rule1D g = gauss_legendre(3);
    for (int n = 0; n < node_count(); ++n) {
        LocalField f;
        f.pressure = Eigen::VectorXd::Zero(node_count());
        f.pressure[n] = 1.0;
        f.flux = flux_projection(f.pressure, true, nullptr);
        f.subdomain = id_;
        for (int j = 0; j < cy_; ++j)
            for (int i = 0; i < cx_; ++i)
                for (double a : g.nodes)
                    for (double b : g.nodes) {
                        const Point x{rect_.x0 + (i + a) * hx_, rect_.y0 + (j + b) * hy_};
                        const PointValue v = evaluate(f, x);
                        worst = std::max(worst, (v.u - v.grad).cwiseAbs().maxCoeff() * std::min(hx_, hy_));
                    }
    }
    return worst;
}

void FemBackend::locate(const Point& x, int& i, int& j, double& a, double& b) const {
    if (!rect_.contains(x, 1e-10)) throw OutOfDomain("point outside subdomain");
    const double sx = (x.x - rect_.x0) / hx_, sy = (x.y - rect_.y0) / hy_;
    i = std::clamp(static_cast<int>(std::floor(sx)), 0, cx_ - 1);
    j = std::clamp(static_cast<int>(std::floor(sy)), 0, cy_ - 1);
    a = std::clamp(sx - i, 0.0, 1.0);
    b = std::clamp(sy - j, 0.0, 1.0);
}

PointValue FemBackend::evaluate(const LocalField& field, const Point& x) const {
    int i, j;
    double a, b;
    locate(x, i, j, a, b);
    const int stride = cx_ + 1;
    const Eigen::VectorXd& p = field.pressure;
    PointValue v;
    v.p = p[j * stride + i] * (1 - a) * (1 - b) + p[j * stride + i + 1] * a * (1 - b) +
          p[(j + 1) * stride + i] * (1 - a) * b + p[(j + 1) * stride + i + 1] * a * b;
    v.grad = grad_in_cell(p, i, j, a, b);
    const int nux = cx_ * (cy_ + 1);
    v.u.x() = field.flux[i * (cy_ + 1) + j] * (1 - b) + field.flux[i * (cy_ + 1) + j + 1] * b;
    v.u.y() = field.flux[nux + j * (cx_ + 1) + i] * (1 - a) + field.flux[nux + j * (cx_ + 1) + i + 1] * a;
    return v;
}

ErrorIntegrals FemBackend::error_integrals(const LocalField& field, const ProblemSpec& problem) const {
    if (!problem.exact) throw InvalidInput("error integrals need an exact solution");
    ErrorIntegrals e;
    for (int j = 0; j < cy_; ++j)
        for (int i = 0; i < cx_; ++i) {
            const CellRule cr = cell_rule(i, j);
            for (std::size_t q = 0; q < cr.w.size(); ++q) {
                const Point x{rect_.x0 + (i + cr.a[q]) * hx_, rect_.y0 + (j + cr.b[q]) * hy_};
                const PointValue v = evaluate(field, x);
                const Vec2 gex = problem.exact->grad(x);
                e.p2 += cr.w[q] * std::pow(v.p - problem.exact->p(x), 2);
                e.u2 += cr.w[q] * (v.u - problem.K(x) * gex).squaredNorm();
                e.grad2 += cr.w[q] * (v.grad - gex).squaredNorm();
            }
        }
    return e;
}

double FemBackend::mean_integral(const LocalField& field) const { return lumped_.dot(field.pressure); }

LocalField FemBackend::constant_field(double c) const {
    LocalField f;
    f.pressure = Eigen::VectorXd::Constant(node_count(), c);
    f.flux = Eigen::VectorXd::Zero(cx_ * (cy_ + 1) + (cx_ + 1) * cy_);
    f.subdomain = id_;
    return f;
}

double FemBackend::source_integral() const { return F_.sum() + G_.sum(); }

}  // namespace ddfeec
