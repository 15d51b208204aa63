#include "ddfeec/mortar.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>

#include "ddfeec/errors.hpp"
#include "ddfeec/parallel.hpp"

namespace ddfeec {

double MortarEdge::length() const { return std::hypot(b.x - a.x, b.y - a.y); }

void MortarSpace::basis_at(int edge, double arc, std::vector<std::pair<int, double>>& out) const {
    out.clear();
    const MortarEdge& e = edges[edge];
    const int m = static_cast<int>(e.nodes.size()) - 1;
    const double h = e.length() / m;
    const int k = std::clamp(static_cast<int>(std::floor(arc / h)), 0, m - 1);
    const double t = std::clamp(arc / h - k, 0.0, 1.0);
    out.emplace_back(e.nodes[k], 1.0 - t);
    out.emplace_back(e.nodes[k + 1], t);
}

double MortarSpace::eval(const Eigen::VectorXd& lambda, int edge, double arc) const {
    std::vector<std::pair<int, double>> b;
    basis_at(edge, arc, b);
    double v = 0.0;
    for (auto [k, w] : b) v += w * lambda[k];
    return v;
}

double MortarSpace::interface_length() const {
    double l = 0.0;
    for (const auto& e : edges)
        if (e.interior) l += e.length();
    return l;
}

Eigen::VectorXd MortarSpace::expand(const Eigen::VectorXd& free_values,
                                    const Eigen::VectorXd& fixed_values) const {
    Eigen::VectorXd v = fixed_values.size() == size() ? fixed_values : Eigen::VectorXd::Zero(size());
    for (int k = 0; k < free_size(); ++k) v[free_dofs[k]] = free_values[k];
    return v;
}

MortarSpace build_mortar_space(const Decomposition& d, double H, MortarFlavor flavor) {
    if (!(H > 0.0)) throw InvalidInput("mortar spacing H must be positive");
    MortarSpace ms;
    ms.decomposition = d;
    ms.H = H;
    ms.flavor = flavor;
    ms.side_edge.assign(d.subdomains.size(), {-1, -1, -1, -1});

    std::map<std::pair<long long, long long>, int> vertex_ids;
    std::vector<Point> raw;
    auto vertex = [&](const Point& p) {
        const auto key = std::make_pair(std::llround(p.x * 1e9), std::llround(p.y * 1e9));
        auto it = vertex_ids.find(key);
        if (it != vertex_ids.end()) return it->second;
        raw.push_back(p);
        vertex_ids.emplace(key, static_cast<int>(raw.size()) - 1);
        return static_cast<int>(raw.size()) - 1;
    };
    auto add_edge = [&](MortarEdge e) {
        const double len = e.length();
        const double ratio = len / H;
        const int m = std::max(1, static_cast<int>(std::lround(ratio)));
        if (std::abs(ratio - m) > 1e-12 * std::max(1.0, ratio))
            ms.adjustments.push_back("edge of length " + std::to_string(len) + " uses " +
                                     std::to_string(m) + " mortar elements (spacing " +
                                     std::to_string(len / m) + ")");
        e.nodes.push_back(vertex(e.a));
        for (int k = 1; k < m; ++k) {
            const double t = static_cast<double>(k) / m;
            raw.push_back({e.a.x + t * (e.b.x - e.a.x), e.a.y + t * (e.b.y - e.a.y)});
            e.nodes.push_back(static_cast<int>(raw.size()) - 1);
        }
        e.nodes.push_back(vertex(e.b));
        ms.edges.push_back(std::move(e));
        return static_cast<int>(ms.edges.size()) - 1;
    };

    for (const auto& ie : d.interior_edges) {
        MortarEdge e;
        e.interior = true;
        e.a = ie.a;
        e.b = ie.b;
        e.left = ie.left;
        e.right = ie.right;
        e.left_side = ie.vertical ? Side::Right : Side::Top;
        e.right_side = ie.vertical ? Side::Left : Side::Bottom;
        const int id = add_edge(e);
        ms.side_edge[ie.left][static_cast<int>(e.left_side)] = id;
        ms.side_edge[ie.right][static_cast<int>(e.right_side)] = id;
    }
    if (flavor == MortarFlavor::Dirichlet) {
        for (const auto& be : d.boundary_edges) {
            MortarEdge e;
            e.interior = false;
            e.a = be.a;
            e.b = be.b;
            e.left = be.owner;
            e.left_side = be.side;
            const int id = add_edge(e);
            ms.side_edge[be.owner][static_cast<int>(be.side)] = id;
        }
    }

    // renumber lexicographically for deterministic ordering
    std::vector<int> order(raw.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (raw[a].x != raw[b].x) return raw[a].x < raw[b].x;
        return raw[a].y < raw[b].y;
    });
    std::vector<int> newid(raw.size());
    for (std::size_t k = 0; k < order.size(); ++k) newid[order[k]] = static_cast<int>(k);
    ms.nodes.resize(raw.size());
    for (std::size_t k = 0; k < raw.size(); ++k) ms.nodes[newid[k]] = raw[k];
    for (auto& e : ms.edges)
        for (int& n : e.nodes) n = newid[n];

    const Rect& dom = d.domain;
    const double tol = 1e-12 * std::max(dom.width(), dom.height());
    ms.fixed.assign(ms.nodes.size(), false);
    ms.free_index.assign(ms.nodes.size(), -1);
    for (int k = 0; k < ms.size(); ++k) {
        const Point& p = ms.nodes[k];
        const bool on_boundary = std::abs(p.x - dom.x0) < tol || std::abs(p.x - dom.x1) < tol ||
                                 std::abs(p.y - dom.y0) < tol || std::abs(p.y - dom.y1) < tol;
        ms.fixed[k] = (flavor == MortarFlavor::Dirichlet) && on_boundary;
        if (ms.fixed[k]) {
            ms.fixed_dofs.push_back(k);
        } else {
            ms.free_index[k] = static_cast<int>(ms.free_dofs.size());
            ms.free_dofs.push_back(k);
        }
    }
    return ms;
}

namespace {

struct SideRule {
    std::vector<double> arc, w;
};

SideRule side_rule(const MortarSpace& ms, int edge, const std::vector<std::vector<double>>& extra) {
    const MortarEdge& e = ms.edges[edge];
    const double len = e.length();
    const int m = static_cast<int>(e.nodes.size()) - 1;
    std::vector<double> br = uniform_breaks(0.0, len, m);
    for (const auto& x : extra) br = merge_breaks(br, x, 0.0, len, 1e-11);
    const Rule1D r = composite_gauss(br, 4);
    return {r.nodes, r.weights};
}

}  // namespace

TraceProjection build_projection(const MortarSpace& ms, const std::vector<LocalSolverPtr>& solvers,
                                 ProjectionMode mode) {
    TraceProjection tp;
    tp.mode = mode;
    const int nm = ms.size();
    std::vector<std::pair<int, double>> tb, mb;
    for (std::size_t i = 0; i < solvers.size(); ++i) {
        const LocalSolver& s = *solvers[i];
        const int nt = s.trace_size();
        for (Side side : kSides) {
            const bool has_edge = ms.side_edge[i][static_cast<int>(side)] >= 0;
            if (has_edge != s.trace_sides()[static_cast<int>(side)])
                throw InvalidInput("subdomain " + std::to_string(i) +
                                   ": trace sides of the local solver do not match the mortar skeleton");
        }
        Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(nt, nm);
        if (mode == ProjectionMode::L2) {
            Eigen::MatrixXd G = Eigen::MatrixXd::Zero(nt, nt), R = Eigen::MatrixXd::Zero(nt, nm);
            for (Side side : kSides) {
                const int e = ms.side_edge[i][static_cast<int>(side)];
                if (e < 0) continue;
                const SideRule r = side_rule(ms, e, {s.trace_breaks(side)});
                for (std::size_t q = 0; q < r.w.size(); ++q) {
                    s.eval_trace(side, r.arc[q], tb);
                    ms.basis_at(e, r.arc[q], mb);
                    for (auto [a, va] : tb) {
                        for (auto [b, vb] : tb) G(a, b) += r.w[q] * va * vb;
                        for (auto [k, vk] : mb) R(a, k) += r.w[q] * va * vk;
                    }
                }
            }
            Eigen::LDLT<Eigen::MatrixXd> ldlt(G);
            if (ldlt.info() != Eigen::Success || (ldlt.vectorD().array() <= 0.0).any())
                throw BackendFailure(static_cast<int>(i), "trace Gram matrix is singular");
            Q = ldlt.solve(R);
            const double rn = std::max(R.norm(), 1e-300);
            tp.orthogonality_residual = std::max(tp.orthogonality_residual, (G * Q - R).norm() / rn);
        } else {
            for (int a = 0; a < nt; ++a) {
                const auto node = s.trace_node(a);
                if (!node) throw InvalidInput("interpolation mode needs nodal trace dofs");
                bool found = false;
                for (Side side : kSides) {
                    const int e = ms.side_edge[i][static_cast<int>(side)];
                    if (e < 0) continue;
                    const Rect& r = s.rect();
                    const double tol = 1e-10 * std::max(r.width(), r.height());
                    const bool on = (side == Side::Bottom && std::abs(node->y - r.y0) < tol) ||
                                    (side == Side::Top && std::abs(node->y - r.y1) < tol) ||
                                    (side == Side::Left && std::abs(node->x - r.x0) < tol) ||
                                    (side == Side::Right && std::abs(node->x - r.x1) < tol);
                    if (!on) continue;
                    ms.basis_at(e, side_arc(r, side, *node), mb);
                    for (auto [k, vk] : mb) Q(a, k) += vk;
                    found = true;
                    break;
                }
                if (!found) throw InvalidInput("trace node is not on a mortar edge");
            }
        }
        std::vector<int> touched;
        for (int k = 0; k < nm; ++k)
            if (Q.col(k).cwiseAbs().maxCoeff() > 0.0) touched.push_back(k);
        tp.Q.push_back(std::move(Q));
        tp.touched.push_back(std::move(touched));
    }
    return tp;
}

double unisolvency_sigma(const MortarSpace& ms, const TraceProjection& proj) {
    if (ms.free_size() == 0) return std::numeric_limits<double>::infinity();
    int rows = 0;
    for (const auto& q : proj.Q) rows += static_cast<int>(q.rows());
    Eigen::MatrixXd S(rows, ms.free_size());
    int r0 = 0;
    for (const auto& q : proj.Q) {
        for (int k = 0; k < ms.free_size(); ++k) S.block(r0, k, q.rows(), 1) = q.col(ms.free_dofs[k]);
        r0 += static_cast<int>(q.rows());
    }
    if (rows < ms.free_size()) return 0.0;
    Eigen::BDCSVD<Eigen::MatrixXd> svd(S);
    return svd.singularValues().minCoeff();
}

std::vector<double> edge_jumps(const MortarSpace& ms, const TraceProjection& proj,
                               const std::vector<LocalSolverPtr>& solvers) {
    std::vector<double> out;
    std::vector<std::pair<int, double>> tb;
    for (std::size_t e = 0; e < ms.edges.size(); ++e) {
        const MortarEdge& edge = ms.edges[e];
        if (!edge.interior) continue;
        const LocalSolver& L = *solvers[edge.left];
        const LocalSolver& R = *solvers[edge.right];
        const SideRule r = side_rule(ms, static_cast<int>(e),
                                     {L.trace_breaks(edge.left_side), R.trace_breaks(edge.right_side)});
        double worst = 0.0;
        for (int k : edge.nodes) {
            double jump2 = 0.0, norm2 = 0.0;
            std::vector<std::pair<int, double>> mb;
            for (std::size_t q = 0; q < r.w.size(); ++q) {
                double vl = 0.0, vr = 0.0, vm = 0.0;
                L.eval_trace(edge.left_side, r.arc[q], tb);
                for (auto [a, va] : tb) vl += va * proj.Q[edge.left](a, k);
                R.eval_trace(edge.right_side, r.arc[q], tb);
                for (auto [a, va] : tb) vr += va * proj.Q[edge.right](a, k);
                ms.basis_at(static_cast<int>(e), r.arc[q], mb);
                for (auto [kk, vk] : mb)
                    if (kk == k) vm += vk;
                jump2 += r.w[q] * (vl - vr) * (vl - vr);
                norm2 += r.w[q] * vm * vm;
            }
            worst = std::max(worst, std::sqrt(jump2 / norm2));
        }
        out.push_back(worst);
    }
    return out;
}

SchurSystem::SchurSystem(std::shared_ptr<const ProblemSpec> problem, MortarSpace mortar,
                         std::vector<LocalSolverPtr> solvers, ProjectionMode mode)
    : problem_(std::move(problem)), mortar_(std::move(mortar)), solvers_(std::move(solvers)) {
    if (solvers_.size() != mortar_.decomposition.subdomains.size())
        throw InvalidInput("one local solver per subdomain is required");
    for (std::size_t i = 0; i < solvers_.size(); ++i)
        if (solvers_[i]->subdomain() != static_cast<int>(i))
            throw InvalidInput("local solvers must be ordered by subdomain id");
    proj_ = build_projection(mortar_, solvers_, mode);

    fixed_values_ = Eigen::VectorXd::Zero(mortar_.size());
    for (int k : mortar_.fixed_dofs) fixed_values_[k] = problem_->g(mortar_.nodes[k]);

    const int n = static_cast<int>(solvers_.size());
    bar_.resize(n);
    std::vector<Eigen::VectorXd> parts(n);
    parallel_for(n, [&](int i) {
        bar_[i] = solvers_[i]->solve_bar();
        parts[i] = -(proj_.Q[i].transpose() * solvers_[i]->trace_flux(bar_[i]));
    });
    load_ = Eigen::VectorXd::Zero(mortar_.size());
    for (const auto& p : parts) load_ += p;
}

Eigen::VectorXd SchurSystem::apply_full(const Eigen::VectorXd& lambda) const {
    const int n = static_cast<int>(solvers_.size());
    std::vector<Eigen::VectorXd> parts(n);
    parallel_for(n, [&](int i) {
        const Eigen::VectorXd t = proj_.Q[i] * lambda;
        if (t.cwiseAbs().maxCoeff() == 0.0) return;
        parts[i] = proj_.Q[i].transpose() * solvers_[i]->trace_flux(solvers_[i]->solve_star(t));
    });
    Eigen::VectorXd out = Eigen::VectorXd::Zero(mortar_.size());
    for (const auto& p : parts)
        if (p.size()) out += p;
    return out;
}

Eigen::VectorXd SchurSystem::apply(const Eigen::VectorXd& lambda_free) const {
    const Eigen::VectorXd full = apply_full(mortar_.expand(lambda_free, Eigen::VectorXd()));
    Eigen::VectorXd out(mortar_.free_size());
    for (int k = 0; k < mortar_.free_size(); ++k) out[k] = full[mortar_.free_dofs[k]];
    return out;
}

double SchurSystem::form_energy(const Eigen::VectorXd& lambda, const Eigen::VectorXd& mu) const {
    double total = 0.0;
    for (std::size_t i = 0; i < solvers_.size(); ++i) {
        const LocalSolver& s = *solvers_[i];
        total += s.energy(s.solve_star(proj_.Q[i] * lambda), s.solve_star(proj_.Q[i] * mu));
    }
    return total;
}

double SchurSystem::form_flux(const Eigen::VectorXd& lambda, const Eigen::VectorXd& mu) const {
    double total = 0.0;
    for (std::size_t i = 0; i < solvers_.size(); ++i) {
        const LocalSolver& s = *solvers_[i];
        total += s.flux_pairing(s.solve_star(proj_.Q[i] * lambda), s.h1_extension(proj_.Q[i] * mu));
    }
    return total;
}

Eigen::VectorXd SchurSystem::rhs() const {
    const Eigen::VectorXd lift = apply_full(fixed_values_);
    Eigen::VectorXd b(mortar_.free_size());
    for (int k = 0; k < mortar_.free_size(); ++k) {
        const int d = mortar_.free_dofs[k];
        b[k] = load_[d] - lift[d];
    }
    return b;
}

Eigen::VectorXd SchurSystem::diagonal() const {
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(mortar_.free_size());
    const int n = static_cast<int>(solvers_.size());
    std::vector<Eigen::VectorXd> parts(n);
    parallel_for(n, [&](int i) {
        parts[i] = Eigen::VectorXd::Zero(mortar_.free_size());
        for (int k : proj_.touched[i]) {
            const int f = mortar_.free_index[k];
            if (f < 0) continue;
            const Eigen::VectorXd t = proj_.Q[i].col(k);
            parts[i][f] = t.dot(solvers_[i]->trace_flux(solvers_[i]->solve_star(t)));
        }
    });
    for (const auto& p : parts) diag += p;
    return diag;
}

Eigen::MatrixXd SchurSystem::dense() const {
    const int n = mortar_.free_size();
    Eigen::MatrixXd S(n, n);
    for (int k = 0; k < n; ++k) S.col(k) = apply(Eigen::VectorXd::Unit(n, k));
    return S;
}

double SchurSystem::unisolvency() const { return unisolvency_sigma(mortar_, proj_); }

SolveResult SchurSystem::solve(const SchurOptions& opt) const {
    const double sigma = unisolvency();
    if (sigma < opt.unisolvency_threshold && !opt.allow_rank_deficient) throw UnisolvencyWarning(sigma);

    const bool neumann = mortar_.flavor == MortarFlavor::Neumann;
    const int n = mortar_.free_size();
    SolveResult res;
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    if (n > 0) {
        Eigen::VectorXd b = rhs();
        auto deflate = [&](Eigen::VectorXd& v) {
            if (neumann) v.array() -= v.mean();
        };
        deflate(b);
        Eigen::VectorXd diag = diagonal();
        for (int k = 0; k < n; ++k)
            if (!(diag[k] > 0.0)) diag[k] = 1.0;
        const double bnorm = b.norm();
        if (bnorm > 0.0) {
            Eigen::VectorXd r = b, z = r.cwiseQuotient(diag);
            deflate(z);
            Eigen::VectorXd p = z;
            double rz = r.dot(z);
            for (int it = 1; it <= opt.max_iter; ++it) {
                const Eigen::VectorXd Ap = apply(p);
                const double alpha = rz / p.dot(Ap);
                x += alpha * p;
                r -= alpha * Ap;
                deflate(r);
                const double rel = r.norm() / bnorm;
                res.residuals.push_back(rel);
                res.iterations = it;
                if (rel <= opt.tol) break;
                if (it == opt.max_iter)
                    throw ConvergenceFailure("mortar CG did not converge", res.residuals);
                z = r.cwiseQuotient(diag);
                deflate(z);
                const double rz_new = r.dot(z);
                p = z + (rz_new / rz) * p;
                rz = rz_new;
            }
        }
    }
    res.lambda = mortar_.expand(x, fixed_values_);
    if (neumann) {
        double integral = 0.0;
        for (const auto& e : mortar_.edges) {
            if (!e.interior) continue;
            const double h = e.length() / (e.nodes.size() - 1);
            for (std::size_t k = 0; k + 1 < e.nodes.size(); ++k)
                integral += 0.5 * h * (res.lambda[e.nodes[k]] + res.lambda[e.nodes[k + 1]]);
        }
        res.lambda.array() -= integral / mortar_.interface_length();
    }
    return res;
}

std::vector<LocalField> SchurSystem::reconstruct(const Eigen::VectorXd& lambda) const {
    const int n = static_cast<int>(solvers_.size());
    std::vector<LocalField> fields(n);
    parallel_for(n, [&](int i) { fields[i] = solvers_[i]->solve_star(proj_.Q[i] * lambda) + bar_[i]; });
    if (mortar_.flavor == MortarFlavor::Neumann) {
        double mean = 0.0;
        for (int i = 0; i < n; ++i) mean += solvers_[i]->mean_integral(fields[i]);
        mean /= mortar_.decomposition.domain.area();
        for (int i = 0; i < n; ++i) fields[i] += solvers_[i]->constant_field(-mean);
    }
    return fields;
}

double SchurSystem::conservation_residual(const std::vector<LocalField>& fields, double* scale) const {
    double sources = 0.0, balance = 0.0, mag = 0.0;
    const Eigen::VectorXd ones = Eigen::VectorXd::Ones(mortar_.size());
    for (std::size_t i = 0; i < solvers_.size(); ++i) {
        const double s = solvers_[i]->source_integral();
        // flux leaving through the interfaces, tested with Q_i 1
        const double out = (proj_.Q[i] * ones).dot(solvers_[i]->trace_flux(fields[i]));
        sources += s;
        balance += -out;
        mag += std::abs(s) + std::abs(out);
    }
    if (scale) *scale = std::max(1.0, mag);
    return sources - balance;
}

ErrorNorms SchurSystem::error_norms(const Eigen::VectorXd& lambda, const std::vector<LocalField>& fields) const {
    if (!problem_->exact) throw InvalidInput("error norms need an exact solution");
    ErrorNorms e;
    for (std::size_t i = 0; i < solvers_.size(); ++i) {
        const ErrorIntegrals ei = solvers_[i]->error_integrals(fields[i], *problem_);
        e.L2_p += ei.p2;
        e.L2_u += ei.u2;
        e.H1_semi += ei.grad2;
    }
    const Rule1D g = gauss_legendre(5);
    for (std::size_t k = 0; k < mortar_.edges.size(); ++k) {
        const MortarEdge& edge = mortar_.edges[k];
        if (!edge.interior) continue;
        const int m = static_cast<int>(edge.nodes.size()) - 1;
        const double len = edge.length(), h = len / m;
        for (int c = 0; c < m; ++c)
            for (std::size_t q = 0; q < g.nodes.size(); ++q) {
                const double arc = (c + g.nodes[q]) * h, t = arc / len;
                const Point x{edge.a.x + t * (edge.b.x - edge.a.x), edge.a.y + t * (edge.b.y - edge.a.y)};
                const double d = mortar_.eval(lambda, static_cast<int>(k), arc) - problem_->exact->p(x);
                e.L2_mortar += h * g.weights[q] * d * d;
            }
    }
    e.L2_p = std::sqrt(e.L2_p);
    e.L2_u = std::sqrt(e.L2_u);
    e.H1_semi = std::sqrt(e.H1_semi);
    e.L2_mortar = std::sqrt(e.L2_mortar);
    return e;
}

SchurDiagnostics SchurSystem::diagnostics(unsigned seed, bool with_spectrum) const {
    SchurDiagnostics d;
    const int n = mortar_.free_size();
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    Eigen::VectorXd l(n), m(n);
    for (int k = 0; k < n; ++k) l[k] = U(rng);
    for (int k = 0; k < n; ++k) m[k] = U(rng);
    if (n > 0) {
        const Eigen::VectorXd Sl = apply(l), Sm = apply(m);
        const double scale = std::sqrt(std::abs(l.dot(Sl)) * std::abs(m.dot(Sm)));
        d.symmetry_defect = std::abs(m.dot(Sl) - l.dot(Sm)) / std::max(scale, 1e-300);
        const Eigen::VectorXd lf = mortar_.expand(l, Eigen::VectorXd()), mf = mortar_.expand(m, Eigen::VectorXd());
        const double fe = form_energy(lf, mf), ff = form_flux(lf, mf);
        d.flux_energy_gap = std::abs(fe - ff) / std::max(scale, 1e-300);
    }
    if (with_spectrum && n > 0) {
        Eigen::MatrixXd S = dense();
        S = 0.5 * (S + S.transpose()).eval();
        if (mortar_.flavor == MortarFlavor::Neumann) {
            Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(n, 1);
            Eigen::HouseholderQR<Eigen::MatrixXd> qr(ones);
            const Eigen::MatrixXd Qm = qr.householderQ();
            const Eigen::MatrixXd Z = Qm.rightCols(n - 1);
            S = (Z.transpose() * S * Z).eval();
        }
        if (S.rows() > 0) {
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S, Eigen::EigenvaluesOnly);
            d.smallest_ritz = es.eigenvalues().minCoeff();
            d.largest_ritz = es.eigenvalues().maxCoeff();
        }
    }
    if (!with_spectrum && n > 0) {
        // Lanczos with full reorthogonalization; the mean is removed for the Neumann flavor
        const bool neu = mortar_.flavor == MortarFlavor::Neumann;
        auto deflate = [&](Eigen::VectorXd& v) {
            if (neu) v.array() -= v.mean();
        };
        const int steps = std::min(neu ? n - 1 : n, 40);
        if (steps > 0) {
            Eigen::MatrixXd V(n, steps);
            Eigen::VectorXd a(steps), b(steps);
            Eigen::VectorXd v = l;
            deflate(v);
            v /= v.norm();
            int k = 0;
            for (; k < steps; ++k) {
                V.col(k) = v;
                Eigen::VectorXd w = apply(v);
                deflate(w);
                a[k] = v.dot(w);
                for (int r = 0; r < 2; ++r) w -= V.leftCols(k + 1) * (V.leftCols(k + 1).transpose() * w);
                b[k] = w.norm();
                if (b[k] <= 1e-14 * std::abs(a[0])) {
                    ++k;
                    break;
                }
                v = w / b[k];
            }
            Eigen::MatrixXd T = Eigen::MatrixXd::Zero(k, k);
            for (int r = 0; r < k; ++r) {
                T(r, r) = a[r];
                if (r + 1 < k) T(r, r + 1) = T(r + 1, r) = b[r];
            }
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T, Eigen::EigenvaluesOnly);
            d.smallest_ritz = es.eigenvalues().minCoeff();
            d.largest_ritz = es.eigenvalues().maxCoeff();
        }
    }
    d.unisolvency_sigma = unisolvency();
    d.edge_jumps = edge_jumps(mortar_, proj_, solvers_);
    return d;
}

PointValue SchurSystem::evaluate(const std::vector<LocalField>& fields, const Point& x) const {
    const Decomposition& dd = mortar_.decomposition;
    const Rect& dom = dd.domain;
    if (!dom.contains(x, 1e-10)) throw OutOfDomain("point outside the domain");
    const int ix = std::clamp(static_cast<int>(std::floor((x.x - dom.x0) / dom.width() * dd.nx)), 0, dd.nx - 1);
    const int iy = std::clamp(static_cast<int>(std::floor((x.y - dom.y0) / dom.height() * dd.ny)), 0, dd.ny - 1);
    const int i = dd.index(ix, iy);
    return solvers_[i]->evaluate(fields[i], x);
}

}  // namespace ddfeec
