#include "ddfeec/checks.hpp"

#include <cmath>
#include <random>

#include "ddfeec/config.hpp"
#include "ddfeec/errors.hpp"
#include "ddfeec/fem_backend.hpp"
#include "ddfeec/training.hpp"
#include "ddfeec/whitney.hpp"

namespace ddfeec {

using nlohmann::json;

json to_json(const std::vector<CheckResult>& checks) {
    json a = json::array();
    for (const auto& c : checks)
        a.push_back({{"name", c.name}, {"pass", c.pass}, {"value", c.value}, {"threshold", c.threshold},
                     {"detail", c.detail}});
    return a;
}

bool all_pass(const std::vector<CheckResult>& checks) {
    for (const auto& c : checks)
        if (!c.pass) return false;
    return !checks.empty();
}

namespace {

CheckResult below(std::string name, double value, double threshold, std::string detail = {}) {
    return {std::move(name), std::isfinite(value) && value <= threshold, value, threshold, std::move(detail)};
}

CheckResult above(std::string name, double value, double threshold, std::string detail = {}) {
    return {std::move(name), std::isfinite(value) && value > threshold, value, threshold, std::move(detail)};
}

FeecElement perturbed_element(const ElementShape& shape, unsigned seed, double scale) {
    FeecElement e = initial_element(shape);
    std::mt19937 rng(seed);
    std::normal_distribution<double> nd(0.0, scale);
    Eigen::VectorXd th = pack_params(e);
    for (int i = 0; i < th.size(); ++i) th[i] += nd(rng);
    unpack_params(th, e);
    return e;
}

std::shared_ptr<ProblemSpec> affine_problem(BcKind bc) {
    // p = (x - 1) + 2 (y - 1) integrates to zero on the interior skeleton of [0,2]^2 split 2x2
    auto p = std::make_shared<ProblemSpec>(make_problem(
        [](const Point&) { return Mat2::Identity().eval(); }, [](const Point&) { return 0.0; },
        [](const Point& x) { return (x.x - 1.0) + 2.0 * (x.y - 1.0); }, bc));
    if (bc == BcKind::Neumann) {
        p->g = [](const Point& x) {
            const Vec2 u(1.0, 2.0);
            if (std::abs(x.x) < 1e-12) return -u.x();
            if (std::abs(x.x - 2.0) < 1e-12) return u.x();
            if (std::abs(x.y) < 1e-12) return -u.y();
            return u.y();
        };
    }
    p->exact = ExactSolution{[](const Point& x) { return (x.x - 1.0) + 2.0 * (x.y - 1.0); },
                             [](const Point&) { return Vec2(1.0, 2.0); }};
    return p;
}

std::unique_ptr<SchurSystem> fem_system(std::shared_ptr<ProblemSpec> prob, const Rect& dom, int nx, int ny,
                                        const std::vector<int>& cells, double H) {
    const Decomposition d = build_decomposition(dom, nx, ny);
    const MortarFlavor fl = prob->bc == BcKind::Neumann ? MortarFlavor::Neumann : MortarFlavor::Dirichlet;
    MortarSpace m = build_mortar_space(d, H, fl);
    std::vector<LocalSolverPtr> s;
    for (int i = 0; i < nx * ny; ++i)
        s.push_back(std::make_shared<FemBackend>(i, d.subdomains[i], cells[i], cells[i], prob, trace_sides_for(d, i, fl)));
    return std::make_unique<SchurSystem>(prob, std::move(m), std::move(s));
}

}  // namespace

double exact_sequence_defect(const Eigen::SparseMatrix<int>& d0, const Eigen::SparseMatrix<int>& d1) {
    const Eigen::SparseMatrix<int> z = d1 * d0;
    int worst = 0;
    for (int k = 0; k < z.outerSize(); ++k)
        for (Eigen::SparseMatrix<int>::InnerIterator it(z, k); it; ++it) worst = std::max(worst, std::abs(it.value()));
    return worst;
}

std::vector<CheckResult> whitney_checks(unsigned seed) {
    std::vector<CheckResult> out;
    for (int n = 3; n <= 8; ++n) {
        ElementShape s;
        s.cells_x = s.cells_y = 4;
        s.interior_count = n;
        s.boundary_count = 0;
        const FeecElement e = perturbed_element(s, seed + n, 0.5);
        const WhitneyAssembly a = assemble_whitney(e.pou, knot_rule(e.pou), true);
        out.push_back(below("exact sequence delta1 delta0 = 0, N=" + std::to_string(n),
                            exact_sequence_defect(a.delta0, a.delta1), 0.0));
    }
    ElementShape s;
    s.cells_x = s.cells_y = 6;
    s.interior_count = 4;
    s.boundary_count = 8;
    const FeecElement e = perturbed_element(s, seed, 0.5);
    const WhitneyAssembly a = assemble_whitney(e.pou, knot_rule(e.pou), true);
    std::vector<Point> pts;
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    for (int k = 0; k < 500; ++k) pts.push_back({U(rng), U(rng)});
    for (double t : {0.0, 0.25, 1.0}) {
        pts.push_back({t, 0.0});
        pts.push_back({0.0, t});
        pts.push_back({1.0, t});
        pts.push_back({t, 1.0});
    }
    const PouEval ev = eval_pou(e.pou, pts);
    out.push_back(below("partition of unity", (ev.values.rowwise().sum().array() - 1.0).abs().maxCoeff(), 1e-12));
    out.push_back(below("partition of unity, quadrature moments", a.pou_residual, 1e-12));
    out.push_back(below("pou gradients sum to zero",
                        std::max(ev.grad_x.rowwise().sum().cwiseAbs().maxCoeff(),
                                 ev.grad_y.rowwise().sum().cwiseAbs().maxCoeff()),
                        1e-10));
    const double m1n = a.m1.norm();
    out.push_back(below("M1 symmetric", (a.m1 - a.m1.transpose()).norm() / m1n, 1e-14));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (a.m1 + a.m1.transpose()), Eigen::EigenvaluesOnly);
    out.push_back(below("M1 positive semidefinite", -es.eigenvalues().minCoeff() / es.eigenvalues().maxCoeff(), 1e-12));
    out.push_back(below("DIV M1 agrees with (psi, -grad phi)",
                        (a.div_matrix - a.div_algebraic).norm() / a.div_matrix.norm(), 1e-12));
    out.push_back(below("CURL M2 agrees with (psi, curl psi)",
                        (a.curl_matrix - a.curl_algebraic).norm() / a.curl_matrix.norm(), 1e-12));
    return out;
}

std::vector<CheckResult> gradient_checks(unsigned seed) {
    std::vector<CheckResult> out;
    DatasetConfig dc;
    dc.K = [](const Point& x) {
        Mat2 m;
        m << 1 + x.x, 0.2, 0.2, 1 + x.y * x.y;
        return m;
    };
    dc.forcing = [](const Point& x) { return std::sin(3 * x.x) + x.y; };
    dc.suites = {"nodal4", "homogeneous+forcing"};
    dc.samples = 100;
    dc.reference_cells = 12;
    dc.seed = seed;
    auto data = std::make_shared<const TrainingDataset>(generate_dataset(dc));
    for (MetricMode mode : {MetricMode::Symmetric, MetricMode::Independent}) {
        ElementShape s;
        s.cells_x = 3;
        s.cells_y = 4;
        s.interior_count = 2;
        s.boundary_count = 4;
        s.mode = mode;
        const FeecElement e = perturbed_element(s, seed, 0.3);
        const LossModel model(data, LossConfig{1.3, 1e-3}, e.data_cells());
        Eigen::VectorXd g;
        model.gradient(e, g);
        const Eigen::VectorXd th = pack_params(e);
        Eigen::VectorXd fd(th.size());
        const double h = 1e-5;
        for (int i = 0; i < th.size(); ++i) {
            FeecElement a = e, b = e;
            Eigen::VectorXd t = th;
            t[i] += h;
            unpack_params(t, a);
            t[i] -= 2 * h;
            unpack_params(t, b);
            fd[i] = (model.forward(a).loss - model.forward(b).loss) / (2 * h);
        }
        const ParamLayout l(e);
        const std::string tag = mode == MetricMode::Symmetric ? "symmetric" : "independent";
        const std::vector<std::pair<std::string, std::pair<int, int>>> groups = {
            {"knots x", {l.knot_x, l.knot_y}},   {"knots y", {l.knot_y, l.combo}},
            {"combo", {l.combo, l.log_d0}},      {"log d0", {l.log_d0, l.log_d1}},
            {"log d1", {l.log_d1, l.log_b0}},    {"log b0", {l.log_b0, l.log_b1}},
            {"log b1", {l.log_b1, l.size}}};
        for (const auto& [name, r] : groups) {
            const int n = r.second - r.first;
            const Eigen::VectorXd ga = g.segment(r.first, n), gf = fd.segment(r.first, n);
            if (mode == MetricMode::Symmetric && (name == "log b0" || name == "log b1")) {
                // unused in symmetric mode: both must vanish
                out.push_back(below("gradient " + tag + " " + name + " vanishes",
                                    std::max(ga.cwiseAbs().maxCoeff(), gf.cwiseAbs().maxCoeff()), 1e-9));
                continue;
            }
            const double rel = (ga - gf).norm() / std::max(gf.norm(), 1e-300);
            out.push_back(below("gradient " + tag + " " + name, rel, 1e-5,
                                "norm " + std::to_string(gf.norm())));
        }
    }
    return out;
}

std::vector<CheckResult> patch_checks() {
    std::vector<CheckResult> out;
    const Rect dom{0, 0, 2, 2};
    for (BcKind bc : {BcKind::Dirichlet, BcKind::Neumann}) {
        auto prob = affine_problem(bc);
        // non-matching grids whose nodes contain the mortar nodes, so that Q_i is exact on the mortar
        auto sys = fem_system(prob, dom, 2, 2, {2, 4, 6, 8}, 0.5);
        SchurOptions o;
        o.tol = 1e-13;
        const SolveResult r = sys->solve(o);
        const auto f = sys->reconstruct(r.lambda);
        const ErrorNorms e = sys->error_norms(r.lambda, f);
        double pt = 0.0;
        for (int a = 0; a <= 40; ++a)
            for (int b = 0; b <= 40; ++b) {
                const Point x{a / 20.0, b / 20.0};
                const PointValue v = sys->evaluate(f, x);
                pt = std::max({pt, std::abs(v.p - prob->exact->p(x)), std::abs(v.u.x() - 1.0), std::abs(v.u.y() - 2.0)});
            }
        const std::string tag = bc == BcKind::Dirichlet ? "dirichlet" : "neumann";
        out.push_back(below("patch test " + tag + " L2 errors",
                            std::max({e.L2_p, e.L2_u, e.L2_mortar}), 1e-10));
        out.push_back(below("patch test " + tag + " pointwise incl. interfaces", pt, 1e-10));
    }
    return out;
}

std::vector<CheckResult> schur_checks(const SchurSystem& sys, const std::string& label) {
    const SchurDiagnostics d = sys.diagnostics(7, true);
    return {below(label + ": Schur symmetry defect", d.symmetry_defect, 1e-10),
            above(label + ": smallest Ritz value", d.smallest_ritz, 0.0),
            below(label + ": flux form vs energy form", d.flux_energy_gap, 1e-10)};
}

std::vector<CheckResult> assumption_checks() {
    std::vector<CheckResult> out;
    auto prob = std::make_shared<ProblemSpec>(make_problem(
        [](const Point&) { return Mat2::Identity().eval(); }, [](const Point&) { return 0.0; },
        [](const Point& x) { return x.x * x.y; }));
    {
        // one cell per subdomain under a mortar with four intervals per edge
        auto sys = fem_system(prob, {0, 0, 2, 2}, 2, 2, {1, 1, 1, 1}, 0.25);
        bool warned = false;
        double sigma = sys->unisolvency();
        try {
            sys->solve();
        } catch (const UnisolvencyWarning& w) {
            warned = true;
            sigma = w.sigma();
        }
        out.push_back({"degenerate trace raises the unisolvency warning", warned, sigma, 1e-8,
                       "smallest singular value " + std::to_string(sigma)});
    }
    {
        auto sys = fem_system(prob, {0, 0, 2, 2}, 2, 2, {4, 4, 4, 4}, 0.25);
        double worst = 0.0;
        for (double j : edge_jumps(sys->mortar(), sys->projection(), sys->solvers())) worst = std::max(worst, j);
        out.push_back(below("matching discretizations have zero edge jump", worst, 1e-12));
    }
    return out;
}

std::vector<CheckResult> mutation_checks() {
    std::vector<CheckResult> out;
    {
        ElementShape s;
        s.cells_x = s.cells_y = 3;
        s.interior_count = 5;
        s.boundary_count = 0;
        const FeecElement e = initial_element(s);
        const WhitneyAssembly a = assemble_whitney(e.pou, knot_rule(e.pou), true);
        Eigen::SparseMatrix<int> bad = a.delta0;
        bad.coeffRef(0, 0) = -bad.coeffRef(0, 0);
        out.push_back(above("flipped coboundary sign is detected", exact_sequence_defect(bad, a.delta1), 0.0));
    }
    {
        auto prob = std::make_shared<ProblemSpec>(make_problem(
            [](const Point&) {
                Mat2 m;
                m << 2.0, 0.7, -0.3, 1.0;
                return m;
            },
            [](const Point&) { return 0.0; }, [](const Point& x) { return x.x * x.y; }));
        auto sys = fem_system(prob, {0, 0, 2, 2}, 2, 2, {4, 3, 3, 4}, 0.5);
        out.push_back(above("asymmetric conductivity is detected by the symmetry check",
                            sys->diagnostics(7, false).symmetry_defect, 1e-10));
    }
    return out;
}

}  // namespace ddfeec
