#include <doctest.h>

#include <cmath>
#include <random>

#include "ddfeec/checks.hpp"
#include "ddfeec/config.hpp"
#include "ddfeec/errors.hpp"
#include "ddfeec/fem_backend.hpp"
#include "ddfeec/mortar.hpp"
#include "support.hpp"

using namespace ddfeec;

namespace {

std::vector<LocalSolverPtr> fem_solvers(const MortarSpace& m, std::shared_ptr<const ProblemSpec> pb,
                                        const std::vector<int>& cells) {
    std::vector<LocalSolverPtr> s;
    const auto& d = m.decomposition;
    for (int i = 0; i < int(d.subdomains.size()); ++i)
        s.push_back(std::make_shared<FemBackend>(i, d.subdomains[i], cells[i], cells[i], pb,
                                                 trace_sides_for(d, i, m.flavor)));
    return s;
}

// Integral of lambda over the interior skeleton.
double skeleton_integral(const MortarSpace& m, const Eigen::VectorXd& lambda) {
    const Rule1D g = gauss_legendre(3);
    double s = 0.0;
    for (int e = 0; e < int(m.edges.size()); ++e) {
        if (!m.edges[e].interior) continue;
        const double L = m.edges[e].length();
        const int cells = std::max(1, int(std::lround(L / m.H)));
        for (int c = 0; c < cells; ++c)
            for (int k = 0; k < 3; ++k) s += g.weights[k] * L / cells * m.eval(lambda, e, (c + g.nodes[k]) * L / cells);
    }
    return s;
}

SolveConfig example1(int level) {
    SolveConfig c = load_solve_config(DDFEEC_SOURCE_DIR "/configs/example1.json");
    c.H /= level;
    c.backend.cells_x *= level;
    c.backend.cells_y *= level;
    for (auto& [i, b] : c.overrides) {
        b.cells_x *= level;
        b.cells_y *= level;
    }
    return c;
}

}  // namespace

TEST_CASE("mortar dof counts") {
    const auto d = build_decomposition({0, 0, 2, 2}, 2, 2);
    const auto m1 = build_mortar_space(d, 1.0, MortarFlavor::Dirichlet);
    CHECK(m1.free_size() == 1);
    const auto m2 = build_mortar_space(d, 0.5, MortarFlavor::Dirichlet);
    CHECK(m2.free_size() == 5);
    int cross = 0;
    for (const auto& x : m2.nodes) cross += (x.x == 1.0 || x.y == 1.0);
    CHECK(cross == 9);
    for (int n = 1; n <= 5; ++n) {
        const auto m = build_mortar_space(build_decomposition({0, 0, 1, 1}, n, n), 1.0 / n, MortarFlavor::Dirichlet);
        CHECK(m.free_size() == (n - 1) * (n - 1));
    }
    const auto mn = build_mortar_space(d, 0.5, MortarFlavor::Neumann);
    CHECK(mn.size() == 9);
    CHECK_THROWS_AS(build_mortar_space(d, 0.0, MortarFlavor::Dirichlet), InvalidInput);
}

TEST_CASE("mortar hats form a partition of unity on each edge") {
    const auto m = build_mortar_space(build_decomposition({0, 0, 3, 2}, 3, 2), 0.25, MortarFlavor::Dirichlet);
    const Eigen::VectorXd one = Eigen::VectorXd::Ones(m.size());
    for (int e = 0; e < int(m.edges.size()); ++e)
        for (double t : {0.0, 0.13, 0.5, 0.77, 1.0}) CHECK(m.eval(one, e, t * m.edges[e].length()) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("projections reproduce constants and nested linears") {
    const auto d = build_decomposition({0, 0, 2, 2}, 2, 2);
    const auto m = build_mortar_space(d, 0.5, MortarFlavor::Dirichlet);
    auto pb = test::laplace([](const Point& x) { return x.x - 2 * x.y; });
    const auto s = fem_solvers(m, pb, {2, 4, 6, 8});
    const auto proj = build_projection(m, s, ProjectionMode::L2);
    CHECK(proj.orthogonality_residual <= 1e-12);
    Eigen::VectorXd lin(m.size());
    for (int k = 0; k < m.size(); ++k) lin[k] = pb->g(m.nodes[k]);
    for (int i = 0; i < 4; ++i) {
        const auto& fem = static_cast<const FemBackend&>(*s[i]);
        const Eigen::VectorXd q1 = proj.Q[i] * Eigen::VectorXd::Ones(m.size());
        CHECK((q1.array() - 1.0).abs().maxCoeff() <= 1e-13);
        const Eigen::VectorXd ql = proj.Q[i] * lin;
        for (int k = 0; k < fem.trace_size(); ++k) CHECK(std::abs(ql[k] - pb->g(*fem.trace_node(k))) <= 1e-13);
    }
    const auto interp = build_projection(m, s, ProjectionMode::Interpolation);
    for (int i = 0; i < 4; ++i) CHECK(((interp.Q[i] * lin) - proj.Q[i] * lin).cwiseAbs().maxCoeff() <= 1e-13);
}

TEST_CASE("fixed dofs interpolate the Dirichlet data") {
    const auto d = build_decomposition({0, 0, 2, 2}, 2, 2);
    auto pb = test::laplace([](const Point& x) { return x.x * x.y + std::sin(x.y); });
    const auto m = build_mortar_space(d, 0.5, MortarFlavor::Dirichlet);
    const SchurSystem sys(pb, m, fem_solvers(m, pb, {3, 3, 3, 3}));
    for (int k : m.fixed_dofs) CHECK(sys.fixed_values()[k] == doctest::Approx(pb->g(m.nodes[k])).epsilon(1e-15));
}

TEST_CASE("Schur operator equals the monolithic Schur complement on matching grids") {
    const auto d = build_decomposition({0, 0, 2, 2}, 2, 2);
    const auto m = build_mortar_space(d, 0.5, MortarFlavor::Dirichlet);
    auto pb = test::laplace([](const Point&) { return 0.0; });
    const SchurSystem sys(pb, m, fem_solvers(m, pb, {2, 2, 2, 2}));
    const Eigen::MatrixXd S = sys.dense();

    // global bilinear stiffness on the 4x4 grid of [0,2]^2, K = I
    const int n = 4, nn = 25;
    const double ke[4][4] = {{4, -1, -2, -1}, {-1, 4, -1, -2}, {-2, -1, 4, -1}, {-1, -2, -1, 4}};
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(nn, nn);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            const int g[4] = {i + 5 * j, i + 1 + 5 * j, i + 1 + 5 * (j + 1), i + 5 * (j + 1)};
            for (int a = 0; a < 4; ++a)
                for (int b = 0; b < 4; ++b) A(g[a], g[b]) += ke[a][b] / 6.0;
        }
    std::vector<int> gam, inner;
    for (int k : m.free_dofs) gam.push_back(int(std::lround(2 * m.nodes[k].x)) + 5 * int(std::lround(2 * m.nodes[k].y)));
    for (int j = 1; j < n; ++j)
        for (int i = 1; i < n; ++i)
            if (i != 2 && j != 2) inner.push_back(i + 5 * j);
    auto block = [&](const std::vector<int>& r, const std::vector<int>& c) {
        Eigen::MatrixXd B(r.size(), c.size());
        for (std::size_t a = 0; a < r.size(); ++a)
            for (std::size_t b = 0; b < c.size(); ++b) B(a, b) = A(r[a], c[b]);
        return B;
    };
    const Eigen::MatrixXd Sref =
        block(gam, gam) - block(gam, inner) * block(inner, inner).ldlt().solve(block(inner, gam));
    REQUIRE(S.rows() == Sref.rows());
    CHECK((S - Sref).cwiseAbs().maxCoeff() <= 1e-12 * Sref.cwiseAbs().maxCoeff());
}

TEST_CASE("Schur operator symmetry and the two forms of b_h") {
    const auto d = build_decomposition({0, 0, 2, 1}, 2, 1);
    const auto m = build_mortar_space(d, 0.25, MortarFlavor::Dirichlet);
    auto pb = std::make_shared<ProblemSpec>(make_problem(
        [](const Point& x) { return Mat2{{1 + x.x, 0.3}, {0.3, 2.0}}; }, [](const Point&) { return 1.0; },
        [](const Point&) { return 0.0; }));
    const SchurSystem sys(pb, m, fem_solvers(m, pb, {5, 8}));
    CHECK(sys.apply(Eigen::VectorXd::Zero(m.free_size())).norm() == 0.0);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n01;
    for (int trial = 0; trial < 5; ++trial) {
        Eigen::VectorXd a(m.size()), b(m.size());
        for (int k = 0; k < m.size(); ++k) {
            a[k] = n01(rng);
            b[k] = n01(rng);
        }
        const double ab = sys.form_energy(a, b), ba = sys.form_energy(b, a);
        const double scale = std::sqrt(sys.form_energy(a, a) * sys.form_energy(b, b));
        CHECK(std::abs(ab - ba) <= 1e-10 * scale);
        CHECK(std::abs(sys.form_flux(a, b) - ab) <= 1e-10 * scale);
    }
    for (const auto& c : schur_checks(sys, "anisotropic")) {
        INFO(c.name << " " << c.value);
        CHECK(c.pass);
    }
}

TEST_CASE("Example 1 coarse and H = 1/4 levels") {
    ElementCache cache;
    {
        const auto c = example1(1);
        const auto sys = build_system(c, &cache);
        REQUIRE(sys->mortar().free_size() == 1);
        CHECK(sys->dense()(0, 0) > 0.0);
        const auto r = run_solve(*sys, c);
        CHECK(r.result.iterations == 1);
        CHECK(r.errors.L2_p == doctest::Approx(2.73e-1).epsilon(0.10));
        CHECK(r.errors.L2_u == doctest::Approx(4.66).epsilon(0.10));
    }
    const auto c = example1(4);
    const auto r = run_solve(*build_system(c, &cache), c);
    CHECK(r.errors.L2_mortar == doctest::Approx(1.43e-2).epsilon(0.10));
    const auto c2 = example1(2);
    const auto r2 = run_solve(*build_system(c2, &cache), c2);
    const double ratio = r2.errors.L2_mortar / r.errors.L2_mortar;
    CHECK(ratio >= 3.5);
    CHECK(ratio <= 4.5);
}

TEST_CASE("Neumann flavor: mean-zero mortar and conservation") {
    const auto d = build_decomposition({0, 0, 1, 1}, 2, 2);
    const auto m = build_mortar_space(d, 0.25, MortarFlavor::Neumann);
    SUBCASE("no data") {
        auto pb = test::laplace([](const Point&) { return 0.0; });
        pb->bc = BcKind::Neumann;
        const SchurSystem sys(pb, m, fem_solvers(m, pb, {4, 4, 4, 4}));
        const auto r = sys.solve();
        CHECK(r.lambda.norm() <= 1e-12);
        CHECK(std::abs(sys.conservation_residual(sys.reconstruct(r.lambda))) <= 1e-10);
    }
    SUBCASE("unit source balanced by outflow") {
        auto pb = test::laplace([](const Point&) { return -0.25; }, [](const Point&) { return 1.0; });
        pb->bc = BcKind::Neumann;
        const SchurSystem sys(pb, m, fem_solvers(m, pb, {4, 6, 3, 5}));
        const auto r = sys.solve();
        double scale = 0.0;
        const double res = sys.conservation_residual(sys.reconstruct(r.lambda), &scale);
        CHECK(std::abs(res) <= 1e-10 * std::max(1.0, scale));
        CHECK(std::abs(skeleton_integral(m, r.lambda)) <= 1e-10);
    }
}

TEST_CASE("error norms vanish for fields in the discrete space") {
    const auto d = build_decomposition({0, 0, 2, 2}, 2, 2);
    const auto m = build_mortar_space(d, 0.5, MortarFlavor::Dirichlet);
    auto pb = test::laplace([](const Point& x) { return 1 + 2 * x.x - x.y; });
    pb->exact = ExactSolution{pb->g, [](const Point&) { return Vec2(2.0, -1.0); }};
    const SchurSystem sys(pb, m, fem_solvers(m, pb, {2, 4, 6, 8}));
    const auto r = sys.solve();
    const auto e = sys.error_norms(r.lambda, sys.reconstruct(r.lambda));
    CHECK(e.L2_p <= 1e-12);
    CHECK(e.L2_u <= 1e-12);
    CHECK(e.L2_mortar <= 1e-12);
}

TEST_CASE("patch, assumption and mutation suites") {
    for (const auto& c : patch_checks()) {
        INFO(c.name << " " << c.value);
        CHECK(c.pass);
    }
    for (const auto& c : assumption_checks()) {
        INFO(c.name << " " << c.value);
        CHECK(c.pass);
    }
    for (const auto& c : mutation_checks()) {
        INFO(c.name << " " << c.value);
        CHECK(c.pass);
    }
}

TEST_CASE("degenerate traces block the solve unless overridden") {
    const auto d = build_decomposition({0, 0, 1, 1}, 2, 2);
    const auto m = build_mortar_space(d, 0.125, MortarFlavor::Dirichlet);
    auto pb = test::laplace([](const Point& x) { return x.x; });
    const SchurSystem sys(pb, m, fem_solvers(m, pb, {1, 1, 1, 1}));
    CHECK(sys.unisolvency() < 1e-8);
    CHECK_THROWS_AS(sys.solve(), UnisolvencyWarning);
}
