#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "ddfeec/bspline.hpp"
#include "ddfeec/checks.hpp"
#include "ddfeec/errors.hpp"
#include "ddfeec/whitney.hpp"
#include "support.hpp"

using namespace ddfeec;

namespace {

std::vector<Point> random_points(int n, unsigned seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<Point> pts(n);
    for (auto& p : pts) p = {u(rng), u(rng)};
    return pts;
}

ElementShape shape(int cells, int ni, int nb) {
    ElementShape s;
    s.cells_x = s.cells_y = cells;
    s.interior_count = ni;
    s.boundary_count = nb;
    return s;
}

}  // namespace

TEST_CASE("knot realization") {
    const auto t = realize_knots({0, 0, 0, 0});
    REQUIRE(t.size() == 5);
    for (int i = 0; i <= 4; ++i) CHECK(t[i] == doctest::Approx(0.25 * i).epsilon(1e-15));

    const auto s = realize_knots({40.0, -40.0});
    CHECK(s[0] == 0.0);
    CHECK(s[2] == 1.0);
    CHECK(s[1] > s[0]);
    CHECK(s[2] - s[1] >= 1e-3 / (1.0 + 2e-3) - 1e-15);

    std::mt19937_64 rng(4);
    std::normal_distribution<double> n01(0.0, 2.0);
    std::vector<double> l(6);
    for (double& v : l) v = n01(rng);
    const auto r = realize_knots(l);
    std::vector<double> inc(6);
    double total = 0.0;
    for (int i = 0; i < 6; ++i) total += (inc[i] = 1.0 / (1.0 + std::exp(-l[i])) + 1e-3);
    double acc = 0.0;
    for (int i = 0; i < 6; ++i) {
        acc += inc[i];
        CHECK(std::abs(r[i + 1] - acc / total) <= 1e-14);
        CHECK(r[i + 1] > r[i]);
    }
}

TEST_CASE("partition of unity at random points") {
    const auto e = test::random_element(shape(6, 9, 12), 21, 1.0);
    const auto pts = random_points(10000, 3);
    const auto ev = eval_pou(e.pou, pts);
    double sum = 0.0, gsum = 0.0, neg = 0.0;
    for (int q = 0; q < ev.values.rows(); ++q) {
        sum = std::max(sum, std::abs(ev.values.row(q).sum() - 1.0));
        gsum = std::max(gsum, std::hypot(ev.grad_x.row(q).sum(), ev.grad_y.row(q).sum()));
        neg = std::min(neg, ev.values.row(q).minCoeff());
    }
    CHECK(sum <= 1e-12);
    CHECK(gsum <= 1e-10);
    CHECK(neg >= -1e-12);
}

TEST_CASE("POU gradients against central differences") {
    const auto e = test::random_element(shape(5, 4, 8), 8, 1.0);
    auto pts = random_points(100, 9);
    for (auto& p : pts) p = {0.01 + 0.98 * p.x, 0.01 + 0.98 * p.y};
    const auto ev = eval_pou(e.pou, pts);
    const double h = 1e-6;
    double worst = 0.0;
    for (std::size_t q = 0; q < pts.size(); ++q) {
        const Point p = pts[q];
        const auto xp = eval_pou(e.pou, {{p.x + h, p.y}, {p.x - h, p.y}, {p.x, p.y + h}, {p.x, p.y - h}});
        const Eigen::VectorXd fx = (xp.values.row(0) - xp.values.row(1)).transpose() / (2 * h);
        const Eigen::VectorXd fy = (xp.values.row(2) - xp.values.row(3)).transpose() / (2 * h);
        const double scale = std::max(1.0, ev.grad_x.row(q).norm() + ev.grad_y.row(q).norm());
        worst = std::max(worst, ((fx - ev.grad_x.row(q).transpose()).norm() +
                                 (fy - ev.grad_y.row(q).transpose()).norm()) / scale);
    }
    // a knot can fall between p - h and p + h; those points carry O(1) derivative jumps
    CHECK(worst <= 1e-6);
}

TEST_CASE("degree-1 identity combo reproduces tensor hats") {
    const auto e = test::hat_element(4);
    const Point x{0.3, 0.6};
    const auto ev = eval_pou(e.pou, {x});
    auto hat = [](double node, double t) { return std::max(0.0, 1.0 - std::abs(t - node) / 0.25); };
    int nonzero = 0;
    for (int c = 0; c < e.pou.coarse_count(); ++c) {
        const Point n = test::hat_node(e, c);
        const double expect = hat(n.x, x.x) * hat(n.y, x.y);
        CHECK(ev.values(0, c) == doctest::Approx(expect).epsilon(1e-12));
        if (expect > 0) ++nonzero;
    }
    CHECK(nonzero == 4);
}

TEST_CASE("two POUs x and 1-x give a unit Whitney form") {
    PPOUParams p;
    p.degree = 1;
    p.knot_logits_x = {0.0};
    p.knot_logits_y = {0.0};
    p.interior_count = 2;
    // fine spline a + 2b: a = 1 feeds phi_0 = x, a = 0 feeds phi_1 = 1 - x
    p.combo_logits.resize(4, 2);
    for (int f = 0; f < 4; ++f) {
        const bool right = f % 2 == 1;
        p.combo_logits(f, 0) = right ? 0.0 : -200.0;
        p.combo_logits(f, 1) = right ? -200.0 : 0.0;
    }
    const auto a = assemble_whitney(p, knot_rule(p), false);
    REQUIRE(a.m1.rows() == 1);
    CHECK(a.m1(0, 0) == doctest::Approx(1.0).epsilon(1e-13));
    // psi_01 = x grad(1-x) - (1-x) grad x = (-1, 0)
    const auto ev = eval_pou(p, {{0.37, 0.81}});
    const double psi_x = ev.values(0, 0) * ev.grad_x(0, 1) - ev.values(0, 1) * ev.grad_x(0, 0);
    CHECK(psi_x == doctest::Approx(-1.0).epsilon(1e-13));
}

TEST_CASE("mass matrices, coboundaries and the two assembly paths") {
    for (unsigned seed : {1u, 2u, 3u}) {
        const auto e = test::random_element(shape(4, 4, 5), seed, 1.0);
        const auto a = assemble_whitney(e.pou, knot_rule(e.pou), true);
        const double mmax = a.m1.cwiseAbs().maxCoeff();
        CHECK((a.m1 - a.m1.transpose()).cwiseAbs().maxCoeff() <= 1e-13 * mmax);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a.m1);
        CHECK(es.eigenvalues().minCoeff() >= -1e-10 * mmax);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es2(a.m2);
        CHECK(es2.eigenvalues().minCoeff() >= -1e-10 * a.m2.cwiseAbs().maxCoeff());
        CHECK(exact_sequence_defect(a.delta0, a.delta1) == 0.0);
        const double ds = std::max(1.0, a.div_matrix.cwiseAbs().maxCoeff());
        CHECK((a.div_matrix - a.div_algebraic).cwiseAbs().maxCoeff() <= 1e-12 * ds);
        const double cs = std::max(1.0, a.curl_matrix.cwiseAbs().maxCoeff());
        CHECK((a.curl_matrix - a.curl_algebraic).cwiseAbs().maxCoeff() <= 1e-12 * cs);
    }
}

TEST_CASE("exact sequence for N in [3, 8]") {
    for (int n = 3; n <= 8; ++n) {
        auto e = initial_element(shape(4, n, 0));
        const auto a = assemble_whitney(e.pou, knot_rule(e.pou), true);
        CHECK(a.delta0.rows() == pair_count(n));
        CHECK(exact_sequence_defect(a.delta0, a.delta1) == 0.0);
        // a flipped sign on one incidence breaks it
        Eigen::SparseMatrix<int> bad = a.delta0;
        bad.coeffRef(0, 0) = -bad.coeff(0, 0);
        CHECK(exact_sequence_defect(bad, a.delta1) > 0.0);
    }
}

TEST_CASE("zero-trace subspaces") {
    for (auto [ni, nb] : {std::pair{16, 16}, std::pair{14, 14}}) {
        const auto e = initial_element(shape(8, ni, nb));
        const auto a = assemble_whitney(e.pou, knot_rule(e.pou), false);
        const auto z = apply_zero_trace(e.pou, a);
        CHECK(int(z.interior.size()) == ni);
        CHECK(int(z.boundary.size()) == nb);
    }
    const auto e0 = initial_element(shape(4, 6, 0));
    const auto z0 = apply_zero_trace(e0.pou, assemble_whitney(e0.pou, knot_rule(e0.pou), false));
    CHECK(z0.boundary.empty());
    CHECK(z0.interior.size() == 6);
    CHECK(int(z0.zero_pairs.size()) == pair_count(6));

    // a boundary POU starved of every boundary spline has no trace
    auto bad = test::hat_element(2);
    const int b0 = bad.pou.interior_count;
    for (int f = 0; f < bad.pou.fine_count(); ++f)
        if (bad.pou.combo_logits(f, b0) == 0.0) {
            bad.pou.combo_logits(f, b0) = -80.0;
            bad.pou.combo_logits(f, b0 + 1) = 0.0;
        }
    CHECK_THROWS_AS(apply_zero_trace(bad.pou, assemble_whitney(bad.pou, knot_rule(bad.pou), false)),
                    StructureViolation);
}

TEST_CASE("input errors") {
    const auto e = test::random_element(shape(4, 4, 8), 5, 1.0);
    CHECK_THROWS_AS(eval_pou(e.pou, {{1.2, 0.5}}), OutOfDomain);
    CHECK_THROWS_AS(assemble_whitney(e.pou, tensor_gauss_rule(1, 1), false), AssemblyAccuracyError);
}

TEST_CASE("trained-element files round trip") {
    auto e = test::random_element(shape(5, 4, 8), 17, 1.3);
    e.metric.mode = MetricMode::Independent;
    e.info["note"] = "round trip";
    const auto path = (std::filesystem::temp_directory_path() / "ddfeec_roundtrip.json").string();
    save_element(e, path);
    const auto back = load_element(path);
    CHECK(back.pou.knot_logits_x == e.pou.knot_logits_x);
    CHECK(back.pou.knot_logits_y == e.pou.knot_logits_y);
    CHECK(back.pou.combo_logits == e.pou.combo_logits);
    CHECK(back.metric.log_d1 == e.metric.log_d1);
    CHECK(back.metric.log_b0 == e.metric.log_b0);
    CHECK(back.metric.mode == MetricMode::Independent);
    CHECK(back.pou.interior_count == 4);
    CHECK(element_to_json(back).dump() == element_to_json(e).dump());
    std::remove(path.c_str());
}

TEST_CASE("whitney invariant suite") {
    for (const auto& c : whitney_checks()) {
        INFO(c.name << " " << c.value << " " << c.detail);
        CHECK(c.pass);
    }
}
