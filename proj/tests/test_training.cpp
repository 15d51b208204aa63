#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include "ddfeec/bspline.hpp"
#include "ddfeec/errors.hpp"
#include "ddfeec/feec_backend.hpp"
#include "ddfeec/training.hpp"
#include "support.hpp"

using namespace ddfeec;

namespace {

ElementShape small_shape(MetricMode mode = MetricMode::Symmetric) {
    ElementShape s;
    s.cells_x = s.cells_y = 4;
    s.interior_count = 2;
    s.boundary_count = 4;
    s.mode = mode;
    return s;
}

TrainingDataset nodal_dataset(int samples, std::uint64_t seed, const Rect& box = {0, 0, 1, 1}) {
    DatasetConfig c;
    c.box = box;
    c.K = [](const Point&) { return Mat2::Identity().eval(); };
    c.suites = {"nodal4"};
    c.samples = samples;
    c.seed = seed;
    c.reference_cells = 24;
    return generate_dataset(c);
}

// Synthetic single-case dataset with arbitrary (not PDE-consistent) samples.
TrainingDataset synthetic_dataset(int samples) {
    TrainingDataset d;
    d.box = {0, 0, 1, 1};
    std::mt19937_64 rng(19);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    d.points.resize(samples);
    for (auto& x : d.points) x = {u(rng), u(rng)};
    d.cases.push_back({"synthetic", [](const Point& x) { return 1.0 + x.x * x.x - 0.5 * x.y; },
                       [](const Point& x) { return std::cos(2 * x.x) + x.y; }});
    d.p.resize(samples, 1);
    d.ux.resize(samples, 1);
    d.uy.resize(samples, 1);
    for (int k = 0; k < samples; ++k) {
        const Point x = d.points[k];
        d.p(k, 0) = 1.0 + x.x * x.x - 0.5 * x.y + 0.1 * std::sin(5 * x.y);
        d.ux(k, 0) = -2 * x.x;
        d.uy(k, 0) = 0.5 + x.x * x.y;
    }
    return d;
}

// Straight-line dense implementation of the element solve and loss, reference square, unit box.
double dense_loss(const FeecElement& e, const TrainingDataset& d, const LossConfig& cfg) {
    const PPOUParams& p = e.pou;
    const int n = p.coarse_count(), ni = p.interior_count, nb = p.boundary_count;
    const int ppc = p.degree + 1;
    const auto bx = realize_knots(p.knot_logits_x), by = realize_knots(p.knot_logits_y);

    // pair flux operator on coefficients: F_ij = (v_j - v_i) / d1_ij with v = d0 * c
    const auto pairs = pair_list(n);
    const int np = static_cast<int>(pairs.size());
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(np, n), Gb = Eigen::MatrixXd::Zero(np, n);
    const Eigen::VectorXd d0 = e.metric.log_d0.array().exp();
    for (int k = 0; k < np; ++k) {
        const auto [i, j] = pairs[k];
        const double d1 = std::exp(e.metric.log_d1[k]);
        G(k, j) = d0[j] / d1;
        G(k, i) = -d0[i] / d1;
        const double b1 = e.metric.mode == MetricMode::Symmetric ? 1.0 / d1 : std::exp(e.metric.log_b1[k]);
        Gb(k, j) = b1;
        Gb(k, i) = -b1;
    }
    auto psi = [&](const PouEval& ev, int q, int k, bool xdir) {
        const auto [i, j] = pairs[k];
        const auto& g = xdir ? ev.grad_x : ev.grad_y;
        return ev.values(q, i) * g(q, j) - ev.values(q, j) * g(q, i);
    };

    const QuadratureRule quad = tensor_rule(composite_gauss(bx, ppc), composite_gauss(by, ppc), 1);
    const PouEval eq = eval_pou(p, quad.points);
    Eigen::MatrixXd M1 = Eigen::MatrixXd::Zero(np, np);
    for (std::size_t q = 0; q < quad.points.size(); ++q)
        for (int a = 0; a < np; ++a)
            for (int b = 0; b < np; ++b)
                M1(a, b) += quad.weights[q] * (psi(eq, int(q), a, true) * psi(eq, int(q), b, true) +
                                               psi(eq, int(q), a, false) * psi(eq, int(q), b, false));
    Eigen::VectorXd b0inv(n);
    for (int i = 0; i < n; ++i)
        b0inv[i] = e.metric.mode == MetricMode::Symmetric ? d0[i] : std::exp(-e.metric.log_b0[i]);
    const Eigen::MatrixXd L = b0inv.asDiagonal() * Gb.transpose() * M1 * G;

    // data rules
    const int dc = e.data_cells();
    const Rule1D ud = composite_gauss(uniform_breaks(0, 1, dc), 4);
    Eigen::VectorXd bf = Eigen::VectorXd::Zero(n);
    {
        const QuadratureRule r = tensor_rule(ud, ud, 1);
        const PouEval ev = eval_pou(p, r.points);
        for (std::size_t q = 0; q < r.points.size(); ++q)
            bf += r.weights[q] * d.cases[0].f(r.points[q]) * ev.values.row(q).transpose();
    }
    Eigen::MatrixXd Mtr = Eigen::MatrixXd::Zero(nb, nb);
    Eigen::VectorXd R = Eigen::VectorXd::Zero(nb);
    for (Side s : kSides) {
        const bool horiz = s == Side::Bottom || s == Side::Top;
        const Rule1D rk = composite_gauss(horiz ? bx : by, ppc);
        auto at = [&](double t) {
            switch (s) {
                case Side::Bottom: return Point{t, 0};
                case Side::Top: return Point{t, 1};
                case Side::Left: return Point{0, t};
                default: return Point{1, t};
            }
        };
        std::vector<Point> pk, pd;
        for (double t : rk.nodes) pk.push_back(at(t));
        for (double t : ud.nodes) pd.push_back(at(t));
        const PouEval ek = eval_pou(p, pk), ed = eval_pou(p, pd);
        for (std::size_t q = 0; q < pk.size(); ++q) {
            const Eigen::VectorXd v = ek.values.row(q).tail(nb).transpose();
            Mtr += rk.weights[q] * v * v.transpose();
        }
        for (std::size_t q = 0; q < pd.size(); ++q)
            R += ud.weights[q] * d.cases[0].g(pd[q]) * ed.values.row(q).tail(nb).transpose();
    }
    Eigen::VectorXd c(n);
    c.tail(nb) = Mtr.fullPivLu().solve(R);
    c.head(ni) = L.topLeftCorner(ni, ni).fullPivLu().solve(bf.head(ni) - L.topRightCorner(ni, nb) * c.tail(nb));

    const PouEval es = eval_pou(p, d.points);
    const Eigen::VectorXd F = G * c;
    double sp = 0, su = 0;
    for (int q = 0; q < d.sample_count(); ++q) {
        const double ph = es.values.row(q).dot(c);
        double ux = 0, uy = 0;
        for (int k = 0; k < np; ++k) {
            ux += F[k] * psi(es, q, k, true);
            uy += F[k] * psi(es, q, k, false);
        }
        sp += std::pow(ph - d.p(q, 0), 2);
        su += std::pow(ux - d.ux(q, 0), 2) + std::pow(uy - d.uy(q, 0), 2);
    }
    const double S = d.sample_count();
    const double np_ = d.p.col(0).norm();
    const double nu_ = std::sqrt(d.ux.col(0).squaredNorm() + d.uy.col(0).squaredNorm()) + cfg.flux_floor;
    return sp / S / np_ + cfg.alpha * cfg.alpha * su / S / nu_;
}

double forward(const FeecElement& e, const TrainingDataset& d, const LossConfig& cfg = {}) {
    return forward_loss(e, d, cfg).loss;
}

}  // namespace

TEST_CASE("boundary condition suites") {
    const Rect box{2, 3, 4, 5};
    auto f = [](const Point&) { return 1.0; };
    CHECK(bc_suite("nodal4", box, f).size() == 4);
    CHECK(bc_suite("bernstein3", box, f).size() == 12);
    CHECK(bc_suite("bernstein4", box, f).size() == 16);
    CHECK(bc_suite("homogeneous+forcing", box, f).size() == 1);
    CHECK_THROWS_AS(bc_suite("bernstein9", box, f), InvalidInput);
    CHECK_THROWS_AS(bc_suite("homogeneous+forcing", box, nullptr), InvalidInput);
    // the nodal functions are the bilinear hats of the box corners
    const auto n4 = bc_suite("nodal4", box, f);
    CHECK(n4[0].g({4, 5}) == 1.0);
    CHECK(n4[1].g({4, 3}) == 1.0);
    CHECK(n4[3].g({2, 3}) == 1.0);
    CHECK(n4[0].g({3, 4}) == doctest::Approx(0.25));
    // every Bernstein boundary function vanishes somewhere on the boundary, and all sum to 1
    const auto b3 = bc_suite("bernstein3", box, f);
    for (Point x : {Point{2.3, 3}, Point{4, 4.1}, Point{3.7, 5}}) {
        double s = 0;
        for (const auto& c : b3) s += c.g(x);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
    }
}

TEST_CASE("dataset generation") {
    const auto a = nodal_dataset(500, 42), b = nodal_dataset(500, 42);
    CHECK(a.sample_count() == 500);
    CHECK(a.case_count() == 4);
    CHECK(a.provenance == "reference-solver");
    CHECK(a.p == b.p);
    CHECK(a.ux == b.ux);
    // x(1-y) is harmonic and bilinear: the reference solver reproduces it and its flux
    for (int k = 0; k < a.sample_count(); ++k) {
        const Point x = a.points[k];
        CHECK(std::abs(a.p(k, 1) - x.x * (1 - x.y)) <= 1e-10);
        CHECK(std::abs(a.ux(k, 1) - (1 - x.y)) <= 1e-9);
        CHECK(std::abs(a.uy(k, 1) + x.x) <= 1e-9);
    }
    CHECK(nodal_dataset(500, 43).points[0].x != a.points[0].x);
    const auto full = nodal_dataset(20480, 1);
    CHECK(full.sample_count() == 20480);
    CHECK(full.p.rows() == 20480);
    CHECK(full.ux.cols() == 4);
    TrainingDataset bad = a;
    bad.points[3].x = 1.5;
    CHECK_THROWS_AS(bad.validate(), InvalidInput);
}

TEST_CASE("loss matches a dense re-implementation") {
    const auto d = synthetic_dataset(100);
    for (MetricMode mode : {MetricMode::Symmetric, MetricMode::Independent}) {
        const auto e = test::random_element(small_shape(mode), 23, 0.8);
        REQUIRE(e.pou.coarse_count() == 6);
        for (double alpha : {1.0, 0.3}) {
            const LossConfig cfg{alpha, 1e-3};
            const double ref = dense_loss(e, d, cfg);
            CHECK(std::abs(forward(e, d, cfg) - ref) <= 1e-12 * ref);
        }
    }
}

TEST_CASE("loss vanishes on the element's own predictions") {
    const auto e = test::random_element(small_shape(), 31, 0.6);
    auto d = nodal_dataset(200, 5, {1, 1, 3, 3});
    const auto r = forward_loss(e, d, {});
    auto pb = test::laplace([](const Point&) { return 0.0; });
    FeecBackend b(0, d.box, std::make_shared<FeecElement>(e), pb, {true, true, true, true});
    for (int k = 0; k < d.case_count(); ++k) {
        LocalField f;
        f.pressure = r.coefficients.col(k);
        f.flux = b.pair_flux(f.pressure);
        f.backend = BackendKind::Feec;
        f.subdomain = 0;
        for (int q = 0; q < d.sample_count(); ++q) {
            const Point x{d.box.x0 + 2 * d.points[q].x, d.box.y0 + 2 * d.points[q].y};
            const auto v = b.evaluate(f, x);
            d.p(q, k) = v.p;
            d.ux(q, k) = v.u[0];
            d.uy(q, k) = v.u[1];
        }
    }
    CHECK(forward(e, d) <= 1e-24);
}

TEST_CASE("loss limits and invariances") {
    const auto e = test::random_element(small_shape(), 37, 0.6);
    const auto d = nodal_dataset(300, 8);
    const auto r = forward_loss(e, d, {1e-9, 1e-3});
    CHECK(std::abs(r.loss - r.loss_p.sum()) <= 1e-15 * r.loss);

    // one factorization for all right-hand sides is the sum of single-case losses
    double sum = 0.0;
    for (int k = 0; k < d.case_count(); ++k) {
        TrainingDataset one = d;
        one.cases = {d.cases[k]};
        one.p = d.p.col(k);
        one.ux = d.ux.col(k);
        one.uy = d.uy.col(k);
        sum += forward(e, one);
    }
    const double all = forward(e, d);
    CHECK(std::abs(all - sum) <= 1e-12 * all);

    // permuted samples and cases
    TrainingDataset perm = d;
    std::vector<int> idx(d.sample_count());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), std::mt19937(2));
    for (int q = 0; q < d.sample_count(); ++q) {
        perm.points[q] = d.points[idx[q]];
        perm.p.row(q) = d.p.row(idx[q]);
        perm.ux.row(q) = d.ux.row(idx[q]);
        perm.uy.row(q) = d.uy.row(idx[q]);
    }
    std::swap(perm.cases[0], perm.cases[3]);
    perm.p.col(0).swap(perm.p.col(3));
    perm.ux.col(0).swap(perm.ux.col(3));
    perm.uy.col(0).swap(perm.uy.col(3));
    CHECK(std::abs(forward(e, perm) - all) <= 1e-13 * all);
}

TEST_CASE("adjoint gradient") {
    const auto d = nodal_dataset(150, 12);
    for (MetricMode mode : {MetricMode::Symmetric, MetricMode::Independent}) {
        const auto e = test::random_element(small_shape(mode), 41, 0.7);
        const LossConfig cfg{0.5, 1e-3};
        const Eigen::VectorXd g = loss_gradient(e, d, cfg);
        const ParamLayout lay(e);
        REQUIRE(g.size() == lay.size);

        std::mt19937_64 rng(mode == MetricMode::Symmetric ? 1 : 2);
        std::normal_distribution<double> n01;
        Eigen::VectorXd dir(lay.size);
        for (int k = 0; k < lay.size; ++k) dir[k] = n01(rng);
        const Eigen::VectorXd theta = pack_params(e);
        auto at = [&](double h) {
            FeecElement x = e;
            unpack_params(theta + h * dir, x);
            return forward(x, d, cfg);
        };
        const double h = 1e-6;
        const double fd = (at(h) - at(-h)) / (2 * h);
        CHECK(std::abs(fd - g.dot(dir)) <= 1e-5 * std::abs(fd));

        // masked combo entries and, in symmetric mode, the b logs have no influence
        for (int f = 0; f < e.pou.fine_count(); ++f)
            for (int c = 0; c < e.pou.coarse_count(); ++c)
                if (!e.pou.allowed(f, c)) CHECK(g[lay.combo + f * e.pou.coarse_count() + c] == 0.0);
        if (mode == MetricMode::Symmetric) {
            CHECK(g.segment(lay.log_b0, e.pou.coarse_count()).norm() == 0.0);
            CHECK(g.segment(lay.log_b1, pair_count(e.pou.coarse_count())).norm() == 0.0);
        }

        // duplicated cases double the gradient
        TrainingDataset dd = d;
        dd.cases.insert(dd.cases.end(), d.cases.begin(), d.cases.end());
        dd.p.resize(d.sample_count(), 2 * d.case_count());
        dd.ux.resize(d.sample_count(), 2 * d.case_count());
        dd.uy.resize(d.sample_count(), 2 * d.case_count());
        dd.p << d.p, d.p;
        dd.ux << d.ux, d.ux;
        dd.uy << d.uy, d.uy;
        const Eigen::VectorXd g2 = loss_gradient(e, dd, cfg);
        CHECK((g2 - 2 * g).norm() <= 1e-12 * g.norm());
    }
}

TEST_CASE("parameter packing round trip") {
    const auto e = test::random_element(small_shape(MetricMode::Independent), 3, 1.0);
    FeecElement back = test::random_element(small_shape(MetricMode::Independent), 4, 1.0);
    unpack_params(pack_params(e), back);
    CHECK(back.pou.combo_logits == e.pou.combo_logits);
    CHECK(back.pou.knot_logits_y == e.pou.knot_logits_y);
    CHECK(back.metric.log_b1 == e.metric.log_b1);
}

TEST_CASE("Adam training") {
    const auto data = std::make_shared<TrainingDataset>(nodal_dataset(200, 3));
    const auto e0 = test::random_element(small_shape(), 53, 0.5);
    const LossModel model(data, {}, e0.data_cells());

    TrainOptions frozen;
    frozen.epochs = 3;
    frozen.learning_rate = 0.0;
    const auto f = train(e0, model, frozen);
    CHECK(pack_params(f.element) == pack_params(e0));

    TrainOptions o;
    o.epochs = 30;
    o.learning_rate = 2e-2;
    o.checkpoint_every = 10;
    o.guard_H = 1.0;
    const auto a = train(e0, model, o), b = train(e0, model, o);
    REQUIRE(a.history.size() == 31);
    CHECK(a.history[0].loss == doctest::Approx(a.initial_loss));
    CHECK(a.best_loss < a.initial_loss);
    CHECK(a.best_loss == b.best_loss);
    CHECK(pack_params(a.element) == pack_params(b.element));
    CHECK_FALSE(a.halted);
    CHECK(a.history[10].sigma > 0.0);
    CHECK(a.history[30].sigma > 0.0);
    // structural validity of the trained parameters
    const auto knots = realize_knots(a.element.pou.knot_logits_x);
    for (std::size_t i = 1; i < knots.size(); ++i) CHECK(knots[i] > knots[i - 1]);
    const RowMatrix W = combo_weights(a.element.pou);
    CHECK((W.rowwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-14);
    CHECK(W.minCoeff() >= 0.0);

    const auto csv = (std::filesystem::temp_directory_path() / "ddfeec_history.csv").string();
    write_history_csv(a.history, csv);
    std::ifstream in(csv);
    std::string header;
    std::getline(in, header);
    CHECK(header == "epoch,loss,loss_p,loss_u,learning_rate,sigma");
    std::filesystem::remove(csv);

    TrainOptions none;
    none.epochs = 0;
    CHECK_THROWS_AS(train(e0, model, none), InvalidInput);
}

TEST_CASE("restriction of global data") {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(0.0, 2.0);
    std::vector<Point> pts(4000);
    Eigen::VectorXd p(4000);
    Eigen::MatrixX2d flux(4000, 2);
    for (int k = 0; k < 4000; ++k) {
        pts[k] = {u(rng), u(rng)};
        p[k] = pts[k].x + 2 * pts[k].y;
        flux.row(k) << 1.0, 2.0;
    }
    const Rect box{0.5, 0.5, 1.5, 1.5};
    const auto d = restrict_global_data(pts, p, flux, box, [](const Point&) { return 0.0; });
    CHECK(d.provenance == "restriction-of-global-data");
    CHECK(d.case_count() == 1);
    CHECK(d.sample_count() > 500);
    CHECK_NOTHROW(d.validate());
    for (int k = 0; k < d.sample_count(); ++k) {
        const Point x{box.x0 + d.points[k].x, box.y0 + d.points[k].y};
        CHECK(d.p(k, 0) == doctest::Approx(x.x + 2 * x.y).epsilon(1e-12));
    }
    // nearest-sample boundary data is within the sampling resolution of the true trace
    CHECK(d.cases[0].g({1.0, 0.5}) == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("trace unisolvency guard") {
    ElementShape s;
    s.cells_x = s.cells_y = 8;
    s.interior_count = 16;
    s.boundary_count = 16;
    const auto e = initial_element(s);
    CHECK(trace_unisolvency(e, 0.5) > 0.1);
    CHECK(trace_unisolvency(e, 1.0 / 64) < 1e-8);
    // four boundary POUs cannot carry a mortar with eight nodes around the box
    CHECK(trace_unisolvency(test::random_element(small_shape(), 1, 0.1), 0.5) == 0.0);
}
