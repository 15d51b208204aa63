#include "ddfeec/training.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <random>

#include "ddfeec/errors.hpp"
#include "ddfeec/fem_backend.hpp"
#include "ddfeec/feec_backend.hpp"
#include "ddfeec/mortar.hpp"
#include "ddfeec/parallel.hpp"

namespace ddfeec {

using feec::AxisSet;
using feec::PointSet;
using feec::SetEval;

namespace {

double binomial(int n, int k) {
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

double bernstein(int n, int i, double t) { return binomial(n, i) * std::pow(t, i) * std::pow(1.0 - t, n - i); }

// Edge Bernstein functions B_i(x) B_j(y) with i or j at an end of the range.
std::vector<BoundaryCase> bernstein_suite(int n, const Rect& box) {
    std::vector<BoundaryCase> out;
    const double L = box.width(), x0 = box.x0, y0 = box.y0;
    for (int j = 0; j <= n; ++j)
        for (int i = 0; i <= n; ++i) {
            if (i != 0 && i != n && j != 0 && j != n) continue;
            BoundaryCase c;
            c.name = "bernstein" + std::to_string(n) + "_" + std::to_string(i) + std::to_string(j);
            c.g = [=](const Point& x) { return bernstein(n, i, (x.x - x0) / L) * bernstein(n, j, (x.y - y0) / L); };
            c.f = [](const Point&) { return 0.0; };
            out.push_back(std::move(c));
        }
    return out;
}

}  // namespace

std::vector<BoundaryCase> bc_suite(const std::string& name, const Rect& box, const ScalarField& forcing) {
    const double L = box.width(), x0 = box.x0, y0 = box.y0;
    auto zero = [](const Point&) { return 0.0; };
    if (name == "nodal4") {
        std::vector<BoundaryCase> out;
        const char* names[4] = {"xy", "x(1-y)", "(1-x)y", "(1-x)(1-y)"};
        for (int k = 0; k < 4; ++k) {
            BoundaryCase c;
            c.name = names[k];
            c.g = [=](const Point& x) {
                const double s = (x.x - x0) / L, t = (x.y - y0) / L;
                const double a = (k == 0 || k == 1) ? s : 1.0 - s;
                const double b = (k == 0 || k == 2) ? t : 1.0 - t;
                return a * b;
            };
            c.f = zero;
            out.push_back(std::move(c));
        }
        return out;
    }
    if (name == "bernstein3") return bernstein_suite(3, box);
    if (name == "bernstein4") return bernstein_suite(4, box);
    if (name == "homogeneous+forcing") {
        if (!forcing) throw InvalidInput("suite homogeneous+forcing needs a forcing term");
        return {BoundaryCase{"forcing", zero, forcing}};
    }
    throw InvalidInput("unknown boundary condition suite '" + name + "'");
}

void TrainingDataset::validate() const {
    const int n = sample_count(), k = case_count();
    if (n == 0 || k == 0) throw InvalidInput("training dataset is empty");
    if (p.rows() != n || ux.rows() != n || uy.rows() != n || p.cols() != k || ux.cols() != k || uy.cols() != k)
        throw InvalidInput("training dataset arrays do not match the sample and case counts");
    for (const Point& x : points)
        if (x.x < 0 || x.x > 1 || x.y < 0 || x.y > 1) throw InvalidInput("training sample outside the element");
    if (!p.allFinite() || !ux.allFinite() || !uy.allFinite()) throw InvalidInput("training data not finite");
}

TrainingDataset generate_dataset(const DatasetConfig& c) {
    const Rect& box = c.box;
    if (!(box.width() > 0) || std::abs(box.width() - box.height()) > 1e-12 * box.width())
        throw InvalidInput("training box must be a square");
    if (c.samples < 1 || c.reference_cells < 1) throw InvalidInput("dataset needs samples and reference cells");
    if (!c.K) throw InvalidInput("dataset needs a conductivity");
    TrainingDataset d;
    d.box = box;
    for (const auto& s : c.suites)
        for (auto& bc : bc_suite(s, box, c.forcing)) d.cases.push_back(std::move(bc));
    std::mt19937_64 rng(c.seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    d.points.resize(c.samples);
    for (auto& x : d.points) {
        x.x = uni(rng);
        x.y = uni(rng);
    }
    const int n = c.samples, k = d.case_count();
    d.p.resize(n, k);
    d.ux.resize(n, k);
    d.uy.resize(n, k);
    const double L = box.width();
    parallel_for(k, [&](int m) {
        auto prob = std::make_shared<ProblemSpec>(make_problem(c.K, d.cases[m].f, d.cases[m].g));
        prob->breaks_x = c.breaks_x;
        prob->breaks_y = c.breaks_y;
        const FemBackend fem(0, box, c.reference_cells, c.reference_cells, prob, {true, true, true, true});
        Eigen::VectorXd trace(fem.trace_size());
        for (int t = 0; t < fem.trace_size(); ++t) trace[t] = prob->g(fem.node_point(fem.trace_nodes()[t]));
        const LocalField field = fem.solve(trace, true);
        for (int s = 0; s < n; ++s) {
            const Point x{box.x0 + L * d.points[s].x, box.y0 + L * d.points[s].y};
            const PointValue v = fem.evaluate(field, x);
            const Vec2 u = c.K(x) * v.grad;
            d.p(s, m) = v.p;
            d.ux(s, m) = u.x();
            d.uy(s, m) = u.y();
        }
    });
    d.validate();
    return d;
}

TrainingDataset restrict_global_data(const std::vector<Point>& points, const Eigen::VectorXd& p,
                                     const Eigen::MatrixX2d& u, const Rect& box, ScalarField forcing) {
    if (static_cast<Eigen::Index>(points.size()) != p.size() || p.size() != u.rows())
        throw InvalidInput("global data arrays differ in length");
    if (!(box.width() > 0) || std::abs(box.width() - box.height()) > 1e-12 * box.width())
        throw InvalidInput("training box must be a square");
    const double L = box.width();
    auto kept = std::make_shared<std::vector<std::pair<Point, double>>>();
    TrainingDataset d;
    d.box = box;
    d.provenance = "restriction-of-global-data";
    std::vector<double> ps, uxs, uys;
    for (std::size_t s = 0; s < points.size(); ++s) {
        if (!box.contains(points[s], 0.0)) continue;
        d.points.push_back({(points[s].x - box.x0) / L, (points[s].y - box.y0) / L});
        kept->emplace_back(points[s], p[s]);
        ps.push_back(p[s]);
        uxs.push_back(u(s, 0));
        uys.push_back(u(s, 1));
    }
    if (kept->empty()) throw InvalidInput("no global samples inside the box");
    BoundaryCase c;
    c.name = "global";
    c.g = [kept](const Point& x) {
        double best = std::numeric_limits<double>::infinity(), v = 0.0;
        for (const auto& [q, pv] : *kept) {
            const double d2 = (q.x - x.x) * (q.x - x.x) + (q.y - x.y) * (q.y - x.y);
            if (d2 < best) {
                best = d2;
                v = pv;
            }
        }
        return v;
    };
    c.f = forcing ? forcing : ScalarField([](const Point&) { return 0.0; });
    d.cases.push_back(std::move(c));
    const int n = static_cast<int>(ps.size());
    d.p = Eigen::Map<Eigen::VectorXd>(ps.data(), n);
    d.ux = Eigen::Map<Eigen::VectorXd>(uxs.data(), n);
    d.uy = Eigen::Map<Eigen::VectorXd>(uys.data(), n);
    d.validate();
    return d;
}

ParamLayout::ParamLayout(const FeecElement& e) {
    const PPOUParams& p = e.pou;
    const int n = p.coarse_count(), np = pair_count(n);
    knot_x = 0;
    knot_y = knot_x + p.cells_x();
    combo = knot_y + p.cells_y();
    log_d0 = combo + p.fine_count() * n;
    log_d1 = log_d0 + n;
    log_b0 = log_d1 + np;
    log_b1 = log_b0 + n;
    size = log_b1 + np;
}

Eigen::VectorXd pack_params(const FeecElement& e) {
    const ParamLayout l(e);
    const PPOUParams& p = e.pou;
    const int n = p.coarse_count(), np = pair_count(n);
    Eigen::VectorXd v(l.size);
    for (int k = 0; k < p.cells_x(); ++k) v[l.knot_x + k] = p.knot_logits_x[k];
    for (int k = 0; k < p.cells_y(); ++k) v[l.knot_y + k] = p.knot_logits_y[k];
    for (int f = 0; f < p.fine_count(); ++f)
        for (int c = 0; c < n; ++c) v[l.combo + f * n + c] = p.combo_logits(f, c);
    auto put = [&](int off, const Eigen::VectorXd& x, int size) {
        v.segment(off, size) = x.size() == size ? x : Eigen::VectorXd::Zero(size);
    };
    put(l.log_d0, e.metric.log_d0, n);
    put(l.log_d1, e.metric.log_d1, np);
    put(l.log_b0, e.metric.log_b0, n);
    put(l.log_b1, e.metric.log_b1, np);
    return v;
}

void unpack_params(const Eigen::VectorXd& v, FeecElement& e) {
    const ParamLayout l(e);
    if (v.size() != l.size) throw InvalidInput("parameter vector has the wrong length");
    PPOUParams& p = e.pou;
    const int n = p.coarse_count(), np = pair_count(n);
    for (int k = 0; k < p.cells_x(); ++k) p.knot_logits_x[k] = v[l.knot_x + k];
    for (int k = 0; k < p.cells_y(); ++k) p.knot_logits_y[k] = v[l.knot_y + k];
    for (int f = 0; f < p.fine_count(); ++f)
        for (int c = 0; c < n; ++c) p.combo_logits(f, c) = v[l.combo + f * n + c];
    e.metric.log_d0 = v.segment(l.log_d0, n);
    e.metric.log_d1 = v.segment(l.log_d1, np);
    e.metric.log_b0 = v.segment(l.log_b0, n);
    e.metric.log_b1 = v.segment(l.log_b1, np);
}

LossModel::LossModel(std::shared_ptr<const TrainingDataset> data, LossConfig config, int data_cells,
                     int data_points, int quad_points)
    : data_(std::move(data)), cfg_(config), data_points_(data_points), quad_points_(quad_points) {
    data_->validate();
    if (!(cfg_.alpha > 0) || cfg_.flux_floor < 0) throw InvalidInput("loss needs alpha > 0 and flux_floor >= 0");
    const Rect& box = data_->box;
    const double L = box.width();
    const int K = data_->case_count();
    auto phys = [&](double s, double t) { return Point{box.x0 + L * s, box.y0 + L * t}; };

    data_set_.x = AxisSet::uniform_gauss(data_cells, data_points_);
    data_set_.y = data_set_.x;
    F_.resize(data_set_.size(), K);
    for (int q = 0; q < data_set_.size(); ++q) {
        const auto [a, b] = data_set_.index(q);
        const Point x = phys(data_set_.x.coord[a], data_set_.y.coord[b]);
        for (int k = 0; k < K; ++k) F_(q, k) = data_->cases[k].f(x);
    }
    const AxisSet along = AxisSet::uniform_gauss(data_cells, data_points_);
    for (Side s : kSides) {
        const int si = static_cast<int>(s);
        bdata_[si] = feec::side_set(s, along);
        const PointSet& ps = bdata_[si];
        G_[si].resize(ps.size(), K);
        for (int q = 0; q < ps.size(); ++q) {
            const auto [a, b] = ps.index(q);
            const Point x = phys(ps.x.coord[a], ps.y.coord[b]);
            for (int k = 0; k < K; ++k) G_[si](q, k) = data_->cases[k].g(x);
        }
    }
    std::vector<double> xs, ys;
    for (const Point& x : data_->points) {
        xs.push_back(x.x);
        ys.push_back(x.y);
    }
    samples_.x = AxisSet::fixed(xs);
    samples_.y = AxisSet::fixed(ys);
    samples_.tensor = false;
    for (int k = 0; k < data_->sample_count(); ++k) samples_.pairs.push_back({k, k});
    np_.resize(K);
    nu_.resize(K);
    for (int k = 0; k < K; ++k) {
        np_[k] = std::max(data_->p.col(k).norm(), 1e-12);
        nu_[k] = std::sqrt(data_->ux.col(k).squaredNorm() + data_->uy.col(k).squaredNorm()) + cfg_.flux_floor;
        if (!(nu_[k] > 0)) nu_[k] = 1e-12;
    }
}

LossResult LossModel::forward(const FeecElement& e) const {
    LossResult r;
    run(e, &r, nullptr);
    return r;
}

double LossModel::gradient(const FeecElement& e, Eigen::VectorXd& grad, LossResult* out) const {
    LossResult r;
    const double v = run(e, &r, &grad);
    if (out) *out = std::move(r);
    return v;
}

namespace {

struct Record {
    const PointSet* set;
    const SetEval* ev;
    feec::AxisAdjoint ax, ay;
};

}  // namespace

double LossModel::run(const FeecElement& e, LossResult* out, Eigen::VectorXd* grad) const {
    const PPOUParams& p = e.pou;
    const int n = p.coarse_count(), ni = p.interior_count, nb = p.boundary_count;
    if (nb <= 0 || ni <= 0) throw InvalidInput("training needs interior and boundary POUs");
    const int K = data_->case_count(), S = data_->sample_count();
    const double Ls = data_->box.width();
    const int ppc = quad_points_ > 0 ? quad_points_ : p.degree + 1;

    const feec::Operator op = feec::build_operator(e, ppc);
    const AxisSet alx = AxisSet::knot_gauss(p.cells_x(), ppc), aly = AxisSet::knot_gauss(p.cells_y(), ppc);

    // trace lift: L2 projection of g onto the boundary POU traces
    std::array<PointSet, 4> smov;
    std::array<SetEval, 4> emov, egd;
    Eigen::MatrixXd Mtr = Eigen::MatrixXd::Zero(nb, nb), R = Eigen::MatrixXd::Zero(nb, K);
    for (Side s : kSides) {
        const int si = static_cast<int>(s);
        smov[si] = feec::side_set(s, (s == Side::Bottom || s == Side::Top) ? alx : aly);
        emov[si] = feec::eval_set(smov[si], p, op.bx, op.by, op.W);
        const auto& bm = emov[si].basis;
        const Eigen::MatrixXd PhB = bm.phi.rightCols(nb);
        Mtr += PhB.transpose() * bm.w.asDiagonal() * PhB;
        egd[si] = feec::eval_set(bdata_[si], p, op.bx, op.by, op.W);
        const auto& bg = egd[si].basis;
        R += bg.phi.rightCols(nb).transpose() * bg.w.asDiagonal() * G_[si];
    }
    Eigen::LDLT<Eigen::MatrixXd> mt(Mtr);
    if (mt.info() != Eigen::Success || !(mt.vectorD().minCoeff() > 0))
        throw TrainingError("boundary trace Gram matrix is singular");
    const Eigen::MatrixXd PB = mt.solve(R);

    const SetEval ed = feec::eval_set(data_set_, p, op.bx, op.by, op.W);
    const Eigen::MatrixXd Bf = Ls * Ls * ed.basis.phi.transpose() * ed.basis.w.asDiagonal() * F_;

    const Eigen::MatrixXd LII = op.L.topLeftCorner(ni, ni), LIB = op.L.topRightCorner(ni, nb);
    const Eigen::MatrixXd rhs = Bf.topRows(ni) - LIB * PB;
    Eigen::LDLT<Eigen::MatrixXd> ldlt;
    Eigen::PartialPivLU<Eigen::MatrixXd> lu;
    Eigen::MatrixXd PI;
    if (op.symmetric) {
        ldlt.compute(LII);
        if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 0))
            throw TrainingError("element operator is not positive definite");
        PI = ldlt.solve(rhs);
    } else {
        lu.compute(LII);
        PI = lu.solve(rhs);
    }
    const double res = (LII * PI - rhs).norm();
    if (!PI.allFinite() || res > 1e-10 * (rhs.norm() + LII.norm() * PI.norm() + 1e-300))
        throw TrainingError("element solve residual " + std::to_string(res));
    Eigen::MatrixXd P(n, K);
    P.topRows(ni) = PI;
    P.bottomRows(nb) = PB;

    const SetEval es = feec::eval_set(samples_, p, op.bx, op.by, op.W);
    const std::array<Eigen::MatrixXd, 2> XS = {feec::xi(es.basis.phi, es.basis.gx, op.Ed),
                                               feec::xi(es.basis.phi, es.basis.gy, op.Ed)};
    const Eigen::MatrixXd V = op.d0.asDiagonal() * P;
    const Eigen::MatrixXd Ep = es.basis.phi * P - data_->p;
    const Eigen::MatrixXd Ex = XS[0] * V / Ls - data_->ux, Ey = XS[1] * V / Ls - data_->uy;
    const double a2 = cfg_.alpha * cfg_.alpha;
    LossResult r;
    r.loss_p.resize(K);
    r.loss_u.resize(K);
    for (int k = 0; k < K; ++k) {
        r.loss_p[k] = Ep.col(k).squaredNorm() / S / np_[k];
        r.loss_u[k] = (Ex.col(k).squaredNorm() + Ey.col(k).squaredNorm()) / S / nu_[k];
    }
    r.loss = r.loss_p.sum() + a2 * r.loss_u.sum();
    r.coefficients = P;
    const double loss = r.loss;
    if (out) *out = std::move(r);
    if (!grad) return loss;

    // reverse sweep
    const ParamLayout lay(e);
    grad->setZero(lay.size);
    const int nfx = p.fine_x();
    RowMatrix Wb = RowMatrix::Zero(op.W.rows(), op.W.cols());
    Eigen::VectorXd d0b = Eigen::VectorXd::Zero(n);
    Eigen::MatrixXd Edb = Eigen::MatrixXd::Zero(n, n), Ebb = Eigen::MatrixXd::Zero(n, n);
    std::vector<Record> rec;
    rec.reserve(10);
    auto record = [&](const PointSet& set, const SetEval& ev) -> Record& {
        Record& q = rec.emplace_back();
        q.set = &set;
        q.ev = &ev;
        q.ax.resize(ev.ex);
        q.ay.resize(ev.ey);
        return q;
    };
    const Eigen::MatrixXd none;
    const Eigen::VectorXd nonev;

    // samples
    Eigen::MatrixXd PSb(S, K), Uxb(S, K), Uyb(S, K);
    for (int k = 0; k < K; ++k) {
        PSb.col(k) = 2.0 * Ep.col(k) / (S * np_[k]);
        Uxb.col(k) = 2.0 * a2 * Ex.col(k) / (S * nu_[k]);
        Uyb.col(k) = 2.0 * a2 * Ey.col(k) / (S * nu_[k]);
    }
    Eigen::MatrixXd Pb = es.basis.phi.transpose() * PSb;
    Eigen::MatrixXd phiSb = PSb * P.transpose();
    const Eigen::MatrixXd T = (XS[0].transpose() * Uxb + XS[1].transpose() * Uyb) / Ls;
    Pb += op.d0.asDiagonal() * T;
    d0b += P.cwiseProduct(T).rowwise().sum();
    {
        Eigen::MatrixXd gxb = Eigen::MatrixXd::Zero(S, n), gyb = Eigen::MatrixXd::Zero(S, n);
        feec::xi_backward(es.basis.phi, es.basis.gx, op.Ed, Uxb * V.transpose() / Ls, phiSb, gxb, Edb);
        feec::xi_backward(es.basis.phi, es.basis.gy, op.Ed, Uyb * V.transpose() / Ls, phiSb, gyb, Edb);
        Record& q = record(samples_, es);
        feec::backward_set(samples_, es, op.W, nfx, phiSb, gxb, gyb, nonev, Wb, q.ax, q.ay);
    }

    // interior solve
    const Eigen::MatrixXd PIb = Pb.topRows(ni);
    const Eigen::MatrixXd Z = op.symmetric ? Eigen::MatrixXd(ldlt.solve(PIb))
                                           : Eigen::MatrixXd(lu.transpose().solve(PIb));
    Eigen::MatrixXd PBb = Pb.bottomRows(nb) - LIB.transpose() * Z;
    Eigen::MatrixXd Lb = Eigen::MatrixXd::Zero(n, n);
    Lb.topRows(ni) = -Z * P.transpose();

    // forcing load
    {
        Eigen::MatrixXd phiDb = Eigen::MatrixXd::Zero(data_set_.size(), n);
        phiDb.leftCols(ni) = Ls * Ls * ed.basis.w.asDiagonal() * F_ * Z.transpose();
        Record& q = record(data_set_, ed);
        feec::backward_set(data_set_, ed, op.W, nfx, phiDb, none, none, nonev, Wb, q.ax, q.ay);
    }

    // trace lift
    const Eigen::MatrixXd Y = mt.solve(PBb);
    const Eigen::MatrixXd Mb = -Y * PB.transpose();
    const Eigen::MatrixXd Msym = Mb + Mb.transpose();
    for (Side s : kSides) {
        const int si = static_cast<int>(s);
        {
            const auto& bg = egd[si].basis;
            Eigen::MatrixXd phib = Eigen::MatrixXd::Zero(bg.phi.rows(), n);
            phib.rightCols(nb) = bg.w.asDiagonal() * G_[si] * Y.transpose();
            Record& q = record(bdata_[si], egd[si]);
            feec::backward_set(bdata_[si], egd[si], op.W, nfx, phib, none, none, nonev, Wb, q.ax, q.ay);
        }
        {
            const auto& bm = emov[si].basis;
            const Eigen::MatrixXd PhB = bm.phi.rightCols(nb);
            Eigen::MatrixXd phib = Eigen::MatrixXd::Zero(bm.phi.rows(), n);
            phib.rightCols(nb) = bm.w.asDiagonal() * PhB * Msym;
            const Eigen::VectorXd wb = (PhB * Mb).cwiseProduct(PhB).rowwise().sum();
            Record& q = record(smov[si], emov[si]);
            feec::backward_set(smov[si], emov[si], op.W, nfx, phib, none, none, wb, Wb, q.ax, q.ay);
        }
    }

    // operator
    {
        const feec::Basis2D& qb = op.q.basis;
        const int nq = static_cast<int>(qb.w.size());
        const Eigen::MatrixXd Kb = op.b0inv.asDiagonal() * Lb;
        const Eigen::VectorXd b0b = Lb.cwiseProduct(op.K).rowwise().sum();
        Eigen::VectorXd wqb = Eigen::VectorXd::Zero(nq);
        Eigen::MatrixXd phib = Eigen::MatrixXd::Zero(nq, n), gxb = phib, gyb = phib;
        for (int c = 0; c < 2; ++c) {
            const Eigen::MatrixXd A = op.Xd[c] * op.d0.asDiagonal();
            const Eigen::MatrixXd XbK = op.Xb[c] * Kb;
            const Eigen::MatrixXd Ab = qb.w.asDiagonal() * XbK;
            Eigen::MatrixXd Xbb = qb.w.asDiagonal() * A * Kb.transpose();
            wqb += XbK.cwiseProduct(A).rowwise().sum();
            Eigen::MatrixXd Xdb = Ab * op.d0.asDiagonal();
            d0b += Ab.cwiseProduct(op.Xd[c]).colwise().sum().transpose();
            Eigen::MatrixXd& gcb = c == 0 ? gxb : gyb;
            const Eigen::MatrixXd& gc = c == 0 ? qb.gx : qb.gy;
            if (op.symmetric) {
                Xdb += Xbb;
            } else {
                feec::xi_backward(qb.phi, gc, op.Eb, Xbb, phib, gcb, Ebb);
            }
            feec::xi_backward(qb.phi, gc, op.Ed, Xdb, phib, gcb, Edb);
        }
        if (op.symmetric) {
            d0b += b0b;
        } else {
            grad->segment(lay.log_b0, n) = -op.b0inv.cwiseProduct(b0b);
            const Eigen::VectorXd eb = e.metric.log_b1.array().exp();
            grad->segment(lay.log_b1, pair_count(n)) = eb.cwiseProduct(feec::pair_gradient(Ebb));
        }
        Record& q = record(op.quad, op.q);
        feec::backward_set(op.quad, op.q, op.W, nfx, phib, gxb, gyb, wqb, Wb, q.ax, q.ay);
    }

    grad->segment(lay.log_d0, n) = op.d0.cwiseProduct(d0b);
    const Eigen::VectorXd ed1 = (-e.metric.log_d1).array().exp();
    grad->segment(lay.log_d1, pair_count(n)) = -ed1.cwiseProduct(feec::pair_gradient(Edb));

    const Eigen::MatrixXd cb = feec::softmax_backward(p, op.W, Wb);
    for (int f = 0; f < p.fine_count(); ++f)
        for (int c = 0; c < n; ++c) (*grad)[lay.combo + f * n + c] = cb(f, c);

    const int cx = p.cells_x(), cy = p.cells_y();
    std::vector<double> kg(cx + cy, 0.0);
    parallel_for(cx + cy, [&](int dir) {
        const bool xdir = dir < cx;
        const int l = xdir ? dir : dir - cx;
        double s = 0.0;
        for (const Record& q : rec) {
            const AxisSet& set = xdir ? q.set->x : q.set->y;
            s += feec::contract(xdir ? q.ax : q.ay,
                                feec::tangent_axis(set, xdir ? p.knot_logits_x : p.knot_logits_y, p.degree, l));
        }
        kg[dir] = s;
    });
    for (int k = 0; k < cx; ++k) (*grad)[lay.knot_x + k] = kg[k];
    for (int k = 0; k < cy; ++k) (*grad)[lay.knot_y + k] = kg[cx + k];
    return loss;
}

LossResult forward_loss(const FeecElement& e, const TrainingDataset& data, const LossConfig& cfg) {
    auto d = std::make_shared<const TrainingDataset>(data);
    return LossModel(d, cfg, e.data_cells()).forward(e);
}

Eigen::VectorXd loss_gradient(const FeecElement& e, const TrainingDataset& data, const LossConfig& cfg) {
    auto d = std::make_shared<const TrainingDataset>(data);
    Eigen::VectorXd g;
    LossModel(d, cfg, e.data_cells()).gradient(e, g);
    return g;
}

double trace_unisolvency(const FeecElement& e, double H) {
    const Decomposition d = build_decomposition({0, 0, 1, 1}, 1, 1);
    const MortarSpace m = build_mortar_space(d, H, MortarFlavor::Dirichlet);
    auto prob = std::make_shared<ProblemSpec>(make_problem(
        [](const Point&) { return Mat2::Identity().eval(); }, [](const Point&) { return 0.0; },
        [](const Point&) { return 0.0; }));
    std::vector<LocalSolverPtr> s{std::make_shared<FeecBackend>(0, d.subdomains[0],
                                                               std::make_shared<const FeecElement>(e), prob,
                                                               std::array<bool, 4>{true, true, true, true})};
    const TraceProjection proj = build_projection(m, s, ProjectionMode::L2);
    if (proj.Q[0].cols() > proj.Q[0].rows()) return 0.0;  // more mortar dofs than trace dofs
    Eigen::BDCSVD<Eigen::MatrixXd> svd(proj.Q[0]);
    return svd.singularValues().minCoeff();
}

TrainResult train(const FeecElement& initial, const LossModel& model, const TrainOptions& o) {
    if (o.epochs < 1) throw InvalidInput("training needs at least one epoch");
    TrainResult res;
    FeecElement cur = initial;
    Eigen::VectorXd theta = pack_params(cur), m = Eigen::VectorXd::Zero(theta.size()), v = m, g;
    double lr = o.learning_rate;
    LossResult lr0;
    double loss = model.gradient(cur, g, &lr0);
    if (!std::isfinite(loss)) throw TrainingError("initial loss is not finite");
    res.initial_loss = res.best_loss = loss;
    res.element = cur;
    auto push = [&](int epoch, const LossResult& r, double sigma) {
        EpochRecord e;
        e.epoch = epoch;
        e.loss = r.loss;
        e.loss_p = r.loss_p.sum();
        e.loss_u = r.loss_u.sum();
        e.learning_rate = lr;
        e.sigma = sigma;
        res.history.push_back(e);
    };
    push(0, lr0, o.guard_H > 0 ? trace_unisolvency(cur, o.guard_H) : -1.0);
    int step = 0;
    for (int epoch = 1; epoch <= o.epochs; ++epoch) {
        bool accepted = false;
        for (int attempt = 0; attempt <= o.max_retries && !accepted; ++attempt) {
            const int t = step + 1;
            const Eigen::VectorXd m1 = o.beta1 * m + (1 - o.beta1) * g;
            const Eigen::VectorXd v1 = o.beta2 * v + (1 - o.beta2) * g.cwiseAbs2();
            const double c1 = 1 - std::pow(o.beta1, t), c2 = 1 - std::pow(o.beta2, t);
            const Eigen::VectorXd step_vec =
                lr * (m1 / c1).cwiseQuotient(((v1 / c2).cwiseSqrt().array() + o.eps).matrix());
            FeecElement trial = cur;
            unpack_params(theta - step_vec, trial);
            Eigen::VectorXd g1;
            LossResult r;
            double l1;
            try {
                l1 = model.gradient(trial, g1, &r);
            } catch (const Error&) {
                lr *= 0.5;  // rejected parameters, retry with a smaller step
                continue;
            }
            if (!std::isfinite(l1) || !g1.allFinite()) {
                res.halted = true;
                res.message = "non-finite loss at epoch " + std::to_string(epoch);
                return res;
            }
            accepted = true;
            step = t;
            m = m1;
            v = v1;
            theta -= step_vec;
            cur = trial;
            g = g1;
            loss = l1;
            double sigma = -1.0;
            if (o.guard_H > 0 && o.checkpoint_every > 0 &&
                (epoch % o.checkpoint_every == 0 || epoch == o.epochs))
                sigma = trace_unisolvency(cur, o.guard_H);
            push(epoch, r, sigma);
            // the loss reported at epoch k belongs to the parameters after step k
            if (loss < res.best_loss) {
                res.best_loss = loss;
                res.element = cur;
            }
        }
        if (!accepted) {
            res.halted = true;
            res.message = "step rejected after retries at epoch " + std::to_string(epoch);
            return res;
        }
    }
    return res;
}

void write_history_csv(const std::vector<EpochRecord>& history, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InvalidInput("cannot write " + path);
    out << "epoch,loss,loss_p,loss_u,learning_rate,sigma\n";
    out.precision(10);
    for (const auto& e : history)
        out << e.epoch << ',' << e.loss << ',' << e.loss_p << ',' << e.loss_u << ',' << e.learning_rate << ','
            << e.sigma << '\n';
}

}  // namespace ddfeec
