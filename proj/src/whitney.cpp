#include "ddfeec/whitney.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "ddfeec/bspline.hpp"
#include "ddfeec/errors.hpp"

namespace ddfeec {

using nlohmann::json;

bool PPOUParams::is_boundary_fine(int f) const {
    const int a = f % fine_x(), b = f / fine_x();
    return a == 0 || b == 0 || a == fine_x() - 1 || b == fine_y() - 1;
}

bool PPOUParams::allowed(int f, int c) const {
    if (boundary_count == 0) return true;
    const bool bc = c >= interior_count;
    return bc == is_boundary_fine(f);
}

Eigen::VectorXd MetricWeights::b0() const {
    return mode == MetricMode::Symmetric ? Eigen::VectorXd((-log_d0).array().exp())
                                         : Eigen::VectorXd(log_b0.array().exp());
}

Eigen::VectorXd MetricWeights::b1() const {
    return mode == MetricMode::Symmetric ? Eigen::VectorXd((-log_d1).array().exp())
                                         : Eigen::VectorXd(log_b1.array().exp());
}

MetricWeights MetricWeights::identity(int n, MetricMode mode) {
    MetricWeights m;
    m.mode = mode;
    m.log_b0 = m.log_d0 = Eigen::VectorXd::Zero(n);
    m.log_b1 = m.log_d1 = Eigen::VectorXd::Zero(pair_count(n));
    return m;
}

int FeecElement::data_cells() const {
    return forcing_cells > 0 ? forcing_cells : 2 * std::max(pou.cells_x(), pou.cells_y());
}

int pair_count(int n) { return n * (n - 1) / 2; }

int pair_index(int i, int j, int n) { return i * n - i * (i + 1) / 2 + (j - i - 1); }

std::vector<std::pair<int, int>> pair_list(int n) {
    std::vector<std::pair<int, int>> p;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) p.emplace_back(i, j);
    return p;
}

std::vector<std::array<int, 3>> triple_list(int n) {
    std::vector<std::array<int, 3>> t;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            for (int k = j + 1; k < n; ++k) t.push_back({i, j, k});
    return t;
}

RowMatrix combo_weights(const PPOUParams& p) {
    const int nf = p.fine_count(), nc = p.coarse_count();
    if (p.combo_logits.rows() != nf || p.combo_logits.cols() != nc)
        throw InvalidInput("combo logits must have one row per fine spline and one column per POU");
    RowMatrix W = RowMatrix::Zero(nf, nc);
    for (int f = 0; f < nf; ++f) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int c = 0; c < nc; ++c)
            if (p.allowed(f, c)) mx = std::max(mx, p.combo_logits(f, c));
        if (!std::isfinite(mx))
            throw StructureViolation("fine spline " + std::to_string(f) + " feeds no coarse POU");
        double s = 0.0;
        for (int c = 0; c < nc; ++c)
            if (p.allowed(f, c)) s += (W(f, c) = std::exp(p.combo_logits(f, c) - mx));
        W.row(f) /= s;
    }
    return W;
}

PouEval eval_pou(const PPOUParams& p, const std::vector<Point>& points) {
    const std::vector<double> bx = realize_knots(p.knot_logits_x), by = realize_knots(p.knot_logits_y);
    const RowMatrix W = combo_weights(p);
    const int nc = p.coarse_count(), d = p.degree, nfx = p.fine_x();
    if (d < 0 || d > kMaxDegree) throw InvalidInput("unsupported spline degree");
    PouEval out;
    out.values = Eigen::MatrixXd::Zero(points.size(), nc);
    out.grad_x = Eigen::MatrixXd::Zero(points.size(), nc);
    out.grad_y = Eigen::MatrixXd::Zero(points.size(), nc);
    double vx[kMaxDegree + 1], dx[kMaxDegree + 1], vy[kMaxDegree + 1], dy[kMaxDegree + 1];
    for (std::size_t q = 0; q < points.size(); ++q) {
        const Point& x = points[q];
        if (x.x < -1e-12 || x.x > 1 + 1e-12 || x.y < -1e-12 || x.y > 1 + 1e-12)
            throw OutOfDomain("point outside the reference square");
        const double px = std::clamp(x.x, 0.0, 1.0), py = std::clamp(x.y, 0.0, 1.0);
        const int cx = find_cell(bx, px), cy = find_cell(by, py);
        bspline_cell<double>(bx, d, cx, px, vx, dx);
        bspline_cell<double>(by, d, cy, py, vy, dy);
        for (int kb = 0; kb <= d; ++kb)
            for (int ka = 0; ka <= d; ++ka) {
                const int f = (cx + ka) + nfx * (cy + kb);
                const auto row = W.row(f);
                out.values.row(q) += vx[ka] * vy[kb] * row;
                out.grad_x.row(q) += dx[ka] * vy[kb] * row;
                out.grad_y.row(q) += vx[ka] * dy[kb] * row;
            }
    }
    return out;
}

QuadratureRule knot_rule(const PPOUParams& p, int ppc) {
    if (ppc <= 0) ppc = p.degree + 1;
    const Rule1D rx = composite_gauss(realize_knots(p.knot_logits_x), ppc);
    const Rule1D ry = composite_gauss(realize_knots(p.knot_logits_y), ppc);
    return tensor_rule(rx, ry, 2 * ppc - 1);
}

WhitneyAssembly assemble_whitney(const PPOUParams& p, const QuadratureRule& quad, bool build_2forms) {
    const int n = p.coarse_count();
    const auto pairs = pair_list(n);
    const int np = static_cast<int>(pairs.size());
    WhitneyAssembly a;
    const PouEval ev = eval_pou(p, quad.points);
    a.pou_values = ev.values;
    a.pou_grad_x = ev.grad_x;
    a.pou_grad_y = ev.grad_y;
    const int nq = static_cast<int>(quad.points.size());

    double pou = 0.0;
    for (int q = 0; q < nq; ++q) pou = std::max(pou, std::abs(ev.values.row(q).sum() - 1.0));
    // moments of the POUs against an exact knot-aligned rule detect rules that miss knot lines
    const QuadratureRule exact = knot_rule(p, p.degree + 2);
    const PouEval ref = eval_pou(p, exact.points);
    Eigen::Map<const Eigen::VectorXd> wq(quad.weights.data(), nq);
    Eigen::Map<const Eigen::VectorXd> we(exact.weights.data(), exact.weights.size());
    const Eigen::VectorXd mom = ev.values.transpose() * wq, mom_ref = ref.values.transpose() * we;
    a.pou_residual = std::max(pou, (mom - mom_ref).cwiseAbs().maxCoeff());
    if (a.pou_residual > 1e-8)
        throw AssemblyAccuracyError("quadrature does not resolve the partition of unity (residual " +
                                    std::to_string(a.pou_residual) + ")");

    Eigen::MatrixXd px(nq, np), py(nq, np);
    for (int k = 0; k < np; ++k) {
        const auto [i, j] = pairs[k];
        px.col(k) = ev.values.col(i).cwiseProduct(ev.grad_x.col(j)) - ev.values.col(j).cwiseProduct(ev.grad_x.col(i));
        py.col(k) = ev.values.col(i).cwiseProduct(ev.grad_y.col(j)) - ev.values.col(j).cwiseProduct(ev.grad_y.col(i));
    }
    a.m1 = px.transpose() * wq.asDiagonal() * px + py.transpose() * wq.asDiagonal() * py;

    std::vector<Eigen::Triplet<int>> t0;
    for (int k = 0; k < np; ++k) {
        t0.emplace_back(k, pairs[k].first, -1);
        t0.emplace_back(k, pairs[k].second, 1);
    }
    a.delta0.resize(np, n);
    a.delta0.setFromTriplets(t0.begin(), t0.end());

    // (psi_ab, -grad phi_i)
    a.div_matrix = -(ev.grad_x.transpose() * wq.asDiagonal() * px + ev.grad_y.transpose() * wq.asDiagonal() * py);
    a.div_algebraic = -(Eigen::MatrixXd(a.delta0.cast<double>()).transpose() * a.m1);

    a.boundary_mask.assign(n, false);
    const RowMatrix W = combo_weights(p);
    for (int c = 0; c < n; ++c) {
        double tr = 0.0;
        for (int f = 0; f < p.fine_count(); ++f)
            if (p.is_boundary_fine(f)) tr += W(f, c);
        a.boundary_mask[c] = tr > 1e-12;
    }

    if (build_2forms) {
        const auto triples = triple_list(n);
        const int nt = static_cast<int>(triples.size());
        std::vector<Eigen::Triplet<int>> t1;
        for (int k = 0; k < nt; ++k) {
            const auto [i, j, l] = triples[k];
            t1.emplace_back(k, pair_index(i, j, n), 1);
            t1.emplace_back(k, pair_index(j, l, n), 1);
            t1.emplace_back(k, pair_index(i, l, n), -1);
        }
        a.delta1.resize(nt, np);
        a.delta1.setFromTriplets(t1.begin(), t1.end());

        auto cross = [&](int i, int j) {  // grad phi_i x grad phi_j
            return Eigen::VectorXd(ev.grad_x.col(i).cwiseProduct(ev.grad_y.col(j)) -
                                   ev.grad_y.col(i).cwiseProduct(ev.grad_x.col(j)));
        };
        Eigen::MatrixXd w2(nq, nt);
        for (int k = 0; k < nt; ++k) {
            const auto [i, j, l] = triples[k];
            w2.col(k) = ev.values.col(i).cwiseProduct(cross(j, l)) - ev.values.col(j).cwiseProduct(cross(i, l)) +
                        ev.values.col(l).cwiseProduct(cross(i, j));
        }
        a.m2 = w2.transpose() * wq.asDiagonal() * w2;
        Eigen::MatrixXd cp(nq, np);
        for (int k = 0; k < np; ++k) cp.col(k) = 2.0 * cross(pairs[k].first, pairs[k].second);
        a.curl_matrix = cp.transpose() * wq.asDiagonal() * w2;
        // CURL_{(ij),(abc)}: 2 times the sign of (i,j,k) within its sorted triple, for k not in {i,j}
        Eigen::MatrixXd curl = Eigen::MatrixXd::Zero(np, nt);
        for (int k = 0; k < nt; ++k) {
            const auto [i, j, l] = triples[k];
            curl(pair_index(i, j, n), k) += 2.0;   // (i,j,l)
            curl(pair_index(i, l, n), k) -= 2.0;   // (i,l,j) is odd
            curl(pair_index(j, l, n), k) += 2.0;   // (j,l,i) is even
        }
        a.curl_algebraic = curl * a.m2;
    }
    return a;
}

ZeroTraceSets apply_zero_trace(const PPOUParams& p, const WhitneyAssembly& a) {
    ZeroTraceSets z;
    const int n = p.coarse_count();
    for (int c = 0; c < n; ++c) {
        if (p.boundary_count == 0 || c < p.interior_count) {
            if (p.boundary_count > 0 && a.boundary_mask[c])
                throw StructureViolation("interior POU " + std::to_string(c) + " has a nonzero trace");
            z.interior.push_back(c);
        } else {
            if (!a.boundary_mask[c])
                throw StructureViolation("boundary POU " + std::to_string(c) + " has no trace");
            z.boundary.push_back(c);
        }
    }
    const auto pairs = pair_list(n);
    for (std::size_t k = 0; k < pairs.size(); ++k)
        if (p.boundary_count == 0 || pairs[k].first < p.interior_count || pairs[k].second < p.interior_count)
            z.zero_pairs.push_back(static_cast<int>(k));
    return z;
}

namespace {

// Piecewise-linear interpolation weights of the nodes at position g.
std::vector<std::pair<int, double>> hat_weights(const std::vector<double>& nodes, double g) {
    const int m = static_cast<int>(nodes.size());
    if (m == 1) return {{0, 1.0}};
    if (g <= nodes.front()) return {{0, 1.0}};
    if (g >= nodes.back()) return {{m - 1, 1.0}};
    int k = 0;
    while (k + 1 < m - 1 && nodes[k + 1] <= g) ++k;
    const double t = (g - nodes[k]) / (nodes[k + 1] - nodes[k]);
    return {{k, 1.0 - t}, {k + 1, t}};
}

}  // namespace

FeecElement initial_element(const ElementShape& s) {
    if (s.cells_x < 1 || s.cells_y < 1) throw InvalidInput("element needs at least one knot cell per axis");
    if (s.degree < 1 || s.degree > kMaxDegree) throw InvalidInput("unsupported spline degree");
    if (s.interior_count < 1) throw InvalidInput("element needs interior POUs");
    FeecElement e;
    PPOUParams& p = e.pou;
    p.degree = s.degree;
    p.knot_logits_x.assign(s.cells_x, 0.0);
    p.knot_logits_y.assign(s.cells_y, 0.0);
    p.interior_count = s.interior_count;
    p.boundary_count = s.boundary_count;
    const int nfx = p.fine_x(), nfy = p.fine_y(), nc = p.coarse_count();
    if (s.boundary_count > 0 && (nfx < 3 || nfy < 3))
        throw InvalidInput("boundary POUs need interior fine splines on both axes");

    int lx = s.lattice_x, ly = s.lattice_y;
    if (lx <= 0 || ly <= 0) {
        lx = 1;
        for (int k = 1; k * k <= s.interior_count; ++k)
            if (s.interior_count % k == 0) lx = k;
        ly = s.interior_count / lx;
    }
    if (lx * ly != s.interior_count) throw InvalidInput("interior lattice does not match the interior count");

    const std::vector<double> gx = greville(realize_knots(p.knot_logits_x), p.degree);
    const std::vector<double> gy = greville(realize_knots(p.knot_logits_y), p.degree);
    const bool blocks = s.boundary_count > 0;
    const double x_lo = blocks ? gx[1] : gx.front(), x_hi = blocks ? gx[nfx - 2] : gx.back();
    const double y_lo = blocks ? gy[1] : gy.front(), y_hi = blocks ? gy[nfy - 2] : gy.back();
    std::vector<double> latx(lx), laty(ly);
    for (int k = 0; k < lx; ++k) latx[k] = lx == 1 ? 0.5 * (x_lo + x_hi) : x_lo + (x_hi - x_lo) * k / (lx - 1);
    for (int k = 0; k < ly; ++k) laty[k] = ly == 1 ? 0.5 * (y_lo + y_hi) : y_lo + (y_hi - y_lo) * k / (ly - 1);

    // boundary nodes on the counterclockwise loop parameterized by [0, 4)
    std::vector<double> loop;
    const int nb = s.boundary_count;
    if (nb >= 4) {
        const int extra = nb - 4;
        for (int side = 0; side < 4; ++side) {
            const int m = extra / 4 + (side < extra % 4 ? 1 : 0);
            loop.push_back(side);
            for (int k = 1; k <= m; ++k) loop.push_back(side + static_cast<double>(k) / (m + 1));
        }
    } else {
        for (int k = 0; k < nb; ++k) loop.push_back(4.0 * k / nb);
    }
    auto loop_pos = [](double x, double y) {
        if (y <= 1e-14) return x;
        if (x >= 1 - 1e-14) return 1.0 + y;
        if (y >= 1 - 1e-14) return 2.0 + (1.0 - x);
        return 3.0 + (1.0 - y);
    };

    Eigen::MatrixXd w = Eigen::MatrixXd::Zero(p.fine_count(), nc);
    for (int b = 0; b < nfy; ++b)
        for (int a = 0; a < nfx; ++a) {
            const int f = a + nfx * b;
            if (!blocks || !p.is_boundary_fine(f)) {
                for (auto [kx, wx] : hat_weights(latx, gx[a]))
                    for (auto [ky, wy] : hat_weights(laty, gy[b])) w(f, kx + lx * ky) += wx * wy;
            } else {
                const double s0 = loop_pos(gx[a], gy[b]);
                // periodic hat interpolation along the loop
                int k = nb - 1;
                for (int m = 0; m < nb; ++m)
                    if (loop[m] <= s0 + 1e-14) k = m;
                const double a0 = loop[k];
                const double a1 = (k + 1 < nb) ? loop[k + 1] : loop[0] + 4.0;
                const double t = std::clamp((s0 - a0) / (a1 - a0), 0.0, 1.0);
                w(f, p.interior_count + k) += 1.0 - t;
                w(f, p.interior_count + (k + 1) % nb) += t;
            }
        }
    p.combo_logits = Eigen::MatrixXd::Zero(p.fine_count(), nc);
    for (int f = 0; f < p.fine_count(); ++f)
        for (int c = 0; c < nc; ++c) p.combo_logits(f, c) = std::log(std::max(w(f, c), s.saturation));
    e.metric = MetricWeights::identity(nc, s.mode);
    return e;
}

json element_to_json(const FeecElement& e) {
    const PPOUParams& p = e.pou;
    json j;
    j["format"] = "ddfeec-element";
    j["version"] = 1;
    j["degree"] = p.degree;
    j["interior_count"] = p.interior_count;
    j["boundary_count"] = p.boundary_count;
    j["knot_logits_x"] = p.knot_logits_x;
    j["knot_logits_y"] = p.knot_logits_y;
    json rows = json::array();
    for (int f = 0; f < p.combo_logits.rows(); ++f) {
        std::vector<double> r(p.combo_logits.cols());
        for (int c = 0; c < p.combo_logits.cols(); ++c) r[c] = p.combo_logits(f, c);
        rows.push_back(r);
    }
    j["combo_logits"] = rows;
    auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    j["metric"] = {{"mode", e.metric.mode == MetricMode::Symmetric ? "symmetric" : "independent"},
                   {"log_b0", vec(e.metric.log_b0)},
                   {"log_b1", vec(e.metric.log_b1)},
                   {"log_d0", vec(e.metric.log_d0)},
                   {"log_d1", vec(e.metric.log_d1)}};
    j["forcing_cells"] = e.forcing_cells;
    j["info"] = e.info;
    return j;
}

FeecElement element_from_json(const json& j) {
    if (j.value("format", std::string()) != "ddfeec-element") throw InvalidInput("not a trained-element file");
    if (j.at("version").get<int>() != 1) throw InvalidInput("unsupported trained-element version");
    FeecElement e;
    PPOUParams& p = e.pou;
    p.degree = j.at("degree").get<int>();
    p.interior_count = j.at("interior_count").get<int>();
    p.boundary_count = j.at("boundary_count").get<int>();
    p.knot_logits_x = j.at("knot_logits_x").get<std::vector<double>>();
    p.knot_logits_y = j.at("knot_logits_y").get<std::vector<double>>();
    const auto& rows = j.at("combo_logits");
    p.combo_logits.resize(rows.size(), p.coarse_count());
    for (std::size_t f = 0; f < rows.size(); ++f) {
        const auto r = rows[f].get<std::vector<double>>();
        if (static_cast<int>(r.size()) != p.coarse_count()) throw InvalidInput("combo logits row has the wrong length");
        for (int c = 0; c < p.coarse_count(); ++c) p.combo_logits(f, c) = r[c];
    }
    if (p.combo_logits.rows() != p.fine_count()) throw InvalidInput("combo logits have the wrong number of rows");
    const auto& m = j.at("metric");
    auto vec = [](const json& v) {
        const auto s = v.get<std::vector<double>>();
        return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(s.data(), s.size()));
    };
    e.metric.mode = m.at("mode").get<std::string>() == "symmetric" ? MetricMode::Symmetric : MetricMode::Independent;
    e.metric.log_b0 = vec(m.at("log_b0"));
    e.metric.log_b1 = vec(m.at("log_b1"));
    e.metric.log_d0 = vec(m.at("log_d0"));
    e.metric.log_d1 = vec(m.at("log_d1"));
    const int n = p.coarse_count();
    if (e.metric.log_d0.size() != n || e.metric.log_b0.size() != n || e.metric.log_d1.size() != pair_count(n) ||
        e.metric.log_b1.size() != pair_count(n))
        throw InvalidInput("metric weight sizes do not match the POU count");
    e.forcing_cells = j.value("forcing_cells", 0);
    e.info = j.value("info", json::object());
    return e;
}

FeecElement load_element(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open element file " + path);
    return element_from_json(json::parse(in));
}

void save_element(const FeecElement& e, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw InvalidInput("cannot write element file " + path);
    out << element_to_json(e).dump(1) << '\n';
}

}  // namespace ddfeec
