#include "ddfeec/experiments.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ddfeec/config.hpp"
#include "ddfeec/errors.hpp"
#include "ddfeec/parallel.hpp"

#ifndef DDFEEC_DATA_DIR
#define DDFEEC_DATA_DIR "."
#endif

namespace ddfeec {

using nlohmann::json;
namespace fs = std::filesystem;

std::string default_data_dir() { return DDFEEC_DATA_DIR; }

bool StudyReport::passed() const { return all_pass(gates); }

std::string StudyReport::csv() const {
    std::ostringstream out;
    for (std::size_t k = 0; k < header.size(); ++k) out << (k ? "," : "") << header[k];
    out << '\n';
    char buf[64];
    for (const auto& r : rows) {
        for (std::size_t k = 0; k < r.size(); ++k) {
            std::snprintf(buf, sizeof buf, "%.10g", r[k]);
            out << (k ? "," : "") << buf;
        }
        out << '\n';
    }
    return out.str();
}

json StudyReport::to_json() const {
    return {{"study", id}, {"passed", passed()}, {"gates", ddfeec::to_json(gates)}, {"extra", extra},
            {"seconds", seconds}};
}

void StudyReport::write(const std::string& dir) const {
    fs::create_directories(dir);
    std::ofstream(fs::path(dir) / (id + ".csv")) << csv();
    std::ofstream(fs::path(dir) / (id + ".json")) << to_json().dump(2) << '\n';
    for (const auto& [name, text] : files) std::ofstream(fs::path(dir) / name) << text;
}

std::vector<std::string> study_ids() {
    return {"example1", "sine_fem", "sine_feec", "cylinder_hybrid", "stripes", "path", "conservation", "invariants"};
}

double fitted_rate(const std::vector<double>& h, const std::vector<double>& err) {
    const int n = static_cast<int>(h.size());
    if (n < 2 || static_cast<int>(err.size()) != n) return std::nan("");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (int k = 0; k < n; ++k) {
        const double x = std::log(h[k]), y = std::log(err[k]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

std::vector<std::string> shipped_solve_configs(const std::string& data_dir) {
    std::vector<std::string> out;
    const fs::path dir = fs::path(data_dir) / "configs";
    if (!fs::exists(dir)) return out;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file() || e.path().extension() != ".json") continue;
        std::ifstream in(e.path());
        const json j = json::parse(in, nullptr, false);
        if (!j.is_discarded() && j.contains("domain")) out.push_back(e.path().string());
    }
    std::sort(out.begin(), out.end());
    return out;
}

namespace {

using Clock = std::chrono::steady_clock;

CheckResult gate(std::string name, bool pass, double value, double threshold, std::string detail = {}) {
    return {std::move(name), pass, value, threshold, std::move(detail)};
}

CheckResult within(const std::string& name, double value, double ref, double tol) {
    const double rel = std::abs(value - ref) / std::abs(ref);
    char buf[96];
    std::snprintf(buf, sizeof buf, "%.4e vs %.4e", value, ref);
    return gate(name, std::isfinite(value) && rel <= tol, rel, tol, buf);
}

CheckResult in_range(const std::string& name, double value, double lo, double hi) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%.3f in [%.3f, %.3f]", value, lo, hi);
    return gate(name, value >= lo && value <= hi, value, hi, buf);
}

std::string data_path(const StudyOptions& o, const std::string& rel) {
    return (fs::path(o.data_dir.empty() ? default_data_dir() : o.data_dir) / rel).string();
}

void require_increasing(const std::vector<double>& levels) {
    if (levels.empty()) throw InvalidInput("empty refinement list");
    for (std::size_t k = 1; k < levels.size(); ++k)
        if (!(levels[k] > levels[k - 1])) throw InvalidInput("refinement list must be strictly decreasing in H");
}

struct LevelResult {
    SolveReport report;
    double seconds = 0.0;
};

LevelResult solve_level(const SolveConfig& c, ElementCache& cache) {
    const auto t0 = Clock::now();
    auto sys = build_system(c, &cache);
    LevelResult r;
    r.report = run_solve(*sys, c);
    r.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return r;
}

// Loads the elements named by a training config, or trains them.
std::vector<std::string> obtain_elements(TrainConfig tc, const StudyOptions& o, ElementCache& cache, json& info) {
    if (o.seed) tc.seed = o.seed;
    if (o.epochs > 0) tc.options.epochs = o.epochs;
    std::vector<std::string> paths;
    bool present = true;
    for (std::size_t i = 0; i < tc.boxes.size(); ++i) {
        paths.push_back(box_path(tc.output, static_cast<int>(i)));
        present = present && fs::exists(paths.back());
    }
    if (present && !o.retrain) {
        info["elements"] = "loaded";
        return paths;
    }
    const auto t0 = Clock::now();
    const auto trained = run_training(tc, false);
    json runs = json::array();
    for (std::size_t i = 0; i < trained.size(); ++i) {
        const auto& t = trained[i];
        cache.put(paths[i], std::make_shared<const FeecElement>(t.result.element));
        runs.push_back({{"element", fs::path(paths[i]).filename().string()},
                        {"initial_loss", t.result.initial_loss},
                        {"best_loss", t.result.best_loss},
                        {"epochs", tc.options.epochs}});
        if (!o.out_dir.empty()) {
            const fs::path dir = fs::path(o.out_dir) / "elements";
            fs::create_directories(dir);
            save_element(t.result.element, (dir / fs::path(paths[i]).filename()).string());
            write_history_csv(t.result.history,
                              (dir / fs::path(paths[i]).filename().replace_extension(".csv")).string());
        }
    }
    info["elements"] = "trained";
    info["training"] = runs;
    info["training_seconds"] = std::chrono::duration<double>(Clock::now() - t0).count();
    return paths;
}

void schur_gates(StudyReport& rep, const SolveReport& r, const std::string& label) {
    rep.gates.push_back(gate(label + ": Schur symmetry defect", r.diagnostics.symmetry_defect <= 1e-10,
                             r.diagnostics.symmetry_defect, 1e-10));
    rep.gates.push_back(gate(label + ": smallest Ritz value positive", r.diagnostics.smallest_ritz > 0,
                             r.diagnostics.smallest_ritz, 0.0));
    rep.gates.push_back(gate(label + ": flux form vs energy form", r.diagnostics.flux_energy_gap <= 1e-10,
                             r.diagnostics.flux_energy_gap, 1e-10));
}

void runtime_gate(StudyReport& rep, double limit) {
    rep.gates.push_back(gate("runtime within " + std::to_string(static_cast<int>(limit)) + " s", rep.seconds <= limit,
                             rep.seconds, limit));
}

// Example 1: K = [[(x+1)^2, .5], [.5, y^2+1]], p = xy + y^2 on [0,2]^2, 2x2 subdomains.
StudyReport study_example1(const StudyOptions& o) {
    StudyReport rep;
    rep.id = "example1";
    rep.header = {"H", "err_p", "err_u", "err_lambda", "iterations"};
    std::vector<double> levels = o.levels.empty() ? std::vector<double>{1, 2, 4, 8, 16} : o.levels;
    require_increasing(levels);
    const SolveConfig base = load_solve_config(data_path(o, "configs/example1.json"));
    // reference rows by level 1/H
    const std::map<int, std::array<double, 3>> table = {{1, {2.73e-1, 4.66e0, 2.44e-1}},
                                                        {2, {6.23e-2, 2.16e0, 5.75e-2}},
                                                        {4, {1.49e-2, 1.04e0, 1.43e-2}},
                                                        {8, {3.66e-3, 5.12e-1, 3.56e-3}},
                                                        {16, {9.06e-4, 2.53e-1, 8.85e-4}},
                                                        {32, {2.26e-4, 1.26e-1, 2.20e-4}}};
    ElementCache cache;
    std::vector<double> hs, ep, eu, el;
    const auto t0 = Clock::now();
    for (double lv : levels) {
        const int l = static_cast<int>(std::lround(lv));
        SolveConfig c = base;
        c.H = base.H / l;
        c.backend.cells_x *= l;
        c.backend.cells_y *= l;
        for (auto& [i, b] : c.overrides) {
            b.cells_x *= l;
            b.cells_y *= l;
        }
        c.spectrum = l <= 4;
        const LevelResult r = solve_level(c, cache);
        const ErrorNorms& e = r.report.errors;
        rep.rows.push_back({c.H, e.L2_p, e.L2_u, e.L2_mortar, static_cast<double>(r.report.result.iterations)});
        hs.push_back(c.H);
        ep.push_back(e.L2_p);
        eu.push_back(e.L2_u);
        el.push_back(e.L2_mortar);
        const std::string tag = "H=1/" + std::to_string(l);
        if (auto it = table.find(l); it != table.end()) {
            rep.gates.push_back(within(tag + " err_p", e.L2_p, it->second[0], 0.10));
            rep.gates.push_back(within(tag + " err_u", e.L2_u, it->second[1], 0.10));
            rep.gates.push_back(within(tag + " err_lambda", e.L2_mortar, it->second[2], 0.10));
        }
        schur_gates(rep, r.report, tag);
    }
    rep.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    if (hs.size() >= 3) {
        const double rp = fitted_rate(hs, ep), ru = fitted_rate(hs, eu), rl = fitted_rate(hs, el);
        rep.extra["rates"] = {{"p", rp}, {"u", ru}, {"lambda", rl}};
        rep.gates.push_back(in_range("pressure rate", rp, 1.9, 2.15));
        rep.gates.push_back(in_range("flux rate", ru, 0.95, 1.15));
        rep.gates.push_back(in_range("mortar rate", rl, 1.85, 2.15));
    }
    runtime_gate(rep, 120);
    return rep;
}

// Example 2 with FEM on every subdomain: m x m cells per unit subdomain and H = 4/m.
StudyReport study_sine_fem(const StudyOptions& o) {
    StudyReport rep;
    rep.id = "sine_fem";
    rep.header = {"cells", "H", "err_p", "err_u", "err_lambda", "iterations"};
    std::vector<double> levels = o.levels.empty() ? std::vector<double>{8, 12, 16, 20, 24, 28, 32, 36, 40} : o.levels;
    require_increasing(levels);
    const SolveConfig base = load_solve_config(data_path(o, "configs/sine_fem.json"));
    const std::map<int, std::array<double, 3>> table = {
        {8, {1.67e-1, 1.54e0, 2.16e-1}},   {12, {7.04e-2, 8.54e-1, 8.16e-2}}, {16, {3.91e-2, 5.76e-1, 4.31e-2}},
        {20, {2.49e-2, 4.30e-1, 2.68e-2}}, {24, {1.72e-2, 3.41e-1, 1.83e-2}}, {28, {1.26e-2, 2.82e-1, 1.33e-2}},
        {32, {9.64e-3, 2.40e-1, 1.01e-2}}, {36, {7.61e-3, 2.08e-1, 7.98e-3}}, {40, {6.15e-3, 1.84e-1, 6.45e-3}}};
    ElementCache cache;
    std::vector<double> hs, ep, eu, el;
    const auto t0 = Clock::now();
    int row = 0;
    for (double lv : levels) {
        const int m = static_cast<int>(std::lround(lv));
        SolveConfig c = base;
        c.backend.cells_x = c.backend.cells_y = m;
        c.H = 4.0 / m;
        c.spectrum = m <= 16;
        const LevelResult r = solve_level(c, cache);
        const ErrorNorms& e = r.report.errors;
        rep.rows.push_back({static_cast<double>(m), c.H, e.L2_p, e.L2_u, e.L2_mortar,
                            static_cast<double>(r.report.result.iterations)});
        hs.push_back(c.H);
        ep.push_back(e.L2_p);
        eu.push_back(e.L2_u);
        el.push_back(e.L2_mortar);
        const std::string tag = std::to_string(m) + "x" + std::to_string(m);
        if (auto it = table.find(m); it != table.end() && row < 5) {
            rep.gates.push_back(within(tag + " err_p", e.L2_p, it->second[0], 0.10));
            rep.gates.push_back(within(tag + " err_u", e.L2_u, it->second[1], 0.10));
            rep.gates.push_back(within(tag + " err_lambda", e.L2_mortar, it->second[2], 0.10));
        }
        schur_gates(rep, r.report, tag);
        ++row;
    }
    rep.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    if (hs.size() >= 3) {
        const double rp = fitted_rate(hs, ep), ru = fitted_rate(hs, eu), rl = fitted_rate(hs, el);
        rep.extra["rates"] = {{"p", rp}, {"u", ru}, {"lambda", rl}};
        rep.gates.push_back(in_range("pressure rate", rp, 2.04 - 0.2, 2.04 + 0.2));
        rep.gates.push_back(in_range("flux rate", ru, 1.31 - 0.2, 1.31 + 0.2));
        rep.gates.push_back(in_range("mortar rate", rl, 2.16 - 0.2, 2.16 + 0.2));
    }
    runtime_gate(rep, 300);
    return rep;
}

// Example 2 with a trained element on every subdomain.
StudyReport study_sine_feec(const StudyOptions& o) {
    StudyReport rep;
    rep.id = "sine_feec";
    rep.header = {"cells", "H", "err_p", "err_u", "err_lambda", "iterations"};
    std::vector<double> levels = o.levels.empty() ? std::vector<double>{8} : o.levels;
    require_increasing(levels);
    const SolveConfig base = load_solve_config(data_path(o, "configs/sine_feec.json"));
    ElementCache cache;
    const auto t0 = Clock::now();
    for (double lv : levels) {
        const int m = static_cast<int>(std::lround(lv));
        const std::string tag = std::to_string(m) + "x" + std::to_string(m);
        const TrainConfig tc = load_train_config(data_path(o, "configs/train/sine_feec_" + std::to_string(m) + ".json"));
        json info;
        const auto paths = obtain_elements(tc, o, cache, info);
        if (static_cast<int>(paths.size()) != base.nx * base.ny)
            throw InvalidInput("sine_feec training config must produce one element per subdomain");
        SolveConfig c = base;
        c.H = 4.0 / m;
        c.overrides.clear();
        for (std::size_t i = 0; i < paths.size(); ++i) {
            BackendChoice b;
            b.kind = BackendKind::Feec;
            b.element = paths[i];
            c.overrides[static_cast<int>(i)] = b;
        }
        const LevelResult r = solve_level(c, cache);
        const ErrorNorms& e = r.report.errors;
        rep.rows.push_back({static_cast<double>(m), c.H, e.L2_p, e.L2_u, e.L2_mortar,
                            static_cast<double>(r.report.result.iterations)});
        rep.extra[tag] = info;
        if (m == 8) {
            rep.gates.push_back(gate("8x8 err_p <= 3.0e-1", e.L2_p <= 0.3, e.L2_p, 0.3));
            rep.gates.push_back(gate("8x8 err_u <= 3.0e0", e.L2_u <= 3.0, e.L2_u, 3.0));
        }
        schur_gates(rep, r.report, tag);
    }
    rep.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    runtime_gate(rep, 1800);
    return rep;
}

double stripes_kappa(double y) {
    const double fl = std::floor(y), t = y - fl;
    if (static_cast<long>(fl) % 2 == 0) return t < 0.4 ? 1.0 : (t < 0.8 ? 0.4 : 0.8);
    return t < 0.4 ? 0.8 : (t < 0.8 ? 0.3 : 0.9);
}

// Stripes: p = x on [0,n]^2 with kappa banded in y; two elements tiled by the parity of floor(y).
StudyReport study_stripes(const StudyOptions& o) {
    StudyReport rep;
    rep.id = "stripes";
    rep.header = {"n", "row", "band_lo", "band_hi", "kappa", "flux_x", "rel_dev", "max_abs_uy"};
    std::vector<double> levels = o.levels.empty() ? std::vector<double>{2, 3} : o.levels;
    const TrainConfig tc = load_train_config(data_path(o, "configs/train/stripes.json"));
    if (tc.boxes.size() != 2) throw InvalidInput("stripes training config needs an even and an odd box");
    ElementCache cache;
    const auto t0 = Clock::now();
    json info;
    const auto paths = obtain_elements(tc, o, cache, info);
    rep.extra["training"] = info;
    if (info.contains("training"))
        for (const auto& run : info["training"]) {
            const double ratio = run["initial_loss"].get<double>() / run["best_loss"].get<double>();
            rep.gates.push_back(gate(run["element"].get<std::string>() + " loss reduced >= 10x", ratio >= 10.0,
                                     ratio, 10.0));
        }
    const SolveConfig base = load_solve_config(data_path(o, "configs/stripes_n2.json"));
    for (double lv : levels) {
        const int n = static_cast<int>(std::lround(lv));
        if (n < 1) throw InvalidInput("stripes needs n >= 1");
        SolveConfig c = base;
        c.domain = {0, 0, static_cast<double>(n), static_cast<double>(n)};
        c.nx = c.ny = n;
        c.H = 1.0;
        c.problem = std::make_shared<ProblemSpec>(*base.problem);
        c.problem->breaks_y.clear();
        for (int k = 0; k < n; ++k)
            for (double t : {0.0, 0.4, 0.8}) c.problem->breaks_y.push_back(k + t);
        c.overrides.clear();
        for (int i = 0; i < n * n; ++i) {
            BackendChoice b;
            b.kind = BackendKind::Feec;
            b.element = paths[(i / n) % 2];
            c.overrides[i] = b;
        }
        auto sys = build_system(c, &cache);
        const SolveReport r = run_solve(*sys, c);
        const auto fields = sys->reconstruct(r.result.lambda);
        const std::string tag = "n=" + std::to_string(n);
        schur_gates(rep, r, tag);
        // pressure on a grid with spacing 1/40, which contains the band edges
        const int G = 40 * n;
        double mp = 0.0;
        for (int a = 0; a <= G; ++a)
            for (int b = 0; b <= G; ++b) {
                const Point x{n * double(a) / G, n * double(b) / G};
                mp = std::max(mp, std::abs(sys->evaluate(fields, x).p - x.x));
            }
        rep.gates.push_back(gate(tag + " max |p_h - x| <= 1e-2", mp <= 1e-2, mp, 1e-2));
        const double margin = 0.05;
        for (int k = 0; k < n; ++k)
            for (int band = 0; band < 3; ++band) {
                const double lo = k + (band == 0 ? 0.0 : band == 1 ? 0.4 : 0.8);
                const double hi = k + (band == 0 ? 0.4 : band == 1 ? 0.8 : 1.0);
                const double kap = stripes_kappa(0.5 * (lo + hi));
                double sum = 0.0, uy = 0.0;
                int cnt = 0;
                for (int a = 1; a < 40 * n; ++a)
                    for (int b = 0; b <= 20; ++b) {
                        const Point x{n * a / (40.0 * n), lo + margin + (hi - lo - 2 * margin) * b / 20.0};
                        const PointValue v = sys->evaluate(fields, x);
                        sum += v.u.x();
                        uy = std::max(uy, std::abs(v.u.y()));
                        ++cnt;
                    }
                const double fx = sum / cnt, dev = (fx - kap) / kap;
                rep.rows.push_back({double(n), double(k), lo, hi, kap, fx, dev, uy});
                char name[96];
                std::snprintf(name, sizeof name, "%s band [%.1f,%.1f) flux-x within 15%%", tag.c_str(), lo, hi);
                rep.gates.push_back(gate(name, std::abs(dev) <= 0.15, std::abs(dev), 0.15));
            }
        std::ostringstream prof;
        prof << "y,p,u_x,u_y,kappa\n";
        char buf[160];
        for (int b = 0; b <= 200 * n; ++b) {
            const Point x{0.5 * n, n * b / (200.0 * n)};
            const PointValue v = sys->evaluate(fields, x);
            std::snprintf(buf, sizeof buf, "%.10g,%.10g,%.10g,%.10g,%.10g\n", x.y, v.p, v.u.x(), v.u.y(),
                          stripes_kappa(std::min(x.y, n - 1e-12)));
            prof << buf;
        }
        rep.files["stripes_n" + std::to_string(n) + "_profile.csv"] = prof.str();
    }
    rep.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    runtime_gate(rep, 600);
    return rep;
}

// L2 norms of p and u = K grad p of the exact solution over the domain.
std::pair<double, double> exact_norms(const ProblemSpec& p, const Rect& dom, int cells) {
    const Rule1D rx = composite_gauss(uniform_breaks(dom.x0, dom.x1, cells), 3);
    const Rule1D ry = composite_gauss(uniform_breaks(dom.y0, dom.y1, cells), 3);
    double sp = 0.0, su = 0.0;
    for (std::size_t a = 0; a < rx.nodes.size(); ++a)
        for (std::size_t b = 0; b < ry.nodes.size(); ++b) {
            const Point x{rx.nodes[a], ry.nodes[b]};
            const double w = rx.weights[a] * ry.weights[b];
            sp += w * std::pow(p.exact->p(x), 2);
            su += w * p.exact_flux(x).squaredNorm();
        }
    return {std::sqrt(sp), std::sqrt(su)};
}

// Hybrid cylinder: trained element (or FEM control) on the centre square, 8x8 FEM elsewhere.
StudyReport study_cylinder(const StudyOptions& o) {
    StudyReport rep;
    rep.id = "cylinder_hybrid";
    rep.header = {"center_backend", "cells", "err_p", "err_u", "err_lambda", "rel_p", "rel_u", "iterations"};
    std::vector<double> levels = o.levels.empty() ? std::vector<double>{8, 16, 24} : o.levels;
    require_increasing(levels);
    const SolveConfig base = load_solve_config(data_path(o, "configs/cylinder_hybrid.json"));
    const auto [np, nu] = exact_norms(*base.problem, base.domain, 240);
    rep.extra["norm_p"] = np;
    rep.extra["norm_u"] = nu;
    const int centre = 4;
    ElementCache cache;
    const auto t0 = Clock::now();
    std::map<std::string, std::vector<std::array<double, 3>>> errs;
    for (int kind = 0; kind < 2; ++kind) {
        const std::string name = kind == 0 ? "fem" : "feec";
        for (double lv : levels) {
            const int m = static_cast<int>(std::lround(lv));
            SolveConfig c = base;
            BackendChoice b;
            if (kind == 0) {
                b.kind = BackendKind::Fem;
                b.cells_x = b.cells_y = m;
                b.subcells = 4;
            } else {
                const TrainConfig tc =
                    load_train_config(data_path(o, "configs/train/cylinder_" + std::to_string(m) + ".json"));
                json info;
                b.kind = BackendKind::Feec;
                b.element = obtain_elements(tc, o, cache, info).at(0);
                rep.extra["feec_" + std::to_string(m)] = info;
            }
            c.overrides[centre] = b;
            const LevelResult r = solve_level(c, cache);
            const ErrorNorms& e = r.report.errors;
            rep.rows.push_back({double(kind), double(m), e.L2_p, e.L2_u, e.L2_mortar, e.L2_p / np, e.L2_u / nu,
                                double(r.report.result.iterations)});
            errs[name].push_back({e.L2_p, e.L2_u, e.L2_mortar});
            const std::string tag = name + " " + std::to_string(m) + "x" + std::to_string(m);
            schur_gates(rep, r.report, tag);
            if (kind == 1 && m == 8)
                rep.gates.push_back(gate("feec 8x8 relative flux error <= 8%", e.L2_u / nu <= 0.08, e.L2_u / nu, 0.08));
        }
    }
    const char* norms[3] = {"p", "u", "lambda"};
    auto& fem = errs["fem"];
    for (int k = 0; k < 3; ++k) {
        bool mono = true;
        for (std::size_t l = 1; l < fem.size(); ++l) mono = mono && fem[l][k] < fem[l - 1][k];
        rep.gates.push_back(gate(std::string("fem control decreases monotonically in ") + norms[k], mono,
                                 fem.back()[k], fem.front()[k]));
    }
    auto& fe = errs["feec"];
    if (fe.size() >= 2 && levels.front() == 8)
        for (int k = 0; k < 3; ++k)
            rep.gates.push_back(gate(std::string("finest feec better than 8x8 in ") + norms[k],
                                     fe.back()[k] < fe.front()[k], fe.back()[k], fe.front()[k]));
    rep.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return rep;
}

// Path problem: refinement in the number of subdomains against a fine FEM reference.
StudyReport study_path(const StudyOptions& o) {
    StudyReport rep;
    rep.id = "path";
    rep.header = {"n", "H", "err_p", "err_u", "rel_p", "rel_u", "iterations"};
    std::vector<double> levels = o.levels.empty() ? std::vector<double>{2, 3, 4} : o.levels;
    require_increasing(levels);
    const SolveConfig base = load_solve_config(data_path(o, "configs/path.json"));
    TrainConfig tc = load_train_config(data_path(o, "configs/train/path.json"));
    const auto t0 = Clock::now();
    // reference
    const int R = 256;
    auto ref = std::make_shared<FemBackend>(0, base.domain, R, R, base.problem, std::array<bool, 4>{true, true, true, true},
                                            FemOptions{4, 2});
    Eigen::VectorXd trace(ref->trace_size());
    for (int t = 0; t < ref->trace_size(); ++t) trace[t] = base.problem->g(ref->node_point(ref->trace_nodes()[t]));
    auto field = std::make_shared<LocalField>(ref->solve(trace, true));
    auto prob = std::make_shared<ProblemSpec>(*base.problem);
    prob->exact = ExactSolution{[ref, field](const Point& x) { return ref->evaluate(*field, x).p; },
                                [ref, field](const Point& x) { return ref->evaluate(*field, x).grad; }};
    const auto [np, nu] = exact_norms(*prob, base.domain, 128);
    ElementCache cache;
    std::vector<double> hs, eu;
    for (double lv : levels) {
        const int n = static_cast<int>(std::lround(lv));
        SolveConfig c = base;
        c.problem = prob;
        c.nx = c.ny = n;
        c.H = 1.0 / (4 * n);
        c.spectrum = false;
        TrainConfig t = tc;
        t.boxes = build_decomposition(c.domain, n, n).subdomains;
        if (const auto k = t.output.find("{n}"); k != std::string::npos) t.output.replace(k, 3, std::to_string(n));
        StudyOptions oo = o;
        oo.retrain = true;  // elements are trained per level
        json info;
        const auto paths = obtain_elements(t, oo, cache, info);
        c.overrides.clear();
        for (int i = 0; i < n * n; ++i) {
            BackendChoice b;
            b.kind = BackendKind::Feec;
            b.element = paths[i];
            c.overrides[i] = b;
        }
        const LevelResult r = solve_level(c, cache);
        const ErrorNorms& e = r.report.errors;
        rep.rows.push_back({double(n), c.H, e.L2_p, e.L2_u, e.L2_p / np, e.L2_u / nu,
                            double(r.report.result.iterations)});
        hs.push_back(1.0 / n);
        eu.push_back(e.L2_u);
    }
    if (hs.size() >= 3) {
        const double ru = fitted_rate(hs, eu);
        rep.extra["flux_rate"] = ru;
        rep.gates.push_back(in_range("flux error slope in the subdomain count", ru, 0.6, 1.4));
    }
    rep.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return rep;
}

StudyReport study_conservation(const StudyOptions& o) {
    StudyReport rep;
    rep.id = "conservation";
    rep.header = {"config", "residual", "scale", "iterations"};
    const auto t0 = Clock::now();
    ElementCache cache;
    int k = 0;
    for (const char* name : {"conservation_matching", "conservation_nonmatching", "conservation_source"}) {
        const SolveConfig c = load_solve_config(data_path(o, std::string("configs/") + name + ".json"));
        if (c.problem->bc != BcKind::Neumann) throw InvalidInput(std::string(name) + " must be a Neumann problem");
        auto sys = build_system(c, &cache);
        const SolveResult r = sys->solve(c.solver);
        const auto fields = sys->reconstruct(r.lambda);
        double scale = 1.0;
        const double res = sys->conservation_residual(fields, &scale);
        rep.rows.push_back({double(k++), res, scale, double(r.iterations)});
        rep.gates.push_back(gate(std::string(name) + " conservation residual", std::abs(res) <= 1e-10, std::abs(res), 1e-10));
        // the mortar mean constraint
        double mean = 0.0;
        const MortarSpace& m = sys->mortar();
        const Rule1D g = gauss_legendre(3);
        for (std::size_t e = 0; e < m.edges.size(); ++e) {
            if (!m.edges[e].interior) continue;
            const double len = m.edges[e].length();
            const int cells = static_cast<int>(m.edges[e].nodes.size()) - 1;
            for (int c2 = 0; c2 < cells; ++c2)
                for (std::size_t q = 0; q < g.nodes.size(); ++q)
                    mean += g.weights[q] * len / cells * m.eval(r.lambda, static_cast<int>(e), len * (c2 + g.nodes[q]) / cells);
        }
        rep.gates.push_back(gate(std::string(name) + " mortar mean", std::abs(mean) <= 1e-10, std::abs(mean), 1e-10));
    }
    rep.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return rep;
}

StudyReport study_invariants(const StudyOptions& o) {
    StudyReport rep;
    rep.id = "invariants";
    rep.header = {"check", "pass", "value", "threshold"};
    const auto t0 = Clock::now();
    auto add = [&](const std::vector<CheckResult>& v) {
        for (const auto& c : v) rep.gates.push_back(c);
    };
    add(whitney_checks());
    add(gradient_checks());
    add(patch_checks());
    add(assumption_checks());
    add(mutation_checks());
    ElementCache cache;
    for (const auto& path : shipped_solve_configs(o.data_dir.empty() ? default_data_dir() : o.data_dir)) {
        const SolveConfig c = load_solve_config(path);
        auto sys = build_system(c, &cache);
        add(schur_checks(*sys, fs::path(path).filename().string()));
    }
    add(study_conservation(o).gates);
    for (std::size_t k = 0; k < rep.gates.size(); ++k)
        rep.rows.push_back({double(k), rep.gates[k].pass ? 1.0 : 0.0, rep.gates[k].value, rep.gates[k].threshold});
    rep.extra["names"] = json::array();
    for (const auto& g : rep.gates) rep.extra["names"].push_back(g.name);
    rep.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return rep;
}

}  // namespace

StudyReport run_study(const std::string& id, const StudyOptions& o) {
    StudyReport r;
    if (id == "example1") r = study_example1(o);
    else if (id == "sine_fem") r = study_sine_fem(o);
    else if (id == "sine_feec") r = study_sine_feec(o);
    else if (id == "stripes") r = study_stripes(o);
    else if (id == "cylinder_hybrid") r = study_cylinder(o);
    else if (id == "path") r = study_path(o);
    else if (id == "conservation") r = study_conservation(o);
    else if (id == "invariants") r = study_invariants(o);
    else throw InvalidInput("unknown study '" + id + "'");
    if (!o.out_dir.empty()) r.write(o.out_dir);
    return r;
}

}  // namespace ddfeec
