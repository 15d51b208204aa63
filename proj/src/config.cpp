#include "ddfeec/config.hpp"

#include <filesystem>
#include <fstream>

#include "ddfeec/errors.hpp"
#include "ddfeec/parallel.hpp"

namespace ddfeec {

using nlohmann::json;
namespace fs = std::filesystem;

std::string resolve_path(const std::string& base_dir, const std::string& path) {
    const fs::path p(path);
    if (p.is_absolute() || base_dir.empty()) return p.lexically_normal().string();
    return (fs::path(base_dir) / p).lexically_normal().string();
}

namespace {

json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw InvalidInput(path + ": " + e.what());
    }
}

Rect parse_rect(const json& j) {
    const auto v = j.get<std::vector<double>>();
    if (v.size() != 4 || !(v[2] > v[0]) || !(v[3] > v[1])) throw InvalidInput("rectangle must be [x0, y0, x1, y1]");
    return {v[0], v[1], v[2], v[3]};
}

std::pair<int, int> parse_pair(const json& j) {
    if (j.is_number_integer()) return {j.get<int>(), j.get<int>()};
    const auto v = j.get<std::vector<int>>();
    if (v.size() != 2) throw InvalidInput("expected an integer or a pair");
    return {v[0], v[1]};
}

BackendChoice parse_backend(const json& j, const std::string& base) {
    BackendChoice b;
    if (j.contains("fem")) {
        b.kind = BackendKind::Fem;
        std::tie(b.cells_x, b.cells_y) = parse_pair(j.at("fem"));
        b.subcells = j.value("subcells", 1);
        if (b.cells_x < 1 || b.cells_y < 1 || b.subcells < 1) throw InvalidInput("fem cells must be positive");
    } else if (j.contains("feec")) {
        b.kind = BackendKind::Feec;
        b.element = resolve_path(base, j.at("feec").get<std::string>());
    } else {
        throw InvalidInput("backend must be {\"fem\": cells} or {\"feec\": file}");
    }
    return b;
}

}  // namespace

SolveConfig parse_solve_config(const json& j, const std::string& base) {
    try {
        SolveConfig c;
        c.domain = parse_rect(j.at("domain"));
        std::tie(c.nx, c.ny) = parse_pair(j.value("subdomains", json(1)));
        if (c.nx < 1 || c.ny < 1) throw InvalidInput("subdomain counts must be positive");
        c.problem = std::make_shared<ProblemSpec>(parse_problem(j.at("problem")));
        const json m = j.value("mortar", json::object());
        c.H = m.value("H", 0.5);
        if (!(c.H > 0)) throw InvalidInput("mortar H must be positive");
        const std::string proj = m.value("projection", std::string("l2"));
        if (proj == "l2") c.projection = ProjectionMode::L2;
        else if (proj == "interpolation") c.projection = ProjectionMode::Interpolation;
        else throw InvalidInput("projection must be 'l2' or 'interpolation'");
        c.backend = parse_backend(j.value("backend", json{{"fem", 8}}), base);
        for (const auto& o : j.value("overrides", json::array())) {
            const int i = o.at("subdomain").get<int>();
            if (i < 0 || i >= c.nx * c.ny) throw InvalidInput("override for a missing subdomain");
            c.overrides[i] = parse_backend(o, base);
        }
        const json s = j.value("solver", json::object());
        c.solver.tol = s.value("tol", c.solver.tol);
        c.solver.max_iter = s.value("max_iter", c.solver.max_iter);
        c.solver.allow_rank_deficient = s.value("allow_rank_deficient", false);
        c.solver.unisolvency_threshold = s.value("unisolvency_threshold", c.solver.unisolvency_threshold);
        c.spectrum = s.value("spectrum", true);
        return c;
    } catch (const json::exception& e) {
        throw InvalidInput(std::string("solve config: ") + e.what());
    }
}

SolveConfig load_solve_config(const std::string& path) {
    return parse_solve_config(read_json(path), fs::path(path).parent_path().string());
}

std::array<bool, 4> trace_sides_for(const Decomposition& d, int i, MortarFlavor flavor) {
    std::array<bool, 4> t{true, true, true, true};
    if (flavor == MortarFlavor::Neumann) {
        const auto b = d.boundary_sides(i);
        for (int s = 0; s < 4; ++s) t[s] = !b[s];
    }
    return t;
}

std::shared_ptr<const FeecElement> ElementCache::get(const std::string& path) {
    auto it = cache_.find(path);
    if (it != cache_.end()) return it->second;
    auto e = std::make_shared<const FeecElement>(load_element(path));
    cache_[path] = e;
    return e;
}

std::unique_ptr<SchurSystem> build_system(const SolveConfig& c, ElementCache* cache) {
    ElementCache local;
    if (!cache) cache = &local;
    const Decomposition d = build_decomposition(c.domain, c.nx, c.ny);
    const MortarFlavor flavor = c.problem->bc == BcKind::Neumann ? MortarFlavor::Neumann : MortarFlavor::Dirichlet;
    MortarSpace mortar = build_mortar_space(d, c.H, flavor);
    const int n = c.nx * c.ny;
    std::vector<BackendChoice> choice(n, c.backend);
    for (const auto& [i, b] : c.overrides) choice[i] = b;
    std::vector<std::shared_ptr<const FeecElement>> elements(n);
    for (int i = 0; i < n; ++i)
        if (choice[i].kind == BackendKind::Feec) elements[i] = cache->get(choice[i].element);
    std::vector<LocalSolverPtr> solvers(n);
    parallel_for(n, [&](int i) {
        const auto sides = trace_sides_for(d, i, flavor);
        if (choice[i].kind == BackendKind::Fem)
            solvers[i] = std::make_shared<FemBackend>(i, d.subdomains[i], choice[i].cells_x, choice[i].cells_y,
                                                      c.problem, sides, FemOptions{4, choice[i].subcells});
        else
            solvers[i] = std::make_shared<FeecBackend>(i, d.subdomains[i], elements[i], c.problem, sides);
    });
    return std::make_unique<SchurSystem>(c.problem, std::move(mortar), std::move(solvers), c.projection);
}

SolveReport run_solve(const SchurSystem& system, const SolveConfig& c) {
    SolveReport r;
    r.free_dofs = system.mortar().free_size();
    r.warnings = system.mortar().adjustments;
    r.result = system.solve(c.solver);
    const auto fields = system.reconstruct(r.result.lambda);
    if (c.problem->exact) {
        r.has_errors = true;
        r.errors = system.error_norms(r.result.lambda, fields);
    }
    r.diagnostics = system.diagnostics(7, c.spectrum);
    if (system.mortar().flavor == MortarFlavor::Neumann) r.conservation = system.conservation_residual(fields);
    if (r.diagnostics.unisolvency_sigma < c.solver.unisolvency_threshold)
        r.warnings.push_back("trace projection is rank deficient");
    return r;
}

json SolveReport::to_json() const {
    json j;
    j["iterations"] = result.iterations;
    j["residuals"] = result.residuals;
    j["free_dofs"] = free_dofs;
    j["lambda"] = std::vector<double>(result.lambda.data(), result.lambda.data() + result.lambda.size());
    if (has_errors)
        j["errors"] = {{"L2_p", errors.L2_p}, {"L2_u", errors.L2_u}, {"L2_lambda", errors.L2_mortar},
                       {"H1_semi", errors.H1_semi}};
    j["diagnostics"] = {{"symmetry_defect", diagnostics.symmetry_defect},
                        {"flux_energy_gap", diagnostics.flux_energy_gap},
                        {"smallest_ritz", diagnostics.smallest_ritz},
                        {"largest_ritz", diagnostics.largest_ritz},
                        {"unisolvency_sigma", diagnostics.unisolvency_sigma},
                        {"edge_jumps", diagnostics.edge_jumps}};
    j["conservation_residual"] = conservation;
    j["warnings"] = warnings;
    return j;
}

TrainConfig parse_train_config(const json& j, const std::string& base) {
    try {
        TrainConfig c;
        const json e = j.value("element", json::object());
        c.shape.cells_x = c.shape.cells_y = e.value("cells", 8);
        c.shape.degree = e.value("degree", 2);
        c.shape.interior_count = e.value("interior", 16);
        c.shape.boundary_count = e.value("boundary", 16);
        c.shape.lattice_x = e.value("lattice_x", 0);
        c.shape.lattice_y = e.value("lattice_y", 0);
        const std::string mode = e.value("metric", std::string("symmetric"));
        if (mode == "symmetric") c.shape.mode = MetricMode::Symmetric;
        else if (mode == "independent") c.shape.mode = MetricMode::Independent;
        else throw InvalidInput("metric must be 'symmetric' or 'independent'");
        if (e.contains("initial")) c.initial = resolve_path(base, e.at("initial").get<std::string>());
        if (j.contains("boxes")) {
            for (const auto& b : j.at("boxes")) c.boxes.push_back(parse_rect(b));
        } else if (j.contains("tiles")) {
            const json& t = j.at("tiles");
            const auto [nx, ny] = parse_pair(t.at("subdomains"));
            for (const Rect& r : build_decomposition(parse_rect(t.at("domain")), nx, ny).subdomains) c.boxes.push_back(r);
        } else {
            c.boxes.push_back(parse_rect(j.value("box", json{0, 0, 1, 1})));
        }
        c.problem = std::make_shared<ProblemSpec>(parse_problem(j.value("problem", json::object())));
        c.suites = j.value("suites", c.suites);
        c.samples = j.value("samples", c.samples);
        c.seed = j.value("seed", c.seed);
        c.reference_cells = j.value("reference_cells", c.reference_cells);
        c.data_points = j.value("data_points", c.data_points);
        const json l = j.value("loss", json::object());
        c.loss.alpha = l.value("alpha", c.loss.alpha);
        c.loss.flux_floor = l.value("flux_floor", c.loss.flux_floor);
        TrainOptions& o = c.options;
        o.epochs = j.value("epochs", o.epochs);
        o.learning_rate = j.value("learning_rate", o.learning_rate);
        o.checkpoint_every = j.value("checkpoint_every", o.checkpoint_every);
        o.guard_H = j.value("guard_H", o.guard_H);
        o.max_retries = j.value("max_retries", o.max_retries);
        c.output = resolve_path(base, j.value("output", c.output));
        if (j.contains("history")) c.history = resolve_path(base, j.at("history").get<std::string>());
        for (const Rect& r : c.boxes)
            if (std::abs(r.width() - r.height()) > 1e-12 * r.width()) throw InvalidInput("training boxes must be squares");
        return c;
    } catch (const json::exception& e) {
        throw InvalidInput(std::string("training config: ") + e.what());
    }
}

TrainConfig load_train_config(const std::string& path) {
    return parse_train_config(read_json(path), fs::path(path).parent_path().string());
}

std::string box_path(const std::string& pattern, int i) {
    std::string s = pattern;
    const auto k = s.find("{i}");
    if (k != std::string::npos) s.replace(k, 3, std::to_string(i));
    return s;
}

std::vector<TrainedElement> run_training(const TrainConfig& c, bool write) {
    const FeecElement init = c.initial.empty() ? initial_element(c.shape) : load_element(c.initial);
    std::vector<TrainedElement> out;
    for (std::size_t i = 0; i < c.boxes.size(); ++i) {
        DatasetConfig dc;
        dc.box = c.boxes[i];
        dc.K = c.problem->K;
        dc.breaks_x = c.problem->breaks_x;
        dc.breaks_y = c.problem->breaks_y;
        dc.forcing = c.problem->f;
        dc.suites = c.suites;
        dc.samples = c.samples;
        dc.seed = c.seed + i;
        dc.reference_cells = c.reference_cells;
        auto data = std::make_shared<const TrainingDataset>(generate_dataset(dc));
        const LossModel model(data, c.loss, init.data_cells(), c.data_points);
        TrainedElement t;
        t.result = train(init, model, c.options);
        if (t.result.halted) throw TrainingError("training halted: " + t.result.message);
        t.result.element.info = {{"box", {dc.box.x0, dc.box.y0, dc.box.x1, dc.box.y1}},
                                 {"suites", c.suites},
                                 {"samples", c.samples},
                                 {"seed", dc.seed},
                                 {"epochs", c.options.epochs},
                                 {"initial_loss", t.result.initial_loss},
                                 {"best_loss", t.result.best_loss}};
        t.path = box_path(c.output, static_cast<int>(i));
        if (write) {
            if (fs::path(t.path).has_parent_path()) fs::create_directories(fs::path(t.path).parent_path());
            save_element(t.result.element, t.path);
            if (!c.history.empty()) write_history_csv(t.result.history, box_path(c.history, static_cast<int>(i)));
        }
        out.push_back(std::move(t));
    }
    return out;
}

}  // namespace ddfeec
