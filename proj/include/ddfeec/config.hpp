#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "ddfeec/fem_backend.hpp"
#include "ddfeec/feec_backend.hpp"
#include "ddfeec/mortar.hpp"
#include "ddfeec/training.hpp"
#include "json.hpp"

namespace ddfeec {

struct BackendChoice {
    BackendKind kind = BackendKind::Fem;
    int cells_x = 8, cells_y = 8;  // fem
    int subcells = 1;              // fem quadrature splitting for rough K
    std::string element;           // feec element file, resolved
};

struct SolveConfig {
    Rect domain{0, 0, 1, 1};
    int nx = 1, ny = 1;
    std::shared_ptr<ProblemSpec> problem;
    double H = 0.5;
    ProjectionMode projection = ProjectionMode::L2;
    BackendChoice backend;
    std::map<int, BackendChoice> overrides;  // by subdomain index
    SchurOptions solver;
    bool spectrum = true;  // dense Schur spectrum in the diagnostics
};

// Paths inside the config are resolved against base_dir.
SolveConfig parse_solve_config(const nlohmann::json& j, const std::string& base_dir = ".");
SolveConfig load_solve_config(const std::string& path);

// Sides of subdomain i that carry mortar traces for the given flavor.
std::array<bool, 4> trace_sides_for(const Decomposition& d, int i, MortarFlavor flavor);

// Elements are loaded once per path.
class ElementCache {
public:
    std::shared_ptr<const FeecElement> get(const std::string& path);
    void put(const std::string& path, std::shared_ptr<const FeecElement> e) { cache_[path] = std::move(e); }

private:
    std::map<std::string, std::shared_ptr<const FeecElement>> cache_;
};

std::unique_ptr<SchurSystem> build_system(const SolveConfig& config, ElementCache* cache = nullptr);

struct SolveReport {
    SolveResult result;
    bool has_errors = false;
    ErrorNorms errors;
    SchurDiagnostics diagnostics;
    double conservation = 0.0;  // Neumann flavor only
    int free_dofs = 0;
    std::vector<std::string> warnings;
    nlohmann::json to_json() const;
};

SolveReport run_solve(const SchurSystem& system, const SolveConfig& config);

struct TrainConfig {
    ElementShape shape;
    std::string initial;            // optional element file to start from
    std::vector<Rect> boxes;        // one element per box
    std::shared_ptr<ProblemSpec> problem;  // K and the forcing used by homogeneous+forcing
    std::vector<std::string> suites{"nodal4"};
    int samples = 20480;
    std::uint64_t seed = 1;  // box i uses seed + i
    int reference_cells = 100;
    int data_points = 4;
    LossConfig loss;
    TrainOptions options;
    std::string output = "element.json";  // "{i}" is replaced by the box index
    std::string history;                   // optional CSV, same pattern
};

TrainConfig parse_train_config(const nlohmann::json& j, const std::string& base_dir = ".");
TrainConfig load_train_config(const std::string& path);
std::string box_path(const std::string& pattern, int i);

struct TrainedElement {
    TrainResult result;
    std::string path;
};
// Trains one element per box. Files are written when write is set.
std::vector<TrainedElement> run_training(const TrainConfig& config, bool write = true);

std::string resolve_path(const std::string& base_dir, const std::string& path);

}  // namespace ddfeec
