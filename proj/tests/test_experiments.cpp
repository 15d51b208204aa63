#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "ddfeec/config.hpp"
#include "ddfeec/errors.hpp"
#include "ddfeec/experiments.hpp"

using namespace ddfeec;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json small_config() {
    return json::parse(R"({
        "domain": [0, 0, 2, 1], "subdomains": [2, 1],
        "problem": {"K": 1, "f": 0, "g": "x + 2*y", "exact": {"p": "x + 2*y", "px": 1, "py": 2}},
        "mortar": {"H": 0.5},
        "backend": {"fem": 4},
        "overrides": [{"subdomain": 1, "fem": [5, 4], "subcells": 2}]
    })");
}

StudyOptions source_tree() {
    StudyOptions o;
    o.data_dir = DDFEEC_SOURCE_DIR;
    return o;
}

}  // namespace

TEST_CASE("fitted rate") {
    CHECK(fitted_rate({1, 0.5, 0.25, 0.125}, {3, 0.75, 0.1875, 0.046875}) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(fitted_rate({0.1, 0.2}, {5e-3, 1e-2}) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::isnan(fitted_rate({1}, {1})));
    CHECK(std::isnan(fitted_rate({1, 2}, {1})));
}

TEST_CASE("solve config parsing") {
    const SolveConfig c = parse_solve_config(small_config(), "/data/run");
    CHECK(c.nx == 2);
    CHECK(c.ny == 1);
    CHECK(c.H == 0.5);
    CHECK(c.projection == ProjectionMode::L2);
    CHECK(c.backend.kind == BackendKind::Fem);
    CHECK(c.backend.cells_x == 4);
    REQUIRE(c.overrides.count(1));
    CHECK(c.overrides.at(1).cells_x == 5);
    CHECK(c.overrides.at(1).cells_y == 4);
    CHECK(c.overrides.at(1).subcells == 2);
    CHECK(c.problem->g({1, 1}) == 3.0);

    json j = small_config();
    j["overrides"] = json::array({{{"subdomain", 0}, {"feec", "el/a.json"}}});
    const SolveConfig f = parse_solve_config(j, "/data/run");
    CHECK(f.overrides.at(0).kind == BackendKind::Feec);
    CHECK(fs::path(f.overrides.at(0).element) == fs::path("/data/run/el/a.json"));

    auto rejects = [](json bad) { CHECK_THROWS_AS(parse_solve_config(bad), InvalidInput); };
    j = small_config();
    j["subdomains"] = 0;
    rejects(j);
    j = small_config();
    j["mortar"]["H"] = -1;
    rejects(j);
    j = small_config();
    j["mortar"]["projection"] = "h1";
    rejects(j);
    j = small_config();
    j["overrides"][0]["subdomain"] = 2;
    rejects(j);
    j = small_config();
    j["backend"] = {{"spectral", 3}};
    rejects(j);
    j = small_config();
    j["domain"] = {0, 0, -1, 1};
    rejects(j);
    j = small_config();
    j.erase("problem");
    rejects(j);
}

// The interface mortar nodes are grid nodes on both sides, so affine data is reproduced.
TEST_CASE("an affine solution through the config path") {
    const SolveConfig c = parse_solve_config(small_config());
    auto sys = build_system(c);
    const SolveReport r = run_solve(*sys, c);
    CHECK(r.has_errors);
    CHECK(r.errors.L2_p <= 1e-11);
    CHECK(r.errors.L2_u <= 1e-10);
    const json out = r.to_json();
    CHECK(out.contains("errors"));
    CHECK(out.contains("diagnostics"));
}

TEST_CASE("trace sides by flavor") {
    const Decomposition d = build_decomposition({0, 0, 2, 2}, 2, 2);
    const auto all = trace_sides_for(d, 0, MortarFlavor::Dirichlet);
    CHECK((all[0] && all[1] && all[2] && all[3]));
    // subdomain 0 is the lower left square: only its right and top sides are interfaces
    const auto n = trace_sides_for(d, 0, MortarFlavor::Neumann);
    CHECK_FALSE(n[static_cast<int>(Side::Bottom)]);
    CHECK(n[static_cast<int>(Side::Right)]);
    CHECK(n[static_cast<int>(Side::Top)]);
    CHECK_FALSE(n[static_cast<int>(Side::Left)]);
}

TEST_CASE("training config parsing") {
    const TrainConfig t = load_train_config(std::string(DDFEEC_SOURCE_DIR) + "/configs/train/stripes.json");
    CHECK(t.boxes.size() == 2);
    CHECK(t.shape.cells_x == 12);
    CHECK(t.shape.interior_count == 14);
    CHECK(t.shape.boundary_count == 14);
    CHECK(t.suites == std::vector<std::string>{"nodal4"});
    CHECK(t.problem->K({0.5, 0.5})(0, 0) == 0.4);
    CHECK(t.problem->K({0.5, 1.5})(0, 0) == 0.3);
    CHECK(fs::path(box_path(t.output, 1)).filename() == "stripes_1.json");
    CHECK_THROWS_AS(parse_train_config(json::parse(R"({"element": {"cells": 4}, "boxes": [[0, 0, 2, 1]]})")),
                    InvalidInput);
}

TEST_CASE("shipped solve configs") {
    const auto files = shipped_solve_configs(DDFEEC_SOURCE_DIR);
    CHECK(files.size() == 9);
    CHECK(std::is_sorted(files.begin(), files.end()));
    for (const auto& f : files) CHECK_NOTHROW(load_solve_config(f));
}

TEST_CASE("conservation study") {
    const StudyReport r = run_study("conservation", source_tree());
    CHECK(r.passed());
    CHECK(r.rows.size() == 3);
    for (const auto& row : r.rows) CHECK(std::abs(row[1]) <= 1e-10);
}

TEST_CASE("study output is deterministic") {
    StudyOptions o = source_tree();
    o.levels = {1, 2};
    const StudyReport a = run_study("example1", o), b = run_study("example1", o);
    CHECK(a.csv() == b.csv());
    CHECK(a.rows.size() == 2);
    CHECK(a.csv().rfind("H,err_p,err_u,err_lambda,iterations\n", 0) == 0);

    const fs::path dir = fs::temp_directory_path() / "ddfeec_study_test";
    fs::remove_all(dir);
    o.out_dir = dir.string();
    run_study("example1", o);
    std::ifstream in(dir / "example1.csv");
    const std::string text((std::istreambuf_iterator<char>(in)), {});
    CHECK(text == a.csv());
    CHECK(fs::exists(dir / "example1.json"));
    fs::remove_all(dir);

    o.out_dir.clear();
    o.levels = {2, 1};
    CHECK_THROWS_AS(run_study("example1", o), InvalidInput);
    CHECK_THROWS_AS(run_study("no_such_study", o), InvalidInput);
}
