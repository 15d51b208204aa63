// Acceptance run: one PASS/FAIL line per criterion. Exit status 0 iff every selected criterion passes.
#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <functional>
#include <set>

#include "ddfeec/checks.hpp"
#include "ddfeec/config.hpp"
#include "ddfeec/experiments.hpp"

using namespace ddfeec;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    std::vector<CheckResult> gates;
};

std::string first_failure(const std::vector<CheckResult>& gates) {
    for (const auto& g : gates)
        if (!g.pass) {
            char buf[256];
            std::snprintf(buf, sizeof buf, "%s: %.3e vs %.3e %s", g.name.c_str(), g.value, g.threshold,
                          g.detail.c_str());
            return buf;
        }
    return {};
}


}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance criteria"};
    std::vector<int> selected;
    std::string out_dir;
    std::string data_dir = DDFEEC_SOURCE_DIR;
    app.add_option("criteria", selected, "criteria to run (default: all)")->check(CLI::Range(1, 10));
    app.add_option("--out", out_dir, "write study reports here");
    app.add_option("--data", data_dir, "directory holding configs/ and elements/");
    CLI11_PARSE(app, argc, argv);
    std::set<int> want(selected.begin(), selected.end());

    StudyOptions base;
    base.data_dir = data_dir;
    base.out_dir = out_dir;
    auto study = [&](const std::string& id, StudyOptions o) {
        return Outcome{run_study(id, o).gates};
    };

    std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"Example 1 table and rates", [&] { return study("example1", base); }},
        {"Example 2 FEM table and rates", [&] { return study("sine_fem", base); }},
        {"Example 2 trained element, 8x8",
         [&] {
             StudyOptions o = base;
             o.retrain = true;
             return study("sine_feec", o);
         }},
        {"Neumann conservation", [&] { return study("conservation", base); }},
        {"Schur symmetry and coercivity on shipped configs",
         [&] {
             Outcome o;
             ElementCache cache;
             const auto files = shipped_solve_configs(data_dir);
             for (const auto& f : files) {
                 const SolveConfig c = load_solve_config(f);
                 auto sys = build_system(c, &cache);
                 for (auto& g : schur_checks(*sys, fs::path(f).filename().string())) o.gates.push_back(g);
             }
             if (files.empty()) o.gates.push_back({"shipped configs found", false, 0, 1, data_dir});
             return o;
         }},
        {"Whitney structure", [&] { return Outcome{whitney_checks()}; }},
        {"adjoint gradients", [&] { return Outcome{gradient_checks()}; }},
        {"affine patch test", [&] { return Outcome{patch_checks()}; }},
        {"stripes with pretraining",
         [&] {
             StudyOptions o = base;
             o.retrain = true;
             return study("stripes", o);
         }},
        {"unisolvency and jump diagnostics", [&] { return Outcome{assumption_checks()}; }},
    };

    int failed = 0;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        const int id = static_cast<int>(k) + 1;
        if (!want.empty() && !want.count(id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        std::string error;
        try {
            o = criteria[k].second();
        } catch (const std::exception& e) {
            error = e.what();
        }
        const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool pass = error.empty() && !o.gates.empty() && all_pass(o.gates);
        failed += !pass;
        std::printf("%s %2d %s (%zu gates, %.1f s)", pass ? "PASS" : "FAIL", id, criteria[k].first.c_str(),
                    o.gates.size(), sec);
        if (!error.empty()) std::printf(" error: %s", error.c_str());
        else if (!pass) std::printf(" first failure: %s", first_failure(o.gates).c_str());
        std::printf("\n");
        std::fflush(stdout);
    }
    return failed ? 1 : 0;
}
