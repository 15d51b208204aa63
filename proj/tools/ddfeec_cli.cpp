#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "ddfeec/checks.hpp"
#include "ddfeec/config.hpp"
#include "ddfeec/experiments.hpp"
#include "ddfeec/parallel.hpp"

using namespace ddfeec;
namespace fs = std::filesystem;

namespace {

void print_checks(const std::vector<CheckResult>& checks) {
    for (const auto& c : checks)
        std::printf("%-4s %-44s %.3e (limit %.3e) %s\n", c.pass ? "ok" : "FAIL", c.name.c_str(), c.value,
                    c.threshold, c.detail.c_str());
}

int cmd_solve(const std::string& path, const std::string& out) {
    const auto config = load_solve_config(path);
    ElementCache cache;
    const auto system = build_system(config, &cache);
    const auto report = run_solve(*system, config);
    const auto j = report.to_json();
    if (out.empty()) {
        std::cout << j.dump(2) << "\n";
    } else {
        std::ofstream(out) << j.dump(2) << "\n";
        std::printf("%d iterations\n", report.result.iterations);
    }
    for (const auto& w : report.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    return 0;
}

int cmd_train(const std::string& path, int epochs) {
    auto config = load_train_config(path);
    if (epochs > 0) config.options.epochs = epochs;
    const auto trained = run_training(config, true);
    for (const auto& t : trained)
        std::printf("%s: loss %.4e -> %.4e (%zu epochs)\n", t.path.c_str(), t.result.initial_loss,
                    t.result.best_loss, t.result.history.size() - 1);
    return 0;
}

int cmd_study(const std::string& id, const StudyOptions& options) {
    const auto report = run_study(id, options);
    std::cout << report.csv();
    print_checks(report.gates);
    std::printf("%s: %s in %.1f s\n", id.c_str(), report.passed() ? "pass" : "FAIL", report.seconds);
    if (!options.out_dir.empty()) report.write(options.out_dir);
    return report.passed() ? 0 : 1;
}

int cmd_check(const std::string& data_dir, const std::string& out) {
    StudyOptions options;
    options.data_dir = data_dir;
    const auto report = run_study("invariants", options);
    print_checks(report.gates);
    if (!out.empty()) report.write(out);
    std::printf("invariants: %s\n", report.passed() ? "pass" : "FAIL");
    return report.passed() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mortar domain decomposition for Darcy flow with FEM and trainable FEEC subdomains"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "worker threads (default: DDFEEC_THREADS or all cores)");

    std::string config, out;
    auto* solve = app.add_subcommand("solve", "solve one decomposition config, print a JSON report");
    solve->add_option("config", config)->required()->check(CLI::ExistingFile);
    solve->add_option("-o,--out", out, "write the report here instead of stdout");

    int epochs = 0;
    auto* train = app.add_subcommand("train", "train the elements of a training config");
    train->add_option("config", config)->required()->check(CLI::ExistingFile);
    train->add_option("--epochs", epochs, "override the configured epochs");

    std::string id;
    StudyOptions options;
    auto* study = app.add_subcommand("study", "run a study and its acceptance gates");
    study->add_option("id", id)->required()->check(CLI::IsMember(study_ids()));
    study->add_option("--out", options.out_dir, "directory for CSV/JSON artifacts");
    study->add_option("--levels", options.levels, "refinement levels, study specific");
    study->add_option("--seed", options.seed, "training seed override");
    study->add_option("--data", options.data_dir, "directory holding configs/ and elements/");
    study->add_flag("--retrain", options.retrain, "train elements from the shipped configs");
    study->add_option("--epochs", options.epochs, "training epochs when retraining");

    std::string data_dir;
    auto* check = app.add_subcommand("check", "run every invariant suite");
    check->add_option("--data", data_dir, "directory holding configs/ and elements/");
    check->add_option("--out", out, "directory for the JSON report");

    CLI11_PARSE(app, argc, argv);
    if (threads > 0) set_thread_count(threads);

    try {
        if (*solve) return cmd_solve(config, out);
        if (*train) return cmd_train(config, epochs);
        if (*study) return cmd_study(id, options);
        if (*check) return cmd_check(data_dir, out);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
