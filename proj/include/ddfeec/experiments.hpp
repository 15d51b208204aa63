#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ddfeec/checks.hpp"
#include "json.hpp"

namespace ddfeec {

struct StudyOptions {
    std::string out_dir;          // empty: nothing is written
    std::vector<double> levels;   // study specific; empty selects the default list
    std::uint64_t seed = 0;       // 0 keeps the seeds of the shipped training configs
    std::string data_dir;         // holds configs/ and elements/; empty uses the source tree
    bool retrain = false;         // train from the shipped configs instead of loading elements
    int epochs = 0;               // overrides the training epochs when positive
};

struct StudyReport {
    std::string id;
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
    std::map<std::string, std::string> files;  // extra CSV outputs by file name
    std::vector<CheckResult> gates;
    nlohmann::json extra = nlohmann::json::object();
    double seconds = 0.0;

    bool passed() const;
    std::string csv() const;
    nlohmann::json to_json() const;
    // Writes <id>.csv, <id>.json and the extra files.
    void write(const std::string& dir) const;
};

std::vector<std::string> study_ids();
StudyReport run_study(const std::string& id, const StudyOptions& options);

std::string default_data_dir();
// Least-squares slope of log(err) against log(h).
double fitted_rate(const std::vector<double>& h, const std::vector<double>& err);
// Shipped solve configs (configs/*.json with a "domain" entry).
std::vector<std::string> shipped_solve_configs(const std::string& data_dir);

}  // namespace ddfeec
