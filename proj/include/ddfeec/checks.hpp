#pragma once

#include <Eigen/Sparse>
#include <string>
#include <vector>

#include "ddfeec/mortar.hpp"
#include "json.hpp"

namespace ddfeec {

struct CheckResult {
    std::string name;
    bool pass = false;
    double value = 0.0;
    double threshold = 0.0;
    std::string detail;
};

nlohmann::json to_json(const std::vector<CheckResult>& checks);
bool all_pass(const std::vector<CheckResult>& checks);

// max |delta1 delta0| over all entries.
double exact_sequence_defect(const Eigen::SparseMatrix<int>& delta0, const Eigen::SparseMatrix<int>& delta1);

// Partition of unity, exact sequence for N in [3,8], M1 symmetric PSD, DIV two-path agreement.
std::vector<CheckResult> whitney_checks(unsigned seed = 5);
// Adjoint gradient against central differences, per parameter group, both metric modes.
std::vector<CheckResult> gradient_checks(unsigned seed = 3);
// Affine solution with K = I reproduced by FEM backends on non-matching grids, both flavors.
std::vector<CheckResult> patch_checks();
// Symmetry, positivity and flux/energy agreement of an assembled system.
std::vector<CheckResult> schur_checks(const SchurSystem& system, const std::string& label);
// Degenerate-trace fixture warns, matching discretizations have zero edge jumps.
std::vector<CheckResult> assumption_checks();
// Injected defects must be caught: flipped coboundary sign, asymmetric conductivity.
std::vector<CheckResult> mutation_checks();

}  // namespace ddfeec
