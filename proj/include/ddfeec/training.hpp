#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ddfeec/feec_core.hpp"
#include "ddfeec/problem.hpp"
#include "ddfeec/whitney.hpp"

namespace ddfeec {

// One boundary value problem of a training suite, in physical coordinates.
struct BoundaryCase {
    std::string name;
    ScalarField g;
    ScalarField f;
};

// Suites: nodal4, bernstein3, bernstein4, homogeneous+forcing. Boundary functions are given in
// the reference coordinates of the box.
std::vector<BoundaryCase> bc_suite(const std::string& name, const Rect& box, const ScalarField& forcing);

struct TrainingDataset {
    Rect box;
    std::string provenance = "reference-solver";
    std::vector<Point> points;  // reference coordinates in [0,1]^2
    std::vector<BoundaryCase> cases;
    Eigen::MatrixXd p, ux, uy;  // samples by cases

    int sample_count() const { return static_cast<int>(points.size()); }
    int case_count() const { return static_cast<int>(cases.size()); }
    void validate() const;
};

struct DatasetConfig {
    Rect box{0, 0, 1, 1};
    TensorField K;
    std::vector<double> breaks_x, breaks_y;
    ScalarField forcing;
    std::vector<std::string> suites{"nodal4"};
    int samples = 20480;
    std::uint64_t seed = 1;
    int reference_cells = 100;
};

TrainingDataset generate_dataset(const DatasetConfig& config);

// Dataset from scattered samples of a single global solution: keeps the samples inside the box
// and uses the nearest sample as boundary data.
TrainingDataset restrict_global_data(const std::vector<Point>& points, const Eigen::VectorXd& p,
                                     const Eigen::MatrixX2d& u, const Rect& box, ScalarField forcing);

struct LossConfig {
    double alpha = 1.0;
    double flux_floor = 1e-3;
};

struct LossResult {
    double loss = 0.0;
    Eigen::VectorXd loss_p, loss_u;  // per case, before weighting by alpha^2
    Eigen::MatrixXd coefficients;    // POU coefficients by cases
};

// Flat parameter vector: knot_x, knot_y, combo (row major), log_d0, log_d1, log_b0, log_b1.
struct ParamLayout {
    int knot_x = 0, knot_y = 0, combo = 0, log_d0 = 0, log_d1 = 0, log_b0 = 0, log_b1 = 0, size = 0;
    explicit ParamLayout(const FeecElement& e);
};

Eigen::VectorXd pack_params(const FeecElement& e);
void unpack_params(const Eigen::VectorXd& v, FeecElement& e);

// Loss of an element against a dataset with the knot-independent data rules precomputed.
class LossModel {
public:
    LossModel(std::shared_ptr<const TrainingDataset> data, LossConfig config, int data_cells,
              int data_points = 4, int quad_points = 0);

    LossResult forward(const FeecElement& e) const;
    // Returns the loss; grad follows the ParamLayout packing.
    double gradient(const FeecElement& e, Eigen::VectorXd& grad, LossResult* out = nullptr) const;

    const TrainingDataset& data() const { return *data_; }

private:
    double run(const FeecElement& e, LossResult* out, Eigen::VectorXd* grad) const;

    std::shared_ptr<const TrainingDataset> data_;
    LossConfig cfg_;
    int data_points_, quad_points_;
    feec::PointSet data_set_, samples_;
    std::array<feec::PointSet, 4> bdata_;
    Eigen::MatrixXd F_;                  // forcing at data points by cases
    std::array<Eigen::MatrixXd, 4> G_;   // boundary data per side by cases
    Eigen::VectorXd np_, nu_;
};

LossResult forward_loss(const FeecElement& e, const TrainingDataset& data, const LossConfig& cfg);
Eigen::VectorXd loss_gradient(const FeecElement& e, const TrainingDataset& data, const LossConfig& cfg);

struct TrainOptions {
    int epochs = 100;
    double learning_rate = 1e-2;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    int checkpoint_every = 50;
    double guard_H = 0.0;  // mortar size for the unisolvency guard, 0 disables
    int max_retries = 8;
};

struct EpochRecord {
    int epoch = 0;
    double loss = 0.0, loss_p = 0.0, loss_u = 0.0, learning_rate = 0.0;
    double sigma = -1.0;  // unisolvency guard, -1 when not evaluated
};

struct TrainResult {
    FeecElement element;  // best-loss parameters
    double best_loss = 0.0;
    double initial_loss = 0.0;
    std::vector<EpochRecord> history;
    bool halted = false;
    std::string message;
};

TrainResult train(const FeecElement& initial, const LossModel& model, const TrainOptions& options);
void write_history_csv(const std::vector<EpochRecord>& history, const std::string& path);

// Smallest singular value of the L2 projection from a mortar of spacing H onto the element trace.
double trace_unisolvency(const FeecElement& e, double H);

}  // namespace ddfeec
