#pragma once

#include <complex>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "nrinit/mlp.hpp"
#include "nrinit/network.hpp"
#include "nrinit/nr.hpp"
#include "nrinit/rng.hpp"

namespace nrinit {

// Feature layout for an N-bus case with slack bus 1 at 1.0∠0:
//   [P_2..P_N, Q_2..Q_N, G_ij for i <= j (row-major upper triangle),
//    B_ij for i <= j]
// For two buses this is [P2, Q2, G11, G12, G22, B11, B12, B22].
// Model outputs are [V_2..V_N, θ_2..θ_N] (θ in radians).

int feature_count(int n_buses);
Eigen::VectorXd case_features(const GridCase& c);
GridCase case_from_features(const Eigen::VectorXd& features, int n_buses);

enum class Split { train, test };

struct Record {
    Eigen::VectorXd features;
    std::optional<StateVector> label;  // NR solution
    Split split = Split::train;
    bool labeling_failed = false;
};

struct Dataset {
    int n_buses = 2;
    std::vector<Record> records;

    [[nodiscard]] std::vector<const Record*> select(Split split) const;
};

/// Uniform sampling ranges for two-bus systems. Each system draws (R, X);
/// each of its operating states draws a load (P2, Q2).
struct ParamRanges {
    double r_lo = 0.01, r_hi = 0.05;
    double x_lo = 0.05, x_hi = 0.15;
    double p_lo = 0.1, p_hi = 1.0;
    double q_lo = 0.0, q_hi = 0.5;
};

struct DatasetConfig {
    int n_systems = 100;
    int n_states_per_system = 10;
    ParamRanges ranges;
    double test_fraction = 0.1;  // whole systems are held out
    int label_retries = 5;       // basin warm starts tried after a failed flat start
    NrConfig nr;
};

Dataset generate_dataset(const DatasetConfig& config, Rng& rng);

std::string format_dataset_csv(const Dataset& ds);
Dataset parse_dataset_csv(const std::string& text);

enum class Scheme { supervised, unsupervised, semisupervised };

std::string to_string(Scheme s);
Scheme scheme_from_string(const std::string& s);

struct TrainConfig {
    Scheme scheme = Scheme::supervised;
    double learning_rate = 1e-3;
    int epochs = 500;
    int batch_size = 32;
    std::uint64_t seed = 1;
    double semisupervised_mix = 0.5;  // weight on the MSE term
    bool linear_decay = true;         // learning rate falls linearly to 0 over the run
    std::vector<int> hidden = {64, 64};

    void validate() const;
};

/// Loss value and parameter gradient over a batch.
struct LossAndGrad {
    double loss = 0.0;
    Eigen::VectorXd grad;
};

/// Mean over the batch of Σ (V − V̂)² + (θ − θ̂)². Throws on unlabeled records.
LossAndGrad mse_loss(const Mlp& model, const std::vector<const Record*>& batch);

/// Mean over the batch of Σ_i |ΔP_i| + |ΔQ_i| at the predicted state, with
/// the subgradient of |·| taken as 0 at 0.
LossAndGrad physics_loss(const Mlp& model, const std::vector<const Record*>& batch,
                         const std::vector<GridCase>& cases);

struct EpochLog {
    int epoch = 0;
    double objective = 0.0;  // scheme objective on the full training split
    double mse = std::numeric_limits<double>::quiet_NaN();
    double physics = 0.0;
};

struct TrainResult {
    Mlp model;
    std::vector<EpochLog> log;  // entry 0 is the untrained model
};

TrainResult train(const Dataset& ds, const TrainConfig& config);

std::string format_train_log_csv(const std::vector<EpochLog>& log);

StateVector predict(const Mlp& model, const Eigen::VectorXd& features);

struct EvalMetrics {
    int n_samples = 0;
    int n_converged = 0;
    double mean_iterations = 0.0;  // failures count as max_iterations + 1
    int max_iterations = 0;        // over converged samples
    double mae_v = 0.0;
    double mae_theta_deg = 0.0;
    std::complex<double> mean_pf_residual{0.0, 0.0};
    std::vector<int> iterations;
    std::vector<bool> converged;
};

/// NR from the given initial states against the labeled records.
EvalMetrics evaluate_initial_states(const std::vector<const Record*>& records, int n_buses,
                                    const std::vector<StateVector>& initial, const NrConfig& config);

/// Labeled test split, NR initialized at the model's predictions.
EvalMetrics evaluate(const Mlp& model, const Dataset& ds, const NrConfig& config);

/// Baseline: every unknown initialized to zero.
EvalMetrics evaluate_zero_init(const Dataset& ds, const NrConfig& config);

std::string format_metrics_report(const std::vector<std::pair<std::string, EvalMetrics>>& columns);
std::string format_per_sample_csv(const EvalMetrics& m);

}  // namespace nrinit
