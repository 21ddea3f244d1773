#pragma once

// Cross-group effect estimator: a GCN encoder over the source group, a
// cross-edge mean-pooling aggregation into the target group and an MLP
// outcome head, trained by MSE on observational samples. MC-dropout
// passes provide the uncertainty statistics behind the LCB objective.

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <vector>

#include "caumax/autodiff.hpp"
#include "caumax/graph.hpp"
#include "caumax/scm.hpp"

namespace caumax {

struct EstimatorConfig {
    int gcn_hidden = 64;
    int gcn_layers = 2;
    std::vector<int> mlp_hidden{128, 64};
    double dropout_rate = 0.3;
    double lr = 1e-3;
    double weight_decay = 1e-5;
    int epochs = 200;
    int batch_size = 32;
    int patience = 20;
    int mc_passes = 20;
    double lambda = 0.5;
    // Share dropout masks between the two arms of one MC pass; makes the
    // empty-subset effect exactly zero per pass.
    bool shared_mc_masks = true;
};

struct EffectModel {
    EstimatorConfig cfg;
    std::int64_t d_in = 0;
    std::vector<ad::Tensor> gcn_weights;           // layer l: in_l x hidden
    std::vector<ad::Tensor> mlp_weights;           // includes output layer
    std::vector<ad::Tensor> mlp_biases;
    // output calibration set during training: prediction = y_mean +
    // y_scale * raw head output (identity until trained)
    double y_mean = 0.0;
    double y_scale = 1.0;
    bool frozen = false;

    std::vector<ad::Tensor> parameters() const;
};

EffectModel init_model(const EstimatorConfig& cfg, std::int64_t d_in, std::uint64_t seed);

// Graph operators reused across forward passes.
struct NetworkOperators {
    std::shared_ptr<const ad::SparseMatrix> adj_norm;    // |V_A| x |V_A|
    std::shared_ptr<const ad::SparseMatrix> cross_mean;  // |V_B| x |V_A|
    ad::Tensor features_a;
    ad::Tensor features_b;
};

NetworkOperators build_operators(const TwoGroupNetwork& net);

// Differentiable forward pass; `treatment` is a |V_A| x 1 tensor with
// entries in [0,1] (hard or soft). Returns the 1x1 predicted mean
// target outcome. Dropout is active only when a seed is given.
ad::Tensor forward_tensor(const EffectModel& model, const NetworkOperators& ops,
                          const ad::Tensor& treatment,
                          std::optional<std::uint64_t> dropout_seed);

double forward_mean(const EffectModel& model, const NetworkOperators& ops,
                    const Eigen::VectorXd& treatment,
                    std::optional<std::uint64_t> dropout_seed = {});

struct TrainResult {
    std::vector<double> train_loss;  // per epoch
    std::vector<double> val_loss;    // per epoch
    int best_epoch = 0;              // 1-based
    double best_val = 0.0;
    double baseline_val_mse = 0.0;   // constant train-mean predictor
    int epochs_run = 0;
};

// Minimizes MSE between predicted and observed mean outcomes with Adam;
// holds out 10% of samples for early stopping and restores the best
// validation weights. Freezes the model on return.
TrainResult train(EffectModel& model, const TwoGroupNetwork& net,
                  const std::vector<ObservationalSample>& data, std::uint64_t seed);

struct Co2gStats {
    double mean = 0.0;
    double stddev = 0.0;  // population form (1/M)
    std::vector<double> samples;
};

Co2gStats stats_from_samples(const std::vector<double>& samples);

Co2gStats estimate_co2g(const EffectModel& model, const NetworkOperators& ops,
                        const std::vector<std::int32_t>& subset, int mc_passes,
                        std::uint64_t seed);
Co2gStats estimate_co2g_soft(const EffectModel& model, const NetworkOperators& ops,
                             const Eigen::VectorXd& soft_mask, int mc_passes,
                             std::uint64_t seed);

// Deterministic point estimate with dropout disabled.
double co2g_point_estimate(const EffectModel& model, const NetworkOperators& ops,
                           const std::vector<std::int32_t>& subset);

double lcb_objective(const Co2gStats& stats, double lambda);

// Abstract effect model queried by the selection algorithms; stub
// implementations back the algorithm contract tests.
class Co2gModel {
public:
    virtual ~Co2gModel() = default;
    virtual std::int64_t n_source() const = 0;
    virtual Co2gStats estimate(const std::vector<std::int32_t>& subset, int mc_passes,
                               std::uint64_t seed) const = 0;
    // Same seed for every subset (common random numbers); backends may
    // share work across subsets and fan out over threads.
    virtual std::vector<Co2gStats> estimate_many(
        const std::vector<std::vector<std::int32_t>>& subsets, int mc_passes,
        std::uint64_t seed, int threads) const;
    // J(soft_mask) = mu_hat - lambda * sigma_hat as a differentiable
    // scalar; the control arm enters as a constant.
    virtual ad::Tensor objective_soft(const ad::Tensor& soft_mask, double lambda,
                                      int mc_passes, std::uint64_t seed) const = 0;
};

class EstimatorCo2gModel final : public Co2gModel {
public:
    EstimatorCo2gModel(const EffectModel& model, const TwoGroupNetwork& net)
        : model_(&model), ops_(build_operators(net)) {}

    std::int64_t n_source() const override { return ops_.features_a.rows(); }
    Co2gStats estimate(const std::vector<std::int32_t>& subset, int mc_passes,
                       std::uint64_t seed) const override;
    // evaluates the shared control arm once per pass
    std::vector<Co2gStats> estimate_many(const std::vector<std::vector<std::int32_t>>& subsets,
                                         int mc_passes, std::uint64_t seed,
                                         int threads) const override;
    ad::Tensor objective_soft(const ad::Tensor& soft_mask, double lambda, int mc_passes,
                              std::uint64_t seed) const override;

private:
    const EffectModel* model_;
    NetworkOperators ops_;
};

void save_model(const EffectModel& model, const std::filesystem::path& path,
                const std::string& config_hash);
EffectModel load_model(const std::filesystem::path& path,
                       const std::string& expected_hash = "");

}  // namespace caumax
