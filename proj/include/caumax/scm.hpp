#pragma once

// Semi-synthetic structural causal model on a two-group network:
// observational sampling with covariate-dependent treatment propensities
// and exact closed-form interventional queries.

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <vector>

#include "caumax/graph.hpp"

namespace caumax {

struct ScmParams {
    Eigen::VectorXd w;    // propensity weights
    Eigen::VectorXd w_y;  // target covariate weights
    Eigen::VectorXd w_x;  // spillover feature weights
    double b_scale = 0.1;      // propensity noise std
    double beta = 1.0;         // treatment spillover
    double alpha = 0.5;        // feature spillover
    double noise_sigma = 0.1;  // outcome noise std
    std::uint64_t seed = 0;
};

// w, w_y and w_x drawn i.i.d. standard normal from the experiment seed.
ScmParams draw_scm_params(std::int64_t d_in, std::uint64_t seed, double b_scale = 0.1,
                          double beta = 1.0, double alpha = 0.5, double noise_sigma = 0.1);

struct TreatmentVector {
    Eigen::VectorXd t;  // length |V_A|, entries in [0,1]
};

struct ObservationalSample {
    Eigen::VectorXd treatment;  // binary
    Eigen::VectorXd outcomes;   // per target node
    double y_bar = 0.0;         // mean outcome over V_B
};

// Entry i = t for i in S, baseline 0 otherwise.
TreatmentVector make_treatment_vector(const std::vector<std::int32_t>& subset, int t,
                                      std::int64_t n_source);

// Noise-free structural part of the outcome equation; accepts fractional
// treatment vectors (needed by the relaxed selector).
Eigen::VectorXd deterministic_outcomes(const TwoGroupNetwork& net, const ScmParams& params,
                                       const Eigen::VectorXd& treatment);

std::vector<ObservationalSample> sample_observational(const TwoGroupNetwork& net,
                                                      const ScmParams& params,
                                                      std::int64_t n_samples,
                                                      std::uint64_t seed);

// Treatment propensities sigmoid(w'X_i + b_i); exposed for diagnostics.
Eigen::VectorXd treatment_propensities(const TwoGroupNetwork& net, const ScmParams& params,
                                       std::uint64_t sample_seed);

// E[Y_B | do(T_S = t), do(T_rest = 0)], exact: zero-mean noise drops out.
double true_interventional_mean(const TwoGroupNetwork& net, const ScmParams& params,
                                const std::vector<std::int32_t>& subset, int t);

double true_co2g(const TwoGroupNetwork& net, const ScmParams& params,
                 const std::vector<std::int32_t>& subset);

// Standard-normal covariates for synthetic runs, deterministic given seed.
void synthesize_features(TwoGroupNetwork& net, std::int64_t d_in, std::uint64_t seed);

struct ScmDataset {
    ScmParams params;
    Eigen::MatrixXd features_a;
    Eigen::MatrixXd features_b;
    std::vector<ObservationalSample> samples;
};

void save_dataset(const ScmDataset& data, const std::filesystem::path& path,
                  const std::string& config_hash);
ScmDataset load_dataset(const std::filesystem::path& path,
                        const std::string& expected_hash = "");

}  // namespace caumax
