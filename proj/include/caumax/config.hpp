#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "caumax/estimator.hpp"
#include "caumax/selectors.hpp"

namespace caumax {

struct DatasetSpec {
    // synthetic preferential-attachment graph unless an edge list is given
    std::int64_t n = 1000;
    int attachment = 3;
    std::string edge_list;  // path; empty = synthetic
    std::string features;   // optional covariate csv for file datasets
    int d_in = 8;           // synthesized covariate dimension when absent

    bool synthetic() const { return edge_list.empty(); }
    std::string label() const;
};

struct RunConfig {
    DatasetSpec dataset;
    double split_percent = 15.0;

    double scm_beta = 1.0;
    double scm_alpha = 0.5;
    double scm_noise_sigma = 0.1;
    double scm_b_scale = 0.1;
    std::int64_t n_samples = 2000;

    EstimatorConfig estimator;
    GumbelState gumbel;
    int im_simulations = 100;
    double im_propagation = 0.1;

    std::vector<std::string> methods{"caumax_d", "caumax_g", "degree", "im", "random"};
    std::vector<int> budgets{5, 10, 15, 20, 30, 50};
    std::vector<double> lambdas{0.5};
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    int pool_count = 200;
    std::string out_dir = "out";
};

RunConfig load_config(const std::filesystem::path& path);
RunConfig parse_config(const std::string& json_text);
std::string config_to_json(const RunConfig& cfg);

// Hash over the data-generation and training determinants (dataset,
// split, SCM, estimator, seeds); selector settings do not invalidate
// generated artifacts.
std::string config_hash(const RunConfig& cfg);

// Output layout rooted at cfg.out_dir.
struct ArtifactStore {
    explicit ArtifactStore(std::filesystem::path root);
    std::filesystem::path split_path(std::uint64_t seed) const;
    std::filesystem::path data_path(std::uint64_t seed) const;
    std::filesystem::path model_path(std::uint64_t seed) const;
    std::filesystem::path trace_path(std::uint64_t seed) const;
    std::filesystem::path selections_path() const;
    std::filesystem::path report_path() const;
    std::filesystem::path aggregate_path() const;
    std::filesystem::path lambda_sweep_path() const;
    std::filesystem::path root;
};

}  // namespace caumax
