#pragma once

// Regret/RMSE evaluation, the empirical identification check and the
// multi-seed experiment driver.

#include <cstdint>
#include <string>
#include <vector>

#include "caumax/config.hpp"
#include "caumax/estimator.hpp"
#include "caumax/graph.hpp"
#include "caumax/scm.hpp"
#include "caumax/selectors.hpp"

namespace caumax {

struct EvalSubsetPool {
    std::vector<std::vector<std::int32_t>> subsets;
    std::uint64_t seed = 0;
};

// `count` subsets with sizes uniform in {1..k_max} and members uniform
// without replacement.
EvalSubsetPool build_pool(std::int64_t n_source, int k_max, int count, std::uint64_t seed);

// true_co2g(S*_k) - true_co2g(S_k); negative values are possible because
// the oracle subset is itself greedy-approximate.
double regret_at_k(const TwoGroupNetwork& net, const ScmParams& params,
                   const std::vector<std::int32_t>& selected,
                   const std::vector<std::int32_t>& oracle_subset);

double rmse_over_pool(const EffectModel& model, const NetworkOperators& ops,
                      const TwoGroupNetwork& net, const ScmParams& params,
                      const EvalSubsetPool& pool, bool use_mc_mean = false,
                      int mc_passes = 20, std::uint64_t seed = 0);

struct IdentificationResult {
    double adjustment_estimate = 0.0;
    double simulated_truth = 0.0;
    double z_score = 0.0;
    std::int64_t matches = 0;
};

// Exact-match adjustment on a tiny instance: the empirical mean of Y_B
// over observational samples whose treatment vector equals T(S,t),
// z-scored against the closed-form interventional mean. Covariates are
// fixed per network, so conditioning on X is vacuous here.
IdentificationResult identification_check(const TwoGroupNetwork& net, const ScmParams& params,
                                          const std::vector<std::int32_t>& subset, int t,
                                          std::int64_t n_obs, std::uint64_t seed);

struct ReportRow {
    std::string method;
    std::string dataset;
    int budget = 0;
    double lambda = 0.0;
    std::uint64_t seed = 0;
    double regret = 0.0;
    double rmse = 0.0;
    double wall_ms = 0.0;
};

struct AggregateRow {
    std::string method;
    std::string dataset;
    int budget = 0;
    double lambda = 0.0;
    double regret_mean = 0.0;
    double regret_std = 0.0;  // sample std over seeds
    double rmse_mean = 0.0;
    double rmse_std = 0.0;
    double wall_ms_mean = 0.0;
    int n_seeds = 0;
};

struct ExperimentReport {
    std::vector<ReportRow> rows;
    std::vector<AggregateRow> aggregates;
};

std::vector<AggregateRow> aggregate_rows(const std::vector<ReportRow>& rows);

// CSV bodies (header row included). wall_ms is the last column so
// byte-comparisons can strip it.
std::string selections_csv(const std::vector<SelectionResult>& results);
std::string report_csv(const std::vector<ReportRow>& rows);
std::string aggregate_csv(const std::vector<AggregateRow>& rows);
std::string lambda_sweep_csv(const std::vector<AggregateRow>& rows);

std::vector<SelectionResult> parse_selections_csv(const std::string& text);
std::vector<ReportRow> parse_report_csv(const std::string& text);

// Graph + SCM products for one seed, shared by the in-memory driver and
// the file-based CLI pipeline.
struct SeedData {
    TwoGroupNetwork net;
    ScmParams params;
    std::vector<ObservationalSample> samples;
};

SeedData generate_seed_data(const RunConfig& cfg, std::uint64_t seed);

// Per-seed pipeline products kept in memory by the experiment driver.
struct SeedPipeline {
    std::uint64_t seed = 0;
    TwoGroupNetwork net;
    ScmParams params;
    std::vector<ObservationalSample> samples;
    EffectModel model;
    TrainResult train_info;
};

SeedPipeline run_seed_pipeline(const RunConfig& cfg, std::uint64_t seed);

// Every enabled method at every budget and lambda; greedy-style methods
// run once at the largest budget and smaller budgets reuse prefixes.
std::vector<SelectionResult> select_for_seed(const RunConfig& cfg, const TwoGroupNetwork& net,
                                             const ScmParams& params, const EffectModel* model,
                                             std::uint64_t seed, int inner_threads = 1);

// Regret against the greedy oracle plus the per-seed estimator RMSE.
std::vector<ReportRow> evaluate_selections(const RunConfig& cfg, const TwoGroupNetwork& net,
                                           const ScmParams& params, const EffectModel& model,
                                           std::uint64_t seed,
                                           const std::vector<SelectionResult>& selections);

// Runs every enabled selector at every budget and lambda for each seed;
// ready-made pipelines can be injected to reuse trained models.
ExperimentReport run_experiment(const RunConfig& cfg, int threads = 1,
                                std::vector<SeedPipeline>* pipelines = nullptr,
                                std::vector<SelectionResult>* selections_out = nullptr);

}  // namespace caumax
