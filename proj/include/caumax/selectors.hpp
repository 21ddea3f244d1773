#pragma once

// Subset selection strategies: uncertainty-aware greedy search,
// differentiable Gumbel-Softmax search, and the Random / Degree /
// Influence-Maximization / Oracle-Greedy baselines.

#include <cstdint>
#include <string>
#include <vector>

#include "caumax/estimator.hpp"
#include "caumax/graph.hpp"
#include "caumax/scm.hpp"

namespace caumax {

struct SelectionResult {
    std::vector<std::int32_t> subset;    // selection order, ids within V_A
    std::vector<double> objective_trace;
    std::string method;
    int budget = 0;
    double lambda = 0.0;
    std::uint64_t seed = 0;
    double wall_ms = 0.0;
};

struct GumbelState {
    double temperature = 0.5;
    double budget_penalty = 10.0;  // gamma
    double lr = 0.01;              // eta
    int iterations = 500;          // E_opt
    double tau_anneal = 1.0;       // per-iteration multiplicative factor; 1 = off
};

// Largest-k indices by score, ties broken by smallest id; returned in
// descending-score order.
std::vector<std::int32_t> top_k_indices(const Eigen::VectorXd& scores, int k);

// Greedy search on J(S) = mu_hat - lambda * sigma_hat. Each round shares
// one derived seed across all candidate evaluations (common random
// numbers) and stops early when no candidate improves the objective.
// Candidate evaluations within a round may fan out over `threads`.
SelectionResult caumax_g(const Co2gModel& model, int budget, double lambda, int mc_passes,
                         std::uint64_t seed, int threads = 1);

// Gradient search over per-node logits with the Gumbel-Softmax
// relaxation; discrete subset recovered by top-K projection of the
// logits.
SelectionResult caumax_d(const Co2gModel& model, int budget, const GumbelState& state,
                         double lambda, int mc_passes, std::uint64_t seed);

SelectionResult select_random(std::int64_t n_source, int budget, std::uint64_t seed);

// K highest-degree source nodes; degree counts within-group and
// cross-group edges.
SelectionResult select_degree(const TwoGroupNetwork& net, int budget);

// Greedy independent-cascade seed selection on the full graph. Each
// round samples `simulations` live-edge subgraphs shared by all
// candidates; spread is the mean activated-component size.
SelectionResult select_im(const TwoGroupNetwork& net, int budget, int simulations,
                          double p_ic, std::uint64_t seed);

// Greedy on the closed-form true effect; evaluation-only reference.
SelectionResult oracle_greedy(const TwoGroupNetwork& net, const ScmParams& params, int budget);

}  // namespace caumax
