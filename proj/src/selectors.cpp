#include "caumax/selectors.hpp"

#include <algorithm>
#include <chrono>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "caumax/parallel.hpp"
#include "caumax/rng.hpp"

namespace caumax {

namespace {

class WallTimer {
public:
    double ms() const {
        return std::chrono::duration<double, std::milli>(
                   std::chrono::steady_clock::now() - start_)
            .count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace

std::vector<std::int32_t> top_k_indices(const Eigen::VectorXd& scores, int k) {
    if (k < 0 || k > scores.size())
        throw std::invalid_argument("top_k_indices: k=" + std::to_string(k) + " outside [0," +
                                    std::to_string(scores.size()) + "]");
    std::vector<std::int32_t> idx(scores.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::int32_t a, std::int32_t b) {
        if (scores(a) != scores(b)) return scores(a) > scores(b);
        return a < b;
    });
    idx.resize(k);
    return idx;
}

SelectionResult caumax_g(const Co2gModel& model, int budget, double lambda, int mc_passes,
                         std::uint64_t seed, int threads) {
    const auto n = model.n_source();
    if (budget < 0 || budget > n)
        throw std::invalid_argument("caumax_g: budget outside [0,|V_A|]");
    WallTimer timer;

    SelectionResult res;
    res.method = "caumax_g";
    res.budget = budget;
    res.lambda = lambda;
    res.seed = seed;

    std::vector<std::int32_t> current;
    std::vector<bool> in_set(n, false);
    double j_current =
        lcb_objective(model.estimate(current, mc_passes, rng::derive(seed, "round", {0})), lambda);

    for (int k = 1; k <= budget; ++k) {
        const std::uint64_t round_seed = rng::derive(seed, "round", {static_cast<std::uint64_t>(k)});
        std::vector<std::int32_t> candidates;
        candidates.reserve(n - current.size());
        for (std::int32_t v = 0; v < n; ++v)
            if (!in_set[v]) candidates.push_back(v);

        std::vector<double> j_candidate(candidates.size());
        parallel_for(candidates.size(), threads, [&](std::size_t c) {
            std::vector<std::int32_t> trial = current;
            trial.push_back(candidates[c]);
            j_candidate[c] = lcb_objective(model.estimate(trial, mc_passes, round_seed), lambda);
        });

        double best_gain = -std::numeric_limits<double>::infinity();
        std::int32_t best = -1;
        double best_j = 0.0;
        for (std::size_t c = 0; c < candidates.size(); ++c) {
            const double gain = j_candidate[c] - j_current;
            if (gain > best_gain) {  // candidates ascend by id, so ties keep the smallest
                best_gain = gain;
                best = candidates[c];
                best_j = j_candidate[c];
            }
        }
        if (best_gain <= 0.0) break;
        current.push_back(best);
        in_set[best] = true;
        j_current = best_j;
        res.objective_trace.push_back(j_current);
    }

    res.subset = std::move(current);
    res.wall_ms = timer.ms();
    return res;
}

SelectionResult caumax_d(const Co2gModel& model, int budget, const GumbelState& state,
                         double lambda, int mc_passes, std::uint64_t seed) {
    const auto n = model.n_source();
    if (budget < 0 || budget > n)
        throw std::invalid_argument("caumax_d: budget outside [0,|V_A|]");
    if (state.temperature <= 0.0) throw std::invalid_argument("caumax_d: temperature must be > 0");
    WallTimer timer;

    SelectionResult res;
    res.method = "caumax_d";
    res.budget = budget;
    res.lambda = lambda;
    res.seed = seed;

    ad::Matrix psi0(n, 1);
    {
        rng::Stream stream(seed, "psi_init");
        for (std::int64_t i = 0; i < n; ++i) psi0(i, 0) = stream.normal(0.0, 0.1);
    }
    ad::Tensor psi = ad::Tensor::leaf(std::move(psi0));

    double tau = state.temperature;
    for (int e = 1; e <= state.iterations; ++e) {
        rng::Stream gumbel(seed, "gumbel", {static_cast<std::uint64_t>(e)});
        ad::Matrix g(n, 1);
        for (std::int64_t i = 0; i < n; ++i) g(i, 0) = gumbel.gumbel();

        ad::Tensor soft =
            ad::sigmoid(ad::scale(ad::add(psi, ad::Tensor::constant(g)), 1.0 / tau));
        ad::Tensor j = model.objective_soft(
            soft, lambda, mc_passes, rng::derive(seed, "iter", {static_cast<std::uint64_t>(e)}));
        ad::Tensor penalty = ad::square(
            ad::add_scalar(ad::l1_norm(soft), -static_cast<double>(budget)));
        ad::Tensor loss = ad::add(ad::scale(j, -1.0), ad::scale(penalty, state.budget_penalty));

        ad::backward(loss);
        psi.mutable_value() -= state.lr * psi.grad();
        psi.zero_grad();
        res.objective_trace.push_back(j.value()(0, 0));
        if (state.tau_anneal != 1.0) tau = std::max(1e-3, tau * state.tau_anneal);
    }

    res.subset = top_k_indices(psi.value().col(0), budget);
    res.wall_ms = timer.ms();
    return res;
}

SelectionResult select_random(std::int64_t n_source, int budget, std::uint64_t seed) {
    if (budget < 0 || budget > n_source)
        throw std::invalid_argument("select_random: budget outside [0,|V_A|]");
    WallTimer timer;
    std::vector<std::int32_t> ids(n_source);
    std::iota(ids.begin(), ids.end(), 0);
    rng::Stream stream(seed, "random_select");
    for (int i = 0; i < budget; ++i)
        std::swap(ids[i], ids[i + stream.below(n_source - i)]);
    ids.resize(budget);

    SelectionResult res;
    res.method = "random";
    res.budget = budget;
    res.seed = seed;
    res.subset = std::move(ids);
    res.wall_ms = timer.ms();
    return res;
}

SelectionResult select_degree(const TwoGroupNetwork& net, int budget) {
    WallTimer timer;
    const auto deg = net.source_total_degrees();
    Eigen::VectorXd scores(net.n_source());
    for (std::int64_t i = 0; i < net.n_source(); ++i) scores(i) = deg[i];

    SelectionResult res;
    res.method = "degree";
    res.budget = budget;
    res.subset = top_k_indices(scores, std::min<int>(budget, net.n_source()));
    res.wall_ms = timer.ms();
    return res;
}

SelectionResult select_im(const TwoGroupNetwork& net, int budget, int simulations, double p_ic,
                          std::uint64_t seed) {
    if (simulations < 1) throw std::invalid_argument("select_im: simulations must be >= 1");
    if (p_ic <= 0.0 || p_ic > 1.0) throw std::invalid_argument("select_im: p_ic must be in (0,1]");
    WallTimer timer;

    const auto na = net.n_source();
    const auto nb = net.n_target();
    const std::int64_t n = na + nb;
    std::vector<Edge> all_edges = net.edges_a;
    for (const auto& [u, v] : net.edges_b)
        all_edges.emplace_back(static_cast<std::int32_t>(u + na),
                               static_cast<std::int32_t>(v + na));
    for (const auto& e : net.edges_ab)
        all_edges.emplace_back(e.source, static_cast<std::int32_t>(e.target + na));

    SelectionResult res;
    res.method = "im";
    res.budget = budget;
    res.seed = seed;

    const int k_max = std::min<int>(budget, na);
    std::vector<std::int32_t> current;
    std::vector<bool> in_set(na, false);

    // Union-find over the live-edge subgraph; undirected cascades with
    // probability p per edge activate exactly the seed components.
    std::vector<std::int32_t> parent(n);
    std::function<std::int32_t(std::int32_t)> find = [&](std::int32_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };

    for (int round = 1; round <= k_max; ++round) {
        // one live-edge world per simulation, shared across candidates
        std::vector<double> cand_spread(na, 0.0);
        double base_spread = 0.0;
        for (int s = 0; s < simulations; ++s) {
            rng::Stream stream(seed, "im_world",
                               {static_cast<std::uint64_t>(round), static_cast<std::uint64_t>(s)});
            std::iota(parent.begin(), parent.end(), 0);
            for (const auto& [u, v] : all_edges)
                if (stream.bernoulli(p_ic)) {
                    const auto ru = find(u), rv = find(v);
                    if (ru != rv) parent[ru] = rv;
                }
            std::vector<std::int64_t> comp_size(n, 0);
            for (std::int32_t x = 0; x < n; ++x) ++comp_size[find(x)];

            std::vector<bool> covered(n, false);
            std::int64_t covered_size = 0;
            for (auto v : current) {
                const auto r = find(v);
                if (!covered[r]) {
                    covered[r] = true;
                    covered_size += comp_size[r];
                }
            }
            base_spread += static_cast<double>(covered_size);
            for (std::int32_t v = 0; v < na; ++v) {
                if (in_set[v]) continue;
                const auto r = find(v);
                cand_spread[v] += static_cast<double>(covered_size +
                                                      (covered[r] ? 0 : comp_size[r]));
            }
        }

        double best_spread = -1.0;
        std::int32_t best = -1;
        for (std::int32_t v = 0; v < na; ++v) {
            if (in_set[v]) continue;
            if (cand_spread[v] > best_spread) {
                best_spread = cand_spread[v];
                best = v;
            }
        }
        current.push_back(best);
        in_set[best] = true;
        res.objective_trace.push_back(best_spread / static_cast<double>(simulations));
        (void)base_spread;
    }

    res.subset = std::move(current);
    res.wall_ms = timer.ms();
    return res;
}

SelectionResult oracle_greedy(const TwoGroupNetwork& net, const ScmParams& params, int budget) {
    WallTimer timer;
    const auto na = net.n_source();
    const int k_max = std::min<int>(budget, na);

    SelectionResult res;
    res.method = "oracle_greedy";
    res.budget = budget;

    std::vector<std::int32_t> current;
    std::vector<bool> in_set(na, false);
    for (int k = 1; k <= k_max; ++k) {
        double best_value = -std::numeric_limits<double>::infinity();
        std::int32_t best = -1;
        for (std::int32_t v = 0; v < na; ++v) {
            if (in_set[v]) continue;
            std::vector<std::int32_t> trial = current;
            trial.push_back(v);
            const double value = true_co2g(net, params, trial);
            if (value > best_value) {
                best_value = value;
                best = v;
            }
        }
        current.push_back(best);
        in_set[best] = true;
        res.objective_trace.push_back(best_value);
    }

    res.subset = std::move(current);
    res.wall_ms = timer.ms();
    return res;
}

}  // namespace caumax
