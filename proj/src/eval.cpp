#include "caumax/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "caumax/io_util.hpp"
#include "caumax/parallel.hpp"
#include "caumax/rng.hpp"

namespace caumax {

EvalSubsetPool build_pool(std::int64_t n_source, int k_max, int count, std::uint64_t seed) {
    if (count < 1) throw std::invalid_argument("build_pool: count must be >= 1");
    if (k_max < 1 || k_max > n_source)
        throw std::invalid_argument("build_pool: k_max outside [1,|V_A|]");
    EvalSubsetPool pool;
    pool.seed = seed;
    pool.subsets.reserve(count);
    rng::Stream stream(seed, "pool");
    std::vector<std::int32_t> ids(n_source);
    for (int c = 0; c < count; ++c) {
        const int size = 1 + static_cast<int>(stream.below(k_max));
        std::iota(ids.begin(), ids.end(), 0);
        for (int i = 0; i < size; ++i)
            std::swap(ids[i], ids[i + stream.below(n_source - i)]);
        pool.subsets.emplace_back(ids.begin(), ids.begin() + size);
    }
    return pool;
}

double regret_at_k(const TwoGroupNetwork& net, const ScmParams& params,
                   const std::vector<std::int32_t>& selected,
                   const std::vector<std::int32_t>& oracle_subset) {
    return true_co2g(net, params, oracle_subset) - true_co2g(net, params, selected);
}

double rmse_over_pool(const EffectModel& model, const NetworkOperators& ops,
                      const TwoGroupNetwork& net, const ScmParams& params,
                      const EvalSubsetPool& pool, bool use_mc_mean, int mc_passes,
                      std::uint64_t seed) {
    if (pool.subsets.empty()) throw std::invalid_argument("rmse_over_pool: empty pool");
    double acc = 0.0;
    std::size_t index = 0;
    for (const auto& subset : pool.subsets) {
        const double estimate =
            use_mc_mean
                ? estimate_co2g(model, ops, subset, mc_passes,
                                rng::derive(seed, "rmse", {static_cast<std::uint64_t>(index)}))
                      .mean
                : co2g_point_estimate(model, ops, subset);
        const double diff = estimate - true_co2g(net, params, subset);
        acc += diff * diff;
        ++index;
    }
    return std::sqrt(acc / static_cast<double>(pool.subsets.size()));
}

IdentificationResult identification_check(const TwoGroupNetwork& net, const ScmParams& params,
                                          const std::vector<std::int32_t>& subset, int t,
                                          std::int64_t n_obs, std::uint64_t seed) {
    const TreatmentVector target = make_treatment_vector(subset, t, net.n_source());
    const auto samples = sample_observational(net, params, n_obs, rng::derive(seed, "ident_obs"));

    double sum = 0.0, sumsq = 0.0;
    std::int64_t m = 0;
    for (const auto& s : samples) {
        if (s.treatment == target.t) {
            sum += s.y_bar;
            sumsq += s.y_bar * s.y_bar;
            ++m;
        }
    }
    if (m == 0)
        throw std::runtime_error(
            "identification_check: no observational sample matches the target configuration "
            "(positivity violation at this sample size)");

    IdentificationResult res;
    res.matches = m;
    res.adjustment_estimate = sum / static_cast<double>(m);
    res.simulated_truth = true_interventional_mean(net, params, subset, t);
    const double diff = std::abs(res.adjustment_estimate - res.simulated_truth);
    if (m >= 2) {
        const double var =
            std::max(0.0, (sumsq - sum * sum / static_cast<double>(m)) / static_cast<double>(m - 1));
        const double se = std::sqrt(var / static_cast<double>(m));
        res.z_score = se > 0.0 ? diff / se
                               : (diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
    } else {
        res.z_score = diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    }
    return res;
}

std::vector<AggregateRow> aggregate_rows(const std::vector<ReportRow>& rows) {
    // group by (method, dataset, budget, lambda) preserving sorted order
    std::vector<ReportRow> sorted = rows;
    std::sort(sorted.begin(), sorted.end(), [](const ReportRow& a, const ReportRow& b) {
        return std::tie(a.method, a.dataset, a.budget, a.lambda, a.seed) <
               std::tie(b.method, b.dataset, b.budget, b.lambda, b.seed);
    });

    std::vector<AggregateRow> out;
    std::size_t i = 0;
    while (i < sorted.size()) {
        std::size_t j = i;
        while (j < sorted.size() && sorted[j].method == sorted[i].method &&
               sorted[j].dataset == sorted[i].dataset && sorted[j].budget == sorted[i].budget &&
               sorted[j].lambda == sorted[i].lambda)
            ++j;
        AggregateRow agg;
        agg.method = sorted[i].method;
        agg.dataset = sorted[i].dataset;
        agg.budget = sorted[i].budget;
        agg.lambda = sorted[i].lambda;
        agg.n_seeds = static_cast<int>(j - i);
        double r = 0.0, e = 0.0, w = 0.0;
        for (std::size_t k = i; k < j; ++k) {
            r += sorted[k].regret;
            e += sorted[k].rmse;
            w += sorted[k].wall_ms;
        }
        const double n = static_cast<double>(agg.n_seeds);
        agg.regret_mean = r / n;
        agg.rmse_mean = e / n;
        agg.wall_ms_mean = w / n;
        double rv = 0.0, ev = 0.0;
        for (std::size_t k = i; k < j; ++k) {
            rv += (sorted[k].regret - agg.regret_mean) * (sorted[k].regret - agg.regret_mean);
            ev += (sorted[k].rmse - agg.rmse_mean) * (sorted[k].rmse - agg.rmse_mean);
        }
        if (agg.n_seeds > 1) {
            agg.regret_std = std::sqrt(rv / (n - 1.0));
            agg.rmse_std = std::sqrt(ev / (n - 1.0));
        }
        out.push_back(std::move(agg));
        i = j;
    }
    return out;
}

namespace {

std::string join_subset(const std::vector<std::int32_t>& subset) {
    std::ostringstream out;
    for (std::size_t i = 0; i < subset.size(); ++i) {
        if (i) out << ";";
        out << subset[i];
    }
    return out.str();
}

}  // namespace

std::string selections_csv(const std::vector<SelectionResult>& results) {
    std::ostringstream out;
    out << "method,K,lambda,seed,subset,J,wall_ms\n";
    for (const auto& r : results) {
        out << r.method << "," << r.budget << "," << format_double(r.lambda) << "," << r.seed
            << "," << join_subset(r.subset) << ",";
        if (!r.objective_trace.empty()) out << format_double(r.objective_trace.back());
        out << "," << format_double(r.wall_ms) << "\n";
    }
    return out.str();
}

std::string report_csv(const std::vector<ReportRow>& rows) {
    std::ostringstream out;
    out << "method,dataset,K,lambda,seed,regret,rmse,wall_ms\n";
    for (const auto& r : rows)
        out << r.method << "," << r.dataset << "," << r.budget << "," << format_double(r.lambda)
            << "," << r.seed << "," << format_double(r.regret) << "," << format_double(r.rmse)
            << "," << format_double(r.wall_ms) << "\n";
    return out.str();
}

std::string aggregate_csv(const std::vector<AggregateRow>& rows) {
    std::ostringstream out;
    out << "method,dataset,K,lambda,regret_mean,regret_std,rmse_mean,rmse_std,n_seeds,wall_ms_mean\n";
    for (const auto& r : rows)
        out << r.method << "," << r.dataset << "," << r.budget << "," << format_double(r.lambda)
            << "," << format_double(r.regret_mean) << "," << format_double(r.regret_std) << ","
            << format_double(r.rmse_mean) << "," << format_double(r.rmse_std) << "," << r.n_seeds
            << "," << format_double(r.wall_ms_mean) << "\n";
    return out.str();
}

std::string lambda_sweep_csv(const std::vector<AggregateRow>& rows) {
    // grouped-bar layout: one row per (method, K, lambda) regret bar
    std::ostringstream out;
    out << "method,K,lambda,regret_mean,regret_std\n";
    for (const auto& r : rows) {
        if (r.method != "caumax_d" && r.method != "caumax_g") continue;
        out << r.method << "," << r.budget << "," << format_double(r.lambda) << ","
            << format_double(r.regret_mean) << "," << format_double(r.regret_std) << "\n";
    }
    return out.str();
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

}  // namespace

std::vector<SelectionResult> parse_selections_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    do {
        if (!std::getline(in, line)) throw std::runtime_error("selections csv: missing header");
    } while (!line.empty() && line.front() == '#');
    if (line != "method,K,lambda,seed,subset,J,wall_ms")
        throw std::runtime_error("selections csv: unexpected header");
    std::vector<SelectionResult> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != 7) throw std::runtime_error("selections csv: malformed row: " + line);
        SelectionResult r;
        r.method = cells[0];
        r.budget = std::stoi(cells[1]);
        r.lambda = std::stod(cells[2]);
        r.seed = std::stoull(cells[3]);
        if (!cells[4].empty()) {
            std::istringstream ss(cells[4]);
            std::string id;
            while (std::getline(ss, id, ';')) r.subset.push_back(std::stoi(id));
        }
        if (!cells[5].empty()) r.objective_trace.push_back(std::stod(cells[5]));
        r.wall_ms = std::stod(cells[6]);
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<ReportRow> parse_report_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    do {
        if (!std::getline(in, line)) throw std::runtime_error("report csv: missing header");
    } while (!line.empty() && line.front() == '#');
    if (line != "method,dataset,K,lambda,seed,regret,rmse,wall_ms")
        throw std::runtime_error("report csv: unexpected header");
    std::vector<ReportRow> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != 8) throw std::runtime_error("report csv: malformed row: " + line);
        ReportRow r;
        r.method = cells[0];
        r.dataset = cells[1];
        r.budget = std::stoi(cells[2]);
        r.lambda = std::stod(cells[3]);
        r.seed = std::stoull(cells[4]);
        r.regret = std::stod(cells[5]);
        r.rmse = std::stod(cells[6]);
        r.wall_ms = std::stod(cells[7]);
        out.push_back(std::move(r));
    }
    return out;
}

SeedData generate_seed_data(const RunConfig& cfg, std::uint64_t seed) {
    SeedData d;
    RawGraph graph;
    if (cfg.dataset.synthetic()) {
        graph = synthesize_graph(cfg.dataset.n, cfg.dataset.attachment,
                                 rng::derive(seed, "graph"));
    } else {
        std::optional<std::filesystem::path> feat;
        if (!cfg.dataset.features.empty()) feat = cfg.dataset.features;
        graph = load_edge_list(cfg.dataset.edge_list, feat);
    }
    d.net = core_periphery_split(graph, cfg.split_percent);
    if (d.net.features_a.size() == 0)
        synthesize_features(d.net, cfg.dataset.d_in, rng::derive(seed, "features"));

    d.params = draw_scm_params(d.net.d_in(), rng::derive(seed, "scm"), cfg.scm_b_scale,
                               cfg.scm_beta, cfg.scm_alpha, cfg.scm_noise_sigma);
    d.samples = sample_observational(d.net, d.params, cfg.n_samples, rng::derive(seed, "obs"));
    return d;
}

SeedPipeline run_seed_pipeline(const RunConfig& cfg, std::uint64_t seed) {
    SeedPipeline p;
    p.seed = seed;
    SeedData d = generate_seed_data(cfg, seed);
    p.net = std::move(d.net);
    p.params = std::move(d.params);
    p.samples = std::move(d.samples);
    p.model = init_model(cfg.estimator, p.net.d_in(), rng::derive(seed, "init"));
    p.train_info = train(p.model, p.net, p.samples, rng::derive(seed, "train"));
    return p;
}

namespace {

std::vector<std::int32_t> prefix(const std::vector<std::int32_t>& ids, int k) {
    const auto n = std::min<std::size_t>(ids.size(), static_cast<std::size_t>(k));
    return {ids.begin(), ids.begin() + n};
}

SelectionResult prefix_result(const SelectionResult& full, int k, double lambda) {
    SelectionResult r = full;
    r.budget = k;
    r.lambda = lambda;
    r.subset = prefix(full.subset, k);
    if (full.objective_trace.size() > r.subset.size())
        r.objective_trace.assign(full.objective_trace.begin(),
                                 full.objective_trace.begin() + r.subset.size());
    return r;
}

int max_budget_of(const std::vector<int>& budgets) {
    return *std::max_element(budgets.begin(), budgets.end());
}

}  // namespace

std::vector<SelectionResult> select_for_seed(const RunConfig& cfg, const TwoGroupNetwork& net,
                                             const ScmParams& params, const EffectModel* model,
                                             std::uint64_t seed, int inner_threads) {
    const int max_budget = max_budget_of(cfg.budgets);
    if (max_budget > net.n_source())
        throw std::runtime_error("budget " + std::to_string(max_budget) +
                                 " exceeds |V_A| = " + std::to_string(net.n_source()));

    const bool needs_model =
        std::any_of(cfg.methods.begin(), cfg.methods.end(),
                    [](const std::string& m) { return m == "caumax_g" || m == "caumax_d"; });
    std::optional<EstimatorCo2gModel> iface;
    if (needs_model) {
        if (!model) throw std::runtime_error("caumax selectors require a trained model");
        iface.emplace(*model, net);
    }
    const int mc = model ? model->cfg.mc_passes : cfg.estimator.mc_passes;

    std::vector<SelectionResult> out;
    auto emit = [&](SelectionResult sel) {
        sel.seed = seed;
        out.push_back(std::move(sel));
    };

    for (const auto& method : cfg.methods) {
        if (method == "caumax_g") {
            for (std::size_t li = 0; li < cfg.lambdas.size(); ++li) {
                const SelectionResult full =
                    caumax_g(*iface, max_budget, cfg.lambdas[li], mc,
                             rng::derive(seed, "caumax_g", {li}), inner_threads);
                for (int k : cfg.budgets) emit(prefix_result(full, k, cfg.lambdas[li]));
            }
        } else if (method == "caumax_d") {
            for (std::size_t li = 0; li < cfg.lambdas.size(); ++li)
                for (int k : cfg.budgets)
                    emit(caumax_d(*iface, k, cfg.gumbel, cfg.lambdas[li], mc,
                                  rng::derive(seed, "caumax_d",
                                              {li, static_cast<std::uint64_t>(k)})));
        } else if (method == "degree") {
            const SelectionResult full = select_degree(net, max_budget);
            for (std::size_t li = 0; li < cfg.lambdas.size(); ++li)
                for (int k : cfg.budgets) emit(prefix_result(full, k, cfg.lambdas[li]));
        } else if (method == "im") {
            const SelectionResult full = select_im(net, max_budget, cfg.im_simulations,
                                                   cfg.im_propagation, rng::derive(seed, "im"));
            for (std::size_t li = 0; li < cfg.lambdas.size(); ++li)
                for (int k : cfg.budgets) emit(prefix_result(full, k, cfg.lambdas[li]));
        } else if (method == "random") {
            const SelectionResult full =
                select_random(net.n_source(), max_budget, rng::derive(seed, "random"));
            for (std::size_t li = 0; li < cfg.lambdas.size(); ++li)
                for (int k : cfg.budgets) emit(prefix_result(full, k, cfg.lambdas[li]));
        } else if (method == "oracle_greedy") {
            const SelectionResult full = oracle_greedy(net, params, max_budget);
            for (std::size_t li = 0; li < cfg.lambdas.size(); ++li)
                for (int k : cfg.budgets) emit(prefix_result(full, k, cfg.lambdas[li]));
        } else {
            throw std::runtime_error("unknown method \"" + method + "\"");
        }
    }
    return out;
}

std::vector<ReportRow> evaluate_selections(const RunConfig& cfg, const TwoGroupNetwork& net,
                                           const ScmParams& params, const EffectModel& model,
                                           std::uint64_t seed,
                                           const std::vector<SelectionResult>& selections) {
    if (selections.empty()) throw std::runtime_error("no selections to evaluate");
    int max_budget = max_budget_of(cfg.budgets);
    for (const auto& s : selections) max_budget = std::max(max_budget, s.budget);

    const SelectionResult oracle_full = oracle_greedy(net, params, max_budget);
    const NetworkOperators ops = build_operators(net);
    const EvalSubsetPool pool = build_pool(net.n_source(), max_budget_of(cfg.budgets),
                                           cfg.pool_count, rng::derive(seed, "pool"));
    const double rmse = rmse_over_pool(model, ops, net, params, pool);
    const std::string dataset = cfg.dataset.label();

    std::vector<ReportRow> rows;
    rows.reserve(selections.size());
    for (const auto& sel : selections) {
        ReportRow row;
        row.method = sel.method;
        row.dataset = dataset;
        row.budget = sel.budget;
        row.lambda = sel.lambda;
        row.seed = seed;
        row.regret = regret_at_k(net, params, sel.subset, prefix(oracle_full.subset, sel.budget));
        row.rmse = rmse;
        row.wall_ms = sel.wall_ms;
        if (row.regret < -1e-9)
            std::cerr << "warning: negative regret " << row.regret << " for " << sel.method
                      << " K=" << sel.budget << " seed=" << seed
                      << " (method beat the greedy oracle)\n";
        rows.push_back(std::move(row));
    }
    return rows;
}

namespace {

struct SeedEvalOutput {
    std::vector<ReportRow> rows;
    std::vector<SelectionResult> selections;
};

SeedEvalOutput evaluate_seed(const RunConfig& cfg, const SeedPipeline& p, int inner_threads) {
    SeedEvalOutput out;
    out.selections = select_for_seed(cfg, p.net, p.params, &p.model, p.seed, inner_threads);
    out.rows = evaluate_selections(cfg, p.net, p.params, p.model, p.seed, out.selections);
    return out;
}

}  // namespace

ExperimentReport run_experiment(const RunConfig& cfg, int threads,
                                std::vector<SeedPipeline>* pipelines,
                                std::vector<SelectionResult>* selections_out) {
    std::vector<SeedPipeline> local;
    std::vector<SeedPipeline>* pipes;
    if (pipelines && !pipelines->empty()) {
        pipes = pipelines;
    } else {
        local.resize(cfg.seeds.size());
        parallel_for(cfg.seeds.size(), threads,
                     [&](std::size_t i) { local[i] = run_seed_pipeline(cfg, cfg.seeds[i]); });
        if (pipelines) {
            *pipelines = std::move(local);
            pipes = pipelines;
        } else {
            pipes = &local;
        }
    }

    const int outer = std::min<int>(threads, static_cast<int>(cfg.seeds.size()));
    const int inner = std::max(1, threads / std::max(1, outer));
    std::vector<SeedEvalOutput> per_seed(pipes->size());
    parallel_for(pipes->size(), outer,
                 [&](std::size_t i) { per_seed[i] = evaluate_seed(cfg, (*pipes)[i], inner); });

    ExperimentReport report;
    for (auto& s : per_seed) {
        report.rows.insert(report.rows.end(), s.rows.begin(), s.rows.end());
        if (selections_out)
            selections_out->insert(selections_out->end(), s.selections.begin(),
                                   s.selections.end());
    }
    std::sort(report.rows.begin(), report.rows.end(), [](const ReportRow& a, const ReportRow& b) {
        return std::tie(a.method, a.dataset, a.budget, a.lambda, a.seed) <
               std::tie(b.method, b.dataset, b.budget, b.lambda, b.seed);
    });
    if (selections_out) {
        std::sort(selections_out->begin(), selections_out->end(),
                  [](const SelectionResult& a, const SelectionResult& b) {
                      return std::tie(a.method, a.budget, a.lambda, a.seed) <
                             std::tie(b.method, b.budget, b.lambda, b.seed);
                  });
    }
    report.aggregates = aggregate_rows(report.rows);
    return report;
}

}  // namespace caumax
