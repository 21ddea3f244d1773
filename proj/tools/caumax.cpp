// caumax: cross-group causal influence maximization pipeline.
//
// Subcommands: gen, train, select, evaluate, report, selftest. Every
// artifact embeds the config hash of the generation-relevant settings;
// mixing artifacts from different hashes is rejected. Exit codes:
// 0 success, 1 internal error, 2 user/config error.

#include <CLI11.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "caumax/config.hpp"
#include "caumax/eval.hpp"
#include "caumax/io_util.hpp"
#include "caumax/parallel.hpp"
#include "caumax/rng.hpp"

namespace {

using namespace caumax;

struct CliOverrides {
    std::string config_path;
    std::string out_dir;
    std::vector<std::uint64_t> seeds;
    std::vector<std::string> methods;
    std::vector<int> budgets;
    std::vector<double> lambdas;
};

RunConfig effective_config(const CliOverrides& ov) {
    RunConfig cfg = ov.config_path.empty() ? RunConfig{} : load_config(ov.config_path);
    if (!ov.out_dir.empty()) cfg.out_dir = ov.out_dir;
    if (!ov.seeds.empty()) cfg.seeds = ov.seeds;
    if (!ov.methods.empty()) cfg.methods = ov.methods;
    if (!ov.budgets.empty()) cfg.budgets = ov.budgets;
    if (!ov.lambdas.empty()) cfg.lambdas = ov.lambdas;
    return cfg;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void check_csv_hash(const std::string& text, const std::string& expected,
                    const std::filesystem::path& path) {
    const std::string prefix = "# config_hash ";
    if (text.rfind(prefix, 0) != 0)
        throw std::runtime_error(path.string() + ": missing config_hash line");
    const auto eol = text.find('\n');
    const std::string hash = text.substr(prefix.size(), eol - prefix.size());
    if (hash != expected)
        throw std::runtime_error(path.string() + ": config hash mismatch (" + hash +
                                 " vs expected " + expected + ")");
}

TwoGroupNetwork load_seed_network(const ArtifactStore& store, const ScmDataset& data,
                                  std::uint64_t seed, const std::string& hash) {
    TwoGroupNetwork net = load_split(store.split_path(seed), hash);
    net.features_a = data.features_a;
    net.features_b = data.features_b;
    return net;
}

int cmd_gen(const RunConfig& cfg) {
    const ArtifactStore store{cfg.out_dir};
    const std::string hash = config_hash(cfg);
    std::vector<SeedData> all(cfg.seeds.size());
    parallel_for(cfg.seeds.size(), thread_budget(),
                 [&](std::size_t i) { all[i] = generate_seed_data(cfg, cfg.seeds[i]); });
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
        const auto seed = cfg.seeds[i];
        const SeedData& d = all[i];
        save_split(d.net, store.split_path(seed), hash);
        ScmDataset ds{d.params, d.net.features_a, d.net.features_b, d.samples};
        save_dataset(ds, store.data_path(seed), hash);
        std::cout << "seed " << seed << ": |V_A|=" << d.net.n_source()
                  << " |V_B|=" << d.net.n_target() << " |E_AB|=" << d.net.edges_ab.size()
                  << " samples=" << d.samples.size() << "\n";
    }
    return 0;
}

int cmd_train(const RunConfig& cfg) {
    const ArtifactStore store{cfg.out_dir};
    const std::string hash = config_hash(cfg);
    struct Out {
        EffectModel model;
        TrainResult info;
    };
    std::vector<Out> outs(cfg.seeds.size());
    parallel_for(cfg.seeds.size(), thread_budget(), [&](std::size_t i) {
        const auto seed = cfg.seeds[i];
        const ScmDataset data = load_dataset(store.data_path(seed), hash);
        const TwoGroupNetwork net = load_seed_network(store, data, seed, hash);
        outs[i].model = init_model(cfg.estimator, net.d_in(), rng::derive(seed, "init"));
        outs[i].info = train(outs[i].model, net, data.samples, rng::derive(seed, "train"));
    });
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
        const auto seed = cfg.seeds[i];
        save_model(outs[i].model, store.model_path(seed), hash);
        std::ostringstream trace;
        trace << "# config_hash " << hash << "\n";
        trace << "epoch,train_mse,val_mse\n";
        for (std::size_t e = 0; e < outs[i].info.train_loss.size(); ++e)
            trace << (e + 1) << "," << format_double(outs[i].info.train_loss[e]) << ","
                  << format_double(outs[i].info.val_loss[e]) << "\n";
        atomic_write(store.trace_path(seed), trace.str());
        std::cout << "seed " << seed << ": epochs=" << outs[i].info.epochs_run
                  << " best_epoch=" << outs[i].info.best_epoch
                  << " val_mse=" << format_double(outs[i].info.best_val)
                  << " baseline_mse=" << format_double(outs[i].info.baseline_val_mse) << "\n";
    }
    return 0;
}

int cmd_select(const RunConfig& cfg) {
    const ArtifactStore store{cfg.out_dir};
    const std::string hash = config_hash(cfg);
    const bool needs_model =
        std::any_of(cfg.methods.begin(), cfg.methods.end(),
                    [](const std::string& m) { return m == "caumax_g" || m == "caumax_d"; });

    const int outer = std::min<int>(thread_budget(), static_cast<int>(cfg.seeds.size()));
    const int inner = std::max(1, thread_budget() / std::max(1, outer));
    std::vector<std::vector<SelectionResult>> per_seed(cfg.seeds.size());
    parallel_for(cfg.seeds.size(), outer, [&](std::size_t i) {
        const auto seed = cfg.seeds[i];
        const ScmDataset data = load_dataset(store.data_path(seed), hash);
        const TwoGroupNetwork net = load_seed_network(store, data, seed, hash);
        EffectModel model;
        if (needs_model) model = load_model(store.model_path(seed), hash);
        per_seed[i] = select_for_seed(cfg, net, data.params, needs_model ? &model : nullptr,
                                      seed, inner);
    });

    std::vector<SelectionResult> all;
    for (auto& v : per_seed) all.insert(all.end(), v.begin(), v.end());
    std::sort(all.begin(), all.end(), [](const SelectionResult& a, const SelectionResult& b) {
        return std::tie(a.method, a.budget, a.lambda, a.seed) <
               std::tie(b.method, b.budget, b.lambda, b.seed);
    });
    atomic_write(store.selections_path(), "# config_hash " + hash + "\n" + selections_csv(all));
    std::cout << "wrote " << all.size() << " selection rows to "
              << store.selections_path().string() << "\n";
    return 0;
}

int cmd_evaluate(const RunConfig& cfg) {
    const ArtifactStore store{cfg.out_dir};
    const std::string hash = config_hash(cfg);
    const std::string text = read_file(store.selections_path());
    check_csv_hash(text, hash, store.selections_path());
    const auto selections = parse_selections_csv(text);
    if (selections.empty()) throw std::runtime_error("no selections to evaluate");

    std::vector<std::vector<SelectionResult>> by_seed(cfg.seeds.size());
    for (const auto& sel : selections) {
        const auto it = std::find(cfg.seeds.begin(), cfg.seeds.end(), sel.seed);
        if (it == cfg.seeds.end())
            throw std::runtime_error("selection row for seed " + std::to_string(sel.seed) +
                                     " not in config seeds");
        by_seed[it - cfg.seeds.begin()].push_back(sel);
    }

    std::vector<std::vector<ReportRow>> per_seed(cfg.seeds.size());
    parallel_for(cfg.seeds.size(), thread_budget(), [&](std::size_t i) {
        if (by_seed[i].empty()) return;
        const auto seed = cfg.seeds[i];
        const ScmDataset data = load_dataset(store.data_path(seed), hash);
        const TwoGroupNetwork net = load_seed_network(store, data, seed, hash);
        const EffectModel model = load_model(store.model_path(seed), hash);
        per_seed[i] = evaluate_selections(cfg, net, data.params, model, seed, by_seed[i]);
    });

    std::vector<ReportRow> rows;
    for (auto& v : per_seed) rows.insert(rows.end(), v.begin(), v.end());
    std::sort(rows.begin(), rows.end(), [](const ReportRow& a, const ReportRow& b) {
        return std::tie(a.method, a.dataset, a.budget, a.lambda, a.seed) <
               std::tie(b.method, b.dataset, b.budget, b.lambda, b.seed);
    });
    atomic_write(store.report_path(), "# config_hash " + hash + "\n" + report_csv(rows));
    std::cout << "wrote " << rows.size() << " report rows to " << store.report_path().string()
              << "\n";
    return 0;
}

int cmd_report(const RunConfig& cfg) {
    const ArtifactStore store{cfg.out_dir};
    const std::string hash = config_hash(cfg);
    const std::string text = read_file(store.report_path());
    check_csv_hash(text, hash, store.report_path());
    const auto rows = parse_report_csv(text);
    if (rows.empty()) throw std::runtime_error("report.csv has no rows");

    const auto aggregates = aggregate_rows(rows);
    atomic_write(store.aggregate_path(), "# config_hash " + hash + "\n" + aggregate_csv(aggregates));
    atomic_write(store.lambda_sweep_path(),
                 "# config_hash " + hash + "\n" + lambda_sweep_csv(aggregates));
    std::cout << "wrote " << aggregates.size() << " aggregate rows to "
              << store.aggregate_path().string() << "\n";
    for (const auto& a : aggregates)
        std::cout << a.method << " K=" << a.budget << " lambda=" << a.lambda
                  << " regret=" << format_double(a.regret_mean) << "\n";
    return 0;
}

// --- selftest -------------------------------------------------------------

std::vector<std::int32_t> brute_force_coreness(const RawGraph& g) {
    // repeatedly delete nodes of degree < k until stable, for each k
    std::vector<std::int32_t> core(g.node_count, 0);
    for (std::int32_t k = 1;; ++k) {
        std::vector<bool> alive(g.node_count, true);
        bool changed = true;
        while (changed) {
            changed = false;
            std::vector<std::int32_t> deg(g.node_count, 0);
            for (const auto& [u, v] : g.edges)
                if (alive[u] && alive[v]) {
                    ++deg[u];
                    ++deg[v];
                }
            for (std::int32_t v = 0; v < g.node_count; ++v)
                if (alive[v] && deg[v] < k) {
                    alive[v] = false;
                    changed = true;
                }
        }
        bool any = false;
        for (std::int32_t v = 0; v < g.node_count; ++v)
            if (alive[v]) {
                core[v] = k;
                any = true;
            }
        if (!any) break;
    }
    return core;
}

TwoGroupNetwork tiny_two_source_net() {
    // V_A = {a0, a1}, V_B = {b0}; both cross edges, unit weights
    TwoGroupNetwork net;
    net.source_orig_ids = {0, 1};
    net.target_orig_ids = {2};
    net.edges_ab = {{0, 0, 1.0}, {1, 0, 1.0}};
    net.cross_degree = {2};
    net.features_a = Eigen::MatrixXd::Zero(2, 1);
    net.features_b = Eigen::MatrixXd::Zero(1, 1);
    return net;
}

ScmParams plain_params(double beta = 1.0) {
    ScmParams p;
    p.w = Eigen::VectorXd::Zero(1);
    p.w_y = Eigen::VectorXd::Zero(1);
    p.w_x = Eigen::VectorXd::Zero(1);
    p.beta = beta;
    p.alpha = 0.0;
    p.noise_sigma = 0.0;
    p.b_scale = 0.0;
    return p;
}

int cmd_selftest() {
    int failures = 0;
    auto check = [&](bool ok, const std::string& what) {
        std::cout << (ok ? "[ok]   " : "[FAIL] ") << what << "\n";
        if (!ok) ++failures;
    };

    {
        bool ok = true;
        for (std::uint64_t s = 0; s < 20 && ok; ++s) {
            const RawGraph g = synthesize_graph(8, 2, s);
            ok = compute_coreness(g).coreness == brute_force_coreness(g);
        }
        check(ok, "coreness matches brute-force peeling on 8-node graphs");
    }
    {
        const TwoGroupNetwork net = tiny_two_source_net();
        const ScmParams p = plain_params();
        const double single = true_co2g(net, p, {0});
        const double both = true_co2g(net, p, {0, 1});
        const double exp_single = std::log1p(std::exp(1.0 / std::sqrt(2.0))) - std::log(2.0);
        const double exp_both = std::log1p(std::exp(std::sqrt(2.0))) - std::log(2.0);
        check(std::abs(single - exp_single) < 1e-12 && std::abs(both - exp_both) < 1e-12 &&
                  true_co2g(net, p, {}) == 0.0,
              "closed-form effect on the two-source instance");
    }
    {
        bool ok = true;
        for (std::uint64_t s = 1; s <= 3 && ok; ++s) {
            RawGraph g = synthesize_graph(24, 2, s);
            TwoGroupNetwork net = core_periphery_split(g, 25.0);
            synthesize_features(net, 2, s);
            const ScmParams p = draw_scm_params(2, s);
            std::vector<std::int32_t> subset;
            double prev = 0.0;
            for (std::int32_t v = 0; v < std::min<std::int64_t>(4, net.n_source()); ++v) {
                subset.push_back(v);
                const double cur = true_co2g(net, p, subset);
                ok = ok && cur >= prev - 1e-12;
                prev = cur;
            }
        }
        check(ok, "ground-truth effect is monotone in the subset");
    }
    {
        // gradient of the estimator against central differences
        RawGraph g = synthesize_graph(16, 2, 3);
        TwoGroupNetwork net = core_periphery_split(g, 30.0);
        synthesize_features(net, 2, 5);
        EstimatorConfig cfg;
        cfg.gcn_hidden = 6;
        cfg.mlp_hidden = {8};
        cfg.dropout_rate = 0.0;
        EffectModel model = init_model(cfg, 2, 11);
        const NetworkOperators ops = build_operators(net);
        Eigen::VectorXd t0(net.n_source());
        rng::Stream ts(17);
        for (Eigen::Index i = 0; i < t0.size(); ++i) t0(i) = ts.uniform01();

        ad::Tensor t = ad::Tensor::leaf(t0);
        ad::backward(forward_tensor(model, ops, t, {}));
        bool ok = true;
        const double h = 1e-4;
        for (Eigen::Index i = 0; i < t0.size() && ok; ++i) {
            Eigen::VectorXd tp = t0, tm = t0;
            tp(i) += h;
            tm(i) -= h;
            const double fd =
                (forward_mean(model, ops, tp, {}) - forward_mean(model, ops, tm, {})) / (2 * h);
            const double an = t.grad()(i, 0);
            ok = std::abs(fd - an) / (std::abs(fd) + std::abs(an) + 1e-8) < 1e-4;
        }
        check(ok, "treatment gradient matches finite differences");
    }
    {
        const TwoGroupNetwork net = tiny_two_source_net();
        EstimatorConfig cfg;
        cfg.gcn_hidden = 4;
        cfg.mlp_hidden = {4};
        cfg.dropout_rate = 0.3;
        EffectModel model = init_model(cfg, 1, 7);
        const NetworkOperators ops = build_operators(net);
        const Co2gStats empty = estimate_co2g(model, ops, {}, 5, 99);
        bool ok = empty.mean == 0.0 && empty.stddev == 0.0;
        model.cfg.dropout_rate = 0.0;
        const Co2gStats nodrop = estimate_co2g(model, ops, {0}, 5, 99);
        ok = ok && nodrop.stddev == 0.0;
        check(ok, "MC-dropout zero-variance contracts");
    }
    {
        RunConfig cfg;
        cfg.dataset.n = 80;
        cfg.dataset.attachment = 2;
        cfg.dataset.d_in = 2;
        cfg.n_samples = 40;
        cfg.estimator.gcn_hidden = 4;
        cfg.estimator.mlp_hidden = {6};
        cfg.estimator.epochs = 3;
        cfg.seeds = {1};
        const SeedPipeline a = run_seed_pipeline(cfg, 1);
        const SeedPipeline b = run_seed_pipeline(cfg, 1);
        const NetworkOperators ops = build_operators(a.net);
        const Eigen::VectorXd probe = Eigen::VectorXd::Ones(a.net.n_source());
        check(forward_mean(a.model, ops, probe, {}) == forward_mean(b.model, ops, probe, {}),
              "seeded pipeline is bit-reproducible");
    }

    if (failures) {
        std::cout << failures << " selftest failure(s)\n";
        return 1;
    }
    std::cout << "selftest passed\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cross-group causal influence maximization"};
    app.require_subcommand(1);

    CliOverrides ov;
    app.add_option("--config", ov.config_path, "JSON config file");
    app.add_option("--out", ov.out_dir, "output directory (overrides config)");
    app.add_option("--seed", ov.seeds, "seed list override (repeatable)");
    app.add_option("--method", ov.methods, "method override (repeatable)");
    app.add_option("--budget", ov.budgets, "budget override (repeatable)");
    app.add_option("--lambda", ov.lambdas, "lambda override (repeatable)");

    auto* gen = app.add_subcommand("gen", "generate split + observational dataset");
    auto* train = app.add_subcommand("train", "train the effect estimator");
    auto* select = app.add_subcommand("select", "run subset selection methods");
    auto* evaluate = app.add_subcommand("evaluate", "compute regret and RMSE");
    auto* report = app.add_subcommand("report", "aggregate results and lambda sweep");
    auto* selftest = app.add_subcommand("selftest", "run the built-in invariant suite");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (selftest->parsed()) return cmd_selftest();
        const RunConfig cfg = effective_config(ov);
        if (gen->parsed()) return cmd_gen(cfg);
        if (train->parsed()) return cmd_train(cfg);
        if (select->parsed()) return cmd_select(cfg);
        if (evaluate->parsed()) return cmd_evaluate(cfg);
        if (report->parsed()) return cmd_report(cfg);
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::out_of_range& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::runtime_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
}
