#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "caumax/config.hpp"
#include "caumax/eval.hpp"
#include "caumax/graph.hpp"
#include "caumax/scm.hpp"
#include "caumax/selectors.hpp"

namespace py = pybind11;
using namespace caumax;

PYBIND11_MODULE(_caumax, m) {
    m.doc() = "Cross-group causal influence maximization (C++ core)";

    py::class_<RawGraph>(m, "RawGraph")
        .def(py::init<>())
        .def_readonly("node_count", &RawGraph::node_count)
        .def_readonly("edges", &RawGraph::edges)
        .def_readonly("features", &RawGraph::features)
        .def("degrees", &RawGraph::degrees)
        .def("__repr__", [](const RawGraph& g) {
            return "<RawGraph nodes=" + std::to_string(g.node_count) +
                   " edges=" + std::to_string(g.edges.size()) + ">";
        });

    py::class_<CorenessMap>(m, "CorenessMap")
        .def_readonly("coreness", &CorenessMap::coreness);

    py::class_<CrossEdge>(m, "CrossEdge")
        .def_readonly("source", &CrossEdge::source)
        .def_readonly("target", &CrossEdge::target)
        .def_readonly("weight", &CrossEdge::weight);

    py::class_<TwoGroupNetwork>(m, "TwoGroupNetwork")
        .def(py::init<>())
        .def_readonly("source_orig_ids", &TwoGroupNetwork::source_orig_ids)
        .def_readonly("target_orig_ids", &TwoGroupNetwork::target_orig_ids)
        .def_readonly("edges_a", &TwoGroupNetwork::edges_a)
        .def_readonly("edges_b", &TwoGroupNetwork::edges_b)
        .def_readonly("edges_ab", &TwoGroupNetwork::edges_ab)
        .def_readonly("features_a", &TwoGroupNetwork::features_a)
        .def_readonly("features_b", &TwoGroupNetwork::features_b)
        .def_readonly("cross_degree", &TwoGroupNetwork::cross_degree)
        .def_property_readonly("n_source", &TwoGroupNetwork::n_source)
        .def_property_readonly("n_target", &TwoGroupNetwork::n_target)
        .def("__repr__", [](const TwoGroupNetwork& n) {
            return "<TwoGroupNetwork |V_A|=" + std::to_string(n.n_source()) +
                   " |V_B|=" + std::to_string(n.n_target()) +
                   " |E_AB|=" + std::to_string(n.edges_ab.size()) + ">";
        });

    m.def("load_edge_list", &load_edge_list, py::arg("path"), py::arg("feature_path") = py::none());
    m.def("compute_coreness", &compute_coreness, py::arg("graph"));
    m.def("core_periphery_split", &core_periphery_split, py::arg("graph"), py::arg("percent"));
    m.def("synthesize_graph", &synthesize_graph, py::arg("n"), py::arg("attachment"),
          py::arg("seed"));

    py::class_<ScmParams>(m, "ScmParams")
        .def(py::init<>())
        .def_readwrite("w", &ScmParams::w)
        .def_readwrite("w_y", &ScmParams::w_y)
        .def_readwrite("w_x", &ScmParams::w_x)
        .def_readwrite("b_scale", &ScmParams::b_scale)
        .def_readwrite("beta", &ScmParams::beta)
        .def_readwrite("alpha", &ScmParams::alpha)
        .def_readwrite("noise_sigma", &ScmParams::noise_sigma)
        .def_readwrite("seed", &ScmParams::seed);

    py::class_<ObservationalSample>(m, "ObservationalSample")
        .def_readonly("treatment", &ObservationalSample::treatment)
        .def_readonly("outcomes", &ObservationalSample::outcomes)
        .def_readonly("y_bar", &ObservationalSample::y_bar);

    m.def("draw_scm_params", &draw_scm_params, py::arg("d_in"), py::arg("seed"),
          py::arg("b_scale") = 0.1, py::arg("beta") = 1.0, py::arg("alpha") = 0.5,
          py::arg("noise_sigma") = 0.1);
    m.def(
        "make_treatment_vector",
        [](const std::vector<std::int32_t>& subset, int t, std::int64_t n_source) {
            return make_treatment_vector(subset, t, n_source).t;
        },
        py::arg("subset"), py::arg("t"), py::arg("n_source"));
    m.def("sample_observational", &sample_observational, py::arg("net"), py::arg("params"),
          py::arg("n_samples"), py::arg("seed"));
    m.def("true_interventional_mean", &true_interventional_mean, py::arg("net"),
          py::arg("params"), py::arg("subset"), py::arg("t"));
    m.def("true_co2g", &true_co2g, py::arg("net"), py::arg("params"), py::arg("subset"));
    m.def(
        "synthesize_features",
        [](TwoGroupNetwork net, std::int64_t d_in, std::uint64_t seed) {
            synthesize_features(net, d_in, seed);
            return net;
        },
        py::arg("net"), py::arg("d_in"), py::arg("seed"));

    py::class_<EstimatorConfig>(m, "EstimatorConfig")
        .def(py::init<>())
        .def_readwrite("gcn_hidden", &EstimatorConfig::gcn_hidden)
        .def_readwrite("gcn_layers", &EstimatorConfig::gcn_layers)
        .def_readwrite("mlp_hidden", &EstimatorConfig::mlp_hidden)
        .def_readwrite("dropout_rate", &EstimatorConfig::dropout_rate)
        .def_readwrite("lr", &EstimatorConfig::lr)
        .def_readwrite("weight_decay", &EstimatorConfig::weight_decay)
        .def_readwrite("epochs", &EstimatorConfig::epochs)
        .def_readwrite("batch_size", &EstimatorConfig::batch_size)
        .def_readwrite("patience", &EstimatorConfig::patience)
        .def_readwrite("mc_passes", &EstimatorConfig::mc_passes)
        .def_readwrite("lambda_", &EstimatorConfig::lambda)
        .def_readwrite("shared_mc_masks", &EstimatorConfig::shared_mc_masks);

    py::class_<EffectModel>(m, "EffectModel")
        .def(py::init<>())
        .def_readonly("d_in", &EffectModel::d_in)
        .def_readonly("frozen", &EffectModel::frozen)
        .def_readonly("cfg", &EffectModel::cfg);

    py::class_<TrainResult>(m, "TrainResult")
        .def_readonly("train_loss", &TrainResult::train_loss)
        .def_readonly("val_loss", &TrainResult::val_loss)
        .def_readonly("best_epoch", &TrainResult::best_epoch)
        .def_readonly("best_val", &TrainResult::best_val)
        .def_readonly("baseline_val_mse", &TrainResult::baseline_val_mse)
        .def_readonly("epochs_run", &TrainResult::epochs_run);

    py::class_<Co2gStats>(m, "Co2gStats")
        .def_readonly("mean", &Co2gStats::mean)
        .def_readonly("stddev", &Co2gStats::stddev)
        .def_readonly("samples", &Co2gStats::samples);

    m.def("init_model", &init_model, py::arg("cfg"), py::arg("d_in"), py::arg("seed"));
    m.def("train", &train, py::arg("model"), py::arg("net"), py::arg("data"), py::arg("seed"));
    m.def(
        "forward_mean",
        [](const EffectModel& model, const TwoGroupNetwork& net, const Eigen::VectorXd& t,
           std::optional<std::uint64_t> dropout_seed) {
            return forward_mean(model, build_operators(net), t, dropout_seed);
        },
        py::arg("model"), py::arg("net"), py::arg("treatment"),
        py::arg("dropout_seed") = py::none());
    m.def(
        "estimate_co2g",
        [](const EffectModel& model, const TwoGroupNetwork& net,
           const std::vector<std::int32_t>& subset, int mc_passes, std::uint64_t seed) {
            return estimate_co2g(model, build_operators(net), subset, mc_passes, seed);
        },
        py::arg("model"), py::arg("net"), py::arg("subset"), py::arg("mc_passes"),
        py::arg("seed"));
    m.def("lcb_objective", &lcb_objective, py::arg("stats"), py::arg("lambda_"));
    m.def("save_model", &save_model, py::arg("model"), py::arg("path"), py::arg("config_hash"));
    m.def("load_model", &load_model, py::arg("path"), py::arg("expected_hash") = "");

    py::class_<SelectionResult>(m, "SelectionResult")
        .def_readonly("subset", &SelectionResult::subset)
        .def_readonly("objective_trace", &SelectionResult::objective_trace)
        .def_readonly("method", &SelectionResult::method)
        .def_readonly("budget", &SelectionResult::budget)
        .def_readonly("lambda_", &SelectionResult::lambda)
        .def_readonly("seed", &SelectionResult::seed)
        .def_readonly("wall_ms", &SelectionResult::wall_ms);

    py::class_<GumbelState>(m, "GumbelState")
        .def(py::init<>())
        .def_readwrite("temperature", &GumbelState::temperature)
        .def_readwrite("budget_penalty", &GumbelState::budget_penalty)
        .def_readwrite("lr", &GumbelState::lr)
        .def_readwrite("iterations", &GumbelState::iterations)
        .def_readwrite("tau_anneal", &GumbelState::tau_anneal);

    m.def(
        "caumax_g",
        [](const EffectModel& model, const TwoGroupNetwork& net, int budget, double lambda,
           int mc_passes, std::uint64_t seed, int threads) {
            EstimatorCo2gModel iface(model, net);
            return caumax_g(iface, budget, lambda, mc_passes, seed, threads);
        },
        py::arg("model"), py::arg("net"), py::arg("budget"), py::arg("lambda_"),
        py::arg("mc_passes"), py::arg("seed"), py::arg("threads") = 1);
    m.def(
        "caumax_d",
        [](const EffectModel& model, const TwoGroupNetwork& net, int budget,
           const GumbelState& state, double lambda, int mc_passes, std::uint64_t seed) {
            EstimatorCo2gModel iface(model, net);
            return caumax_d(iface, budget, state, lambda, mc_passes, seed);
        },
        py::arg("model"), py::arg("net"), py::arg("budget"), py::arg("state"),
        py::arg("lambda_"), py::arg("mc_passes"), py::arg("seed"));
    m.def("select_random", &select_random, py::arg("n_source"), py::arg("budget"),
          py::arg("seed"));
    m.def("select_degree", &select_degree, py::arg("net"), py::arg("budget"));
    m.def("select_im", &select_im, py::arg("net"), py::arg("budget"), py::arg("simulations"),
          py::arg("p_ic"), py::arg("seed"));
    m.def("oracle_greedy", &oracle_greedy, py::arg("net"), py::arg("params"), py::arg("budget"));
    m.def("top_k_indices", &top_k_indices, py::arg("scores"), py::arg("k"));

    py::class_<EvalSubsetPool>(m, "EvalSubsetPool")
        .def_readonly("subsets", &EvalSubsetPool::subsets)
        .def_readonly("seed", &EvalSubsetPool::seed);

    py::class_<IdentificationResult>(m, "IdentificationResult")
        .def_readonly("adjustment_estimate", &IdentificationResult::adjustment_estimate)
        .def_readonly("simulated_truth", &IdentificationResult::simulated_truth)
        .def_readonly("z_score", &IdentificationResult::z_score)
        .def_readonly("matches", &IdentificationResult::matches);

    m.def("build_pool", &build_pool, py::arg("n_source"), py::arg("k_max"), py::arg("count"),
          py::arg("seed"));
    m.def("regret_at_k", &regret_at_k, py::arg("net"), py::arg("params"), py::arg("selected"),
          py::arg("oracle_subset"));
    m.def(
        "rmse_over_pool",
        [](const EffectModel& model, const TwoGroupNetwork& net, const ScmParams& params,
           const EvalSubsetPool& pool, bool use_mc_mean, int mc_passes, std::uint64_t seed) {
            return rmse_over_pool(model, build_operators(net), net, params, pool, use_mc_mean,
                                  mc_passes, seed);
        },
        py::arg("model"), py::arg("net"), py::arg("params"), py::arg("pool"),
        py::arg("use_mc_mean") = false, py::arg("mc_passes") = 20, py::arg("seed") = 0);
    m.def("identification_check", &identification_check, py::arg("net"), py::arg("params"),
          py::arg("subset"), py::arg("t"), py::arg("n_obs"), py::arg("seed"));

    m.def(
        "run_experiment",
        [](const std::string& config_json, int threads) {
            const RunConfig cfg = parse_config(config_json);
            ExperimentReport report = run_experiment(cfg, threads);
            return std::make_pair(report_csv(report.rows), aggregate_csv(report.aggregates));
        },
        py::arg("config_json"), py::arg("threads") = 1,
        "Run the full experiment; returns (report_csv, aggregate_csv)");
}
