#include "caumax/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "caumax/io_util.hpp"

namespace caumax {

using nlohmann::json;

std::string DatasetSpec::label() const {
    if (synthetic()) return "synthetic_n" + std::to_string(n);
    return std::filesystem::path(edge_list).stem().string();
}

namespace {

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                         const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key()))
            throw std::runtime_error("config: unknown key \"" + it.key() + "\" in " + where);
}

template <typename T>
void read_if(const json& obj, const char* key, T& out) {
    if (obj.contains(key)) out = obj.at(key).get<T>();
}

}  // namespace

RunConfig parse_config(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw std::runtime_error(std::string("config: invalid JSON: ") + e.what());
    }
    reject_unknown_keys(root,
                        {"dataset", "split_percent", "scm", "estimator", "gumbel", "im",
                         "methods", "budgets", "lambdas", "seeds", "pool_count", "out_dir"},
                        "top level");

    RunConfig cfg;
    if (root.contains("dataset")) {
        const json& d = root.at("dataset");
        reject_unknown_keys(d, {"n", "attachment", "edge_list", "features", "d_in"}, "dataset");
        read_if(d, "n", cfg.dataset.n);
        read_if(d, "attachment", cfg.dataset.attachment);
        read_if(d, "edge_list", cfg.dataset.edge_list);
        read_if(d, "features", cfg.dataset.features);
        read_if(d, "d_in", cfg.dataset.d_in);
    }
    read_if(root, "split_percent", cfg.split_percent);
    if (root.contains("scm")) {
        const json& s = root.at("scm");
        reject_unknown_keys(s, {"beta", "alpha", "noise_sigma", "b_scale", "n_samples"}, "scm");
        read_if(s, "beta", cfg.scm_beta);
        read_if(s, "alpha", cfg.scm_alpha);
        read_if(s, "noise_sigma", cfg.scm_noise_sigma);
        read_if(s, "b_scale", cfg.scm_b_scale);
        read_if(s, "n_samples", cfg.n_samples);
    }
    if (root.contains("estimator")) {
        const json& e = root.at("estimator");
        reject_unknown_keys(e,
                            {"gcn_hidden", "gcn_layers", "mlp_hidden", "dropout_rate", "lr",
                             "weight_decay", "epochs", "batch_size", "patience", "mc_passes",
                             "lambda", "shared_mc_masks"},
                            "estimator");
        read_if(e, "gcn_hidden", cfg.estimator.gcn_hidden);
        read_if(e, "gcn_layers", cfg.estimator.gcn_layers);
        read_if(e, "mlp_hidden", cfg.estimator.mlp_hidden);
        read_if(e, "dropout_rate", cfg.estimator.dropout_rate);
        read_if(e, "lr", cfg.estimator.lr);
        read_if(e, "weight_decay", cfg.estimator.weight_decay);
        read_if(e, "epochs", cfg.estimator.epochs);
        read_if(e, "batch_size", cfg.estimator.batch_size);
        read_if(e, "patience", cfg.estimator.patience);
        read_if(e, "mc_passes", cfg.estimator.mc_passes);
        read_if(e, "lambda", cfg.estimator.lambda);
        read_if(e, "shared_mc_masks", cfg.estimator.shared_mc_masks);
    }
    if (root.contains("gumbel")) {
        const json& g = root.at("gumbel");
        reject_unknown_keys(g, {"temperature", "budget_penalty", "lr", "iterations", "tau_anneal"},
                            "gumbel");
        read_if(g, "temperature", cfg.gumbel.temperature);
        read_if(g, "budget_penalty", cfg.gumbel.budget_penalty);
        read_if(g, "lr", cfg.gumbel.lr);
        read_if(g, "iterations", cfg.gumbel.iterations);
        read_if(g, "tau_anneal", cfg.gumbel.tau_anneal);
    }
    if (root.contains("im")) {
        const json& i = root.at("im");
        reject_unknown_keys(i, {"simulations", "propagation"}, "im");
        read_if(i, "simulations", cfg.im_simulations);
        read_if(i, "propagation", cfg.im_propagation);
    }
    read_if(root, "methods", cfg.methods);
    read_if(root, "budgets", cfg.budgets);
    read_if(root, "lambdas", cfg.lambdas);
    read_if(root, "seeds", cfg.seeds);
    read_if(root, "pool_count", cfg.pool_count);
    read_if(root, "out_dir", cfg.out_dir);

    const std::set<std::string> known_methods{"caumax_d", "caumax_g", "degree",
                                              "im",       "random",   "oracle_greedy"};
    for (const auto& m : cfg.methods)
        if (!known_methods.count(m)) throw std::runtime_error("config: unknown method \"" + m + "\"");
    if (cfg.budgets.empty()) throw std::runtime_error("config: budgets must be non-empty");
    if (cfg.lambdas.empty()) throw std::runtime_error("config: lambdas must be non-empty");
    if (cfg.seeds.empty()) throw std::runtime_error("config: seeds must be non-empty");
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

namespace {

json generation_relevant_json(const RunConfig& cfg) {
    json j;
    j["dataset"] = {{"n", cfg.dataset.n},
                    {"attachment", cfg.dataset.attachment},
                    {"edge_list", cfg.dataset.edge_list},
                    {"features", cfg.dataset.features},
                    {"d_in", cfg.dataset.d_in}};
    j["split_percent"] = cfg.split_percent;
    j["scm"] = {{"beta", cfg.scm_beta},
                {"alpha", cfg.scm_alpha},
                {"noise_sigma", cfg.scm_noise_sigma},
                {"b_scale", cfg.scm_b_scale},
                {"n_samples", cfg.n_samples}};
    j["estimator"] = {{"gcn_hidden", cfg.estimator.gcn_hidden},
                      {"gcn_layers", cfg.estimator.gcn_layers},
                      {"mlp_hidden", cfg.estimator.mlp_hidden},
                      {"dropout_rate", cfg.estimator.dropout_rate},
                      {"lr", cfg.estimator.lr},
                      {"weight_decay", cfg.estimator.weight_decay},
                      {"epochs", cfg.estimator.epochs},
                      {"batch_size", cfg.estimator.batch_size},
                      {"patience", cfg.estimator.patience},
                      {"mc_passes", cfg.estimator.mc_passes},
                      {"lambda", cfg.estimator.lambda},
                      {"shared_mc_masks", cfg.estimator.shared_mc_masks}};
    j["seeds"] = cfg.seeds;
    return j;
}

}  // namespace

std::string config_to_json(const RunConfig& cfg) {
    json j = generation_relevant_json(cfg);
    j["gumbel"] = {{"temperature", cfg.gumbel.temperature},
                   {"budget_penalty", cfg.gumbel.budget_penalty},
                   {"lr", cfg.gumbel.lr},
                   {"iterations", cfg.gumbel.iterations},
                   {"tau_anneal", cfg.gumbel.tau_anneal}};
    j["im"] = {{"simulations", cfg.im_simulations}, {"propagation", cfg.im_propagation}};
    j["methods"] = cfg.methods;
    j["budgets"] = cfg.budgets;
    j["lambdas"] = cfg.lambdas;
    j["pool_count"] = cfg.pool_count;
    j["out_dir"] = cfg.out_dir;
    return j.dump(2);
}

std::string config_hash(const RunConfig& cfg) {
    return hash_hex(generation_relevant_json(cfg).dump());
}

ArtifactStore::ArtifactStore(std::filesystem::path r) : root(std::move(r)) {}

std::filesystem::path ArtifactStore::split_path(std::uint64_t seed) const {
    return root / "data" / ("seed_" + std::to_string(seed) + ".split.txt");
}
std::filesystem::path ArtifactStore::data_path(std::uint64_t seed) const {
    return root / "data" / ("seed_" + std::to_string(seed) + ".data.txt");
}
std::filesystem::path ArtifactStore::model_path(std::uint64_t seed) const {
    return root / "models" / ("seed_" + std::to_string(seed) + ".model.txt");
}
std::filesystem::path ArtifactStore::trace_path(std::uint64_t seed) const {
    return root / "models" / ("seed_" + std::to_string(seed) + ".trace.csv");
}
std::filesystem::path ArtifactStore::selections_path() const {
    return root / "results" / "selections.csv";
}
std::filesystem::path ArtifactStore::report_path() const { return root / "results" / "report.csv"; }
std::filesystem::path ArtifactStore::aggregate_path() const {
    return root / "results" / "aggregate.csv";
}
std::filesystem::path ArtifactStore::lambda_sweep_path() const {
    return root / "results" / "lambda_sweep.csv";
}

}  // namespace caumax
