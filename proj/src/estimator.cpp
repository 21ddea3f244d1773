#include "caumax/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "caumax/io_util.hpp"
#include "caumax/rng.hpp"

namespace caumax {

std::vector<ad::Tensor> EffectModel::parameters() const {
    std::vector<ad::Tensor> out = gcn_weights;
    for (std::size_t i = 0; i < mlp_weights.size(); ++i) {
        out.push_back(mlp_weights[i]);
        out.push_back(mlp_biases[i]);
    }
    return out;
}

namespace {

ad::Matrix glorot(Eigen::Index fan_in, Eigen::Index fan_out, rng::Stream& stream) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    ad::Matrix w(fan_in, fan_out);
    for (Eigen::Index i = 0; i < fan_in; ++i)
        for (Eigen::Index j = 0; j < fan_out; ++j) w(i, j) = stream.uniform(-limit, limit);
    return w;
}

}  // namespace

EffectModel init_model(const EstimatorConfig& cfg, std::int64_t d_in, std::uint64_t seed) {
    if (cfg.gcn_layers < 1) throw std::invalid_argument("gcn_layers must be >= 1");
    if (cfg.gcn_hidden < 1) throw std::invalid_argument("gcn_hidden must be >= 1");
    if (cfg.dropout_rate < 0.0 || cfg.dropout_rate >= 1.0)
        throw std::invalid_argument("dropout_rate must lie in [0,1)");
    if (cfg.mc_passes < 1) throw std::invalid_argument("mc_passes must be >= 1");
    if (d_in < 1) throw std::invalid_argument("d_in must be >= 1");

    EffectModel m;
    m.cfg = cfg;
    m.d_in = d_in;
    rng::Stream stream(seed, "model_init");

    Eigen::Index in = d_in + 1;  // covariates plus treatment channel
    for (int l = 0; l < cfg.gcn_layers; ++l) {
        m.gcn_weights.push_back(ad::Tensor::leaf(glorot(in, cfg.gcn_hidden, stream)));
        in = cfg.gcn_hidden;
    }

    in = d_in + cfg.gcn_hidden;  // target covariates plus aggregated signal
    for (int h : cfg.mlp_hidden) {
        m.mlp_weights.push_back(ad::Tensor::leaf(glorot(in, h, stream)));
        m.mlp_biases.push_back(ad::Tensor::leaf(ad::Matrix::Zero(1, h)));
        in = h;
    }
    m.mlp_weights.push_back(ad::Tensor::leaf(glorot(in, 1, stream)));
    m.mlp_biases.push_back(ad::Tensor::leaf(ad::Matrix::Zero(1, 1)));
    return m;
}

NetworkOperators build_operators(const TwoGroupNetwork& net) {
    const auto na = net.n_source();
    const auto nb = net.n_target();
    if (net.d_in() == 0) throw std::invalid_argument("network has no covariates");

    // Symmetric normalization with self-loops over the source subgraph.
    std::vector<double> deg(na, 1.0);
    for (const auto& [u, v] : net.edges_a) {
        deg[u] += 1.0;
        deg[v] += 1.0;
    }
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(2 * net.edges_a.size() + na);
    for (std::int64_t i = 0; i < na; ++i) trips.emplace_back(i, i, 1.0 / deg[i]);
    for (const auto& [u, v] : net.edges_a) {
        const double w = 1.0 / std::sqrt(deg[u] * deg[v]);
        trips.emplace_back(u, v, w);
        trips.emplace_back(v, u, w);
    }
    auto adj = std::make_shared<ad::SparseMatrix>(na, na);
    adj->setFromTriplets(trips.begin(), trips.end());

    trips.clear();
    trips.reserve(net.edges_ab.size());
    for (const auto& e : net.edges_ab)
        trips.emplace_back(e.target, e.source, 1.0 / static_cast<double>(net.cross_degree[e.target]));
    auto cross = std::make_shared<ad::SparseMatrix>(nb, na);
    cross->setFromTriplets(trips.begin(), trips.end());

    NetworkOperators ops;
    ops.adj_norm = std::move(adj);
    ops.cross_mean = std::move(cross);
    ops.features_a = ad::Tensor::constant(net.features_a);
    ops.features_b = ad::Tensor::constant(net.features_b);
    return ops;
}

ad::Tensor forward_tensor(const EffectModel& model, const NetworkOperators& ops,
                          const ad::Tensor& treatment,
                          std::optional<std::uint64_t> dropout_seed) {
    if (treatment.rows() != ops.features_a.rows() || treatment.cols() != 1)
        throw std::invalid_argument("treatment must be " +
                                    std::to_string(ops.features_a.rows()) + "x1, got " +
                                    std::to_string(treatment.rows()) + "x" +
                                    std::to_string(treatment.cols()));
    const double rate = model.cfg.dropout_rate;
    int site = 0;
    auto maybe_dropout = [&](const ad::Tensor& x) {
        const int s = site++;
        if (!dropout_seed || rate == 0.0) return x;
        return ad::dropout(x, rate, rng::derive(*dropout_seed, "site", {static_cast<std::uint64_t>(s)}));
    };

    ad::Tensor h = ad::concat_cols(ops.features_a, treatment);
    for (const auto& w : model.gcn_weights)
        h = maybe_dropout(ad::relu(ad::matmul(ad::spmm(ops.adj_norm, h), w)));

    ad::Tensor z = ad::concat_cols(ops.features_b, ad::spmm(ops.cross_mean, h));
    const std::size_t n_hidden = model.mlp_biases.size() - 1;
    for (std::size_t k = 0; k < n_hidden; ++k)
        z = maybe_dropout(ad::relu(
            ad::add_rowvec(ad::matmul(z, model.mlp_weights[k]), model.mlp_biases[k])));
    z = ad::add_rowvec(ad::matmul(z, model.mlp_weights.back()), model.mlp_biases.back());
    return ad::add_scalar(ad::scale(ad::mean_all(z), model.y_scale), model.y_mean);
}

double forward_mean(const EffectModel& model, const NetworkOperators& ops,
                    const Eigen::VectorXd& treatment,
                    std::optional<std::uint64_t> dropout_seed) {
    return forward_tensor(model, ops, ad::Tensor::constant(treatment), dropout_seed).value()(0, 0);
}

namespace {

std::vector<ad::Matrix> snapshot_values(const std::vector<ad::Tensor>& params) {
    std::vector<ad::Matrix> out;
    out.reserve(params.size());
    for (const auto& p : params) out.push_back(p.value());
    return out;
}

void restore_values(std::vector<ad::Tensor>& params, const std::vector<ad::Matrix>& values) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i].mutable_value() = values[i];
}

}  // namespace

TrainResult train(EffectModel& model, const TwoGroupNetwork& net,
                  const std::vector<ObservationalSample>& data, std::uint64_t seed) {
    if (data.empty()) throw std::invalid_argument("train: empty observational dataset");
    if (model.frozen) throw std::logic_error("train: model is frozen");
    if (net.d_in() != model.d_in)
        throw std::invalid_argument("train: covariate dimension mismatch");

    const NetworkOperators ops = build_operators(net);
    auto params = model.parameters();
    ad::Adam opt(params, {model.cfg.lr, 0.9, 0.999, 1e-8, model.cfg.weight_decay});

    // deterministic 10% holdout (at least one sample)
    std::vector<std::size_t> idx(data.size());
    std::iota(idx.begin(), idx.end(), 0);
    {
        rng::Stream stream(seed, "valsplit");
        for (std::size_t i = idx.size(); i > 1; --i)
            std::swap(idx[i - 1], idx[stream.below(i)]);
    }
    const std::size_t n_val = std::max<std::size_t>(1, data.size() / 10);
    std::vector<std::size_t> val_idx(idx.end() - n_val, idx.end());
    std::vector<std::size_t> train_idx(idx.begin(), idx.end() - n_val);
    if (train_idx.empty()) throw std::invalid_argument("train: too few samples for a holdout");

    const auto validation_mse = [&]() {
        double acc = 0.0;
        for (auto i : val_idx) {
            const double pred = forward_mean(model, ops, data[i].treatment, {});
            const double d = pred - data[i].y_bar;
            acc += d * d;
        }
        return acc / static_cast<double>(val_idx.size());
    };

    TrainResult res;
    {
        double train_mean = 0.0;
        for (auto i : train_idx) train_mean += data[i].y_bar;
        train_mean /= static_cast<double>(train_idx.size());
        double acc = 0.0;
        for (auto i : val_idx) {
            const double d = train_mean - data[i].y_bar;
            acc += d * d;
        }
        res.baseline_val_mse = acc / static_cast<double>(val_idx.size());
    }

    double best_val = std::numeric_limits<double>::infinity();
    std::vector<ad::Matrix> best_weights = snapshot_values(params);
    int best_epoch = 0;
    int since_best = 0;

    for (int epoch = 1; epoch <= model.cfg.epochs; ++epoch) {
        rng::Stream shuffle(seed, "shuffle", {static_cast<std::uint64_t>(epoch)});
        for (std::size_t i = train_idx.size(); i > 1; --i)
            std::swap(train_idx[i - 1], train_idx[shuffle.below(i)]);

        double epoch_loss = 0.0;
        const std::size_t bs = static_cast<std::size_t>(std::max(1, model.cfg.batch_size));
        for (std::size_t at = 0; at < train_idx.size(); at += bs) {
            const std::size_t n = std::min(bs, train_idx.size() - at);
            opt.zero_grad();
            for (std::size_t b = 0; b < n; ++b) {
                const std::size_t i = train_idx[at + b];
                const std::uint64_t drop_seed = rng::derive(
                    seed, "train_dropout",
                    {static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(i)});
                ad::Tensor pred = forward_tensor(
                    model, ops, ad::Tensor::constant(data[i].treatment), drop_seed);
                ad::Tensor err = ad::add_scalar(pred, -data[i].y_bar);
                ad::Tensor loss = ad::square(err);
                epoch_loss += loss.value()(0, 0);
                ad::backward(ad::scale(loss, 1.0 / static_cast<double>(n)));
            }
            opt.step();
        }
        res.train_loss.push_back(epoch_loss / static_cast<double>(train_idx.size()));

        const double val = validation_mse();
        res.val_loss.push_back(val);
        res.epochs_run = epoch;
        if (val < best_val) {
            best_val = val;
            best_epoch = epoch;
            best_weights = snapshot_values(params);
            since_best = 0;
        } else if (++since_best >= model.cfg.patience) {
            break;
        }
    }

    restore_values(params, best_weights);
    res.best_epoch = best_epoch;
    res.best_val = best_val;
    model.frozen = true;
    return res;
}

Co2gStats stats_from_samples(const std::vector<double>& samples) {
    Co2gStats s;
    s.samples = samples;
    const double m = static_cast<double>(samples.size());
    for (double x : samples) s.mean += x;
    s.mean /= m;
    double var = 0.0;
    for (double x : samples) var += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(var / m);
    return s;
}

namespace {

Co2gStats mc_co2g(const EffectModel& model, const NetworkOperators& ops,
                  const Eigen::VectorXd& treated_arm, int mc_passes, std::uint64_t seed) {
    if (mc_passes < 1) throw std::invalid_argument("mc_passes must be >= 1");
    const Eigen::VectorXd control = Eigen::VectorXd::Zero(treated_arm.size());
    std::vector<double> samples;
    samples.reserve(mc_passes);
    for (int m = 1; m <= mc_passes; ++m) {
        const std::uint64_t pass_seed = rng::derive(seed, "mc", {static_cast<std::uint64_t>(m)});
        const std::uint64_t treated_seed =
            model.cfg.shared_mc_masks ? pass_seed : rng::derive(pass_seed, "arm", {1});
        const std::uint64_t control_seed =
            model.cfg.shared_mc_masks ? pass_seed : rng::derive(pass_seed, "arm", {0});
        samples.push_back(forward_mean(model, ops, treated_arm, treated_seed) -
                          forward_mean(model, ops, control, control_seed));
    }
    return stats_from_samples(samples);
}

}  // namespace

Co2gStats estimate_co2g(const EffectModel& model, const NetworkOperators& ops,
                        const std::vector<std::int32_t>& subset, int mc_passes,
                        std::uint64_t seed) {
    const TreatmentVector tv = make_treatment_vector(subset, 1, ops.features_a.rows());
    return mc_co2g(model, ops, tv.t, mc_passes, seed);
}

Co2gStats estimate_co2g_soft(const EffectModel& model, const NetworkOperators& ops,
                             const Eigen::VectorXd& soft_mask, int mc_passes,
                             std::uint64_t seed) {
    return mc_co2g(model, ops, soft_mask, mc_passes, seed);
}

double co2g_point_estimate(const EffectModel& model, const NetworkOperators& ops,
                           const std::vector<std::int32_t>& subset) {
    const TreatmentVector tv = make_treatment_vector(subset, 1, ops.features_a.rows());
    const Eigen::VectorXd control = Eigen::VectorXd::Zero(tv.t.size());
    return forward_mean(model, ops, tv.t, {}) - forward_mean(model, ops, control, {});
}

double lcb_objective(const Co2gStats& stats, double lambda) {
    if (lambda < 0.0) throw std::invalid_argument("lambda must be >= 0");
    return stats.mean - lambda * stats.stddev;
}

Co2gStats EstimatorCo2gModel::estimate(const std::vector<std::int32_t>& subset, int mc_passes,
                                       std::uint64_t seed) const {
    return estimate_co2g(*model_, ops_, subset, mc_passes, seed);
}

ad::Tensor EstimatorCo2gModel::objective_soft(const ad::Tensor& soft_mask, double lambda,
                                              int mc_passes, std::uint64_t seed) const {
    if (mc_passes < 1) throw std::invalid_argument("mc_passes must be >= 1");
    const Eigen::VectorXd control = Eigen::VectorXd::Zero(soft_mask.rows());
    std::vector<ad::Tensor> samples;
    samples.reserve(mc_passes);
    for (int m = 1; m <= mc_passes; ++m) {
        const std::uint64_t pass_seed = rng::derive(seed, "mc", {static_cast<std::uint64_t>(m)});
        const std::uint64_t treated_seed =
            model_->cfg.shared_mc_masks ? pass_seed : rng::derive(pass_seed, "arm", {1});
        const std::uint64_t control_seed =
            model_->cfg.shared_mc_masks ? pass_seed : rng::derive(pass_seed, "arm", {0});
        // control arm is mask-independent: enters as a constant per pass
        const double control_value = forward_mean(*model_, ops_, control, control_seed);
        samples.push_back(ad::add_scalar(
            forward_tensor(*model_, ops_, soft_mask, treated_seed), -control_value));
    }
    ad::Tensor stacked = ad::concat_rows(samples);
    ad::Tensor mu = ad::mean_all(stacked);
    ad::Tensor sigma = ad::sqrt_guarded(ad::mean_all(ad::square(ad::sub_bcast(stacked, mu))));
    return ad::sub(mu, ad::scale(sigma, lambda));
}

namespace {

void write_block(std::ostringstream& out, const std::string& name, const ad::Matrix& m) {
    out << name << " " << m.rows() << " " << m.cols() << "\n";
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j) out << " ";
            out << format_double(m(i, j));
        }
        out << "\n";
    }
}

ad::Matrix read_block(std::ifstream& in, const std::string& name, const std::string& path) {
    std::string tok;
    Eigen::Index rows, cols;
    in >> tok >> rows >> cols;
    if (tok != name) throw std::runtime_error(path + ": expected weight block \"" + name + "\"");
    ad::Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) in >> m(i, j);
    if (!in) throw std::runtime_error(path + ": truncated weight block \"" + name + "\"");
    return m;
}

}  // namespace

void save_model(const EffectModel& model, const std::filesystem::path& path,
                const std::string& config_hash) {
    std::ostringstream out;
    out << "CAUMAX-MODEL v1\n";
    out << "config_hash " << config_hash << "\n";
    out << "d_in " << model.d_in << "\n";
    out << "gcn_hidden " << model.cfg.gcn_hidden << "\n";
    out << "gcn_layers " << model.cfg.gcn_layers << "\n";
    out << "mlp_hidden";
    for (int h : model.cfg.mlp_hidden) out << " " << h;
    out << "\n";
    out << "dropout_rate " << format_double(model.cfg.dropout_rate) << "\n";
    out << "mc_passes " << model.cfg.mc_passes << "\n";
    out << "lambda " << format_double(model.cfg.lambda) << "\n";
    out << "shared_mc_masks " << (model.cfg.shared_mc_masks ? 1 : 0) << "\n";
    out << "frozen " << (model.frozen ? 1 : 0) << "\n";
    for (std::size_t l = 0; l < model.gcn_weights.size(); ++l)
        write_block(out, "gcn_w" + std::to_string(l), model.gcn_weights[l].value());
    for (std::size_t k = 0; k < model.mlp_weights.size(); ++k) {
        write_block(out, "mlp_w" + std::to_string(k), model.mlp_weights[k].value());
        write_block(out, "mlp_b" + std::to_string(k), model.mlp_biases[k].value());
    }
    atomic_write(path, out.str());
}

EffectModel load_model(const std::filesystem::path& path, const std::string& expected_hash) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open model: " + path.string());
    std::string magic, version;
    in >> magic >> version;
    if (magic != "CAUMAX-MODEL" || version != "v1")
        throw std::runtime_error(path.string() + ": expected magic \"CAUMAX-MODEL v1\"");
    std::string key, hash;
    in >> key >> hash;
    if (key != "config_hash") throw std::runtime_error(path.string() + ": missing config_hash");
    if (!expected_hash.empty() && hash != expected_hash)
        throw std::runtime_error(path.string() + ": config hash mismatch (" + hash +
                                 " vs expected " + expected_hash + ")");

    EffectModel m;
    int frozen = 0, shared = 1, n_mlp_hidden = 0;
    in >> key >> m.d_in;
    in >> key >> m.cfg.gcn_hidden;
    in >> key >> m.cfg.gcn_layers;
    in >> key;  // mlp_hidden
    m.cfg.mlp_hidden.clear();
    {
        std::string rest;
        std::getline(in, rest);
        std::istringstream rs(rest);
        int h;
        while (rs >> h) m.cfg.mlp_hidden.push_back(h);
        n_mlp_hidden = static_cast<int>(m.cfg.mlp_hidden.size());
    }
    in >> key >> m.cfg.dropout_rate;
    in >> key >> m.cfg.mc_passes;
    in >> key >> m.cfg.lambda;
    in >> key >> shared;
    in >> key >> frozen;
    if (!in) throw std::runtime_error(path.string() + ": truncated header");
    m.cfg.shared_mc_masks = shared != 0;
    m.frozen = frozen != 0;

    for (int l = 0; l < m.cfg.gcn_layers; ++l)
        m.gcn_weights.push_back(
            ad::Tensor::leaf(read_block(in, "gcn_w" + std::to_string(l), path.string())));
    for (int k = 0; k <= n_mlp_hidden; ++k) {
        m.mlp_weights.push_back(
            ad::Tensor::leaf(read_block(in, "mlp_w" + std::to_string(k), path.string())));
        m.mlp_biases.push_back(
            ad::Tensor::leaf(read_block(in, "mlp_b" + std::to_string(k), path.string())));
    }
    return m;
}

}  // namespace caumax
