#include "caumax/scm.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "caumax/autodiff.hpp"
#include "caumax/io_util.hpp"
#include "caumax/rng.hpp"

namespace caumax {

namespace {

void check_dims(const TwoGroupNetwork& net, const ScmParams& params) {
    const auto d = net.d_in();
    if (d == 0) throw std::invalid_argument("network has no covariates");
    if (params.w.size() != d || params.w_y.size() != d || params.w_x.size() != d)
        throw std::invalid_argument("SCM parameter dimension " + std::to_string(params.w.size()) +
                                    " does not match covariate dimension " + std::to_string(d));
    if (params.b_scale < 0.0 || params.noise_sigma < 0.0)
        throw std::invalid_argument("noise scales must be nonnegative");
}

}  // namespace

ScmParams draw_scm_params(std::int64_t d_in, std::uint64_t seed, double b_scale, double beta,
                          double alpha, double noise_sigma) {
    if (d_in < 1) throw std::invalid_argument("d_in must be >= 1");
    ScmParams p;
    p.b_scale = b_scale;
    p.beta = beta;
    p.alpha = alpha;
    p.noise_sigma = noise_sigma;
    p.seed = seed;
    rng::Stream stream(seed, "scm_params");
    p.w.resize(d_in);
    p.w_y.resize(d_in);
    p.w_x.resize(d_in);
    for (auto* vec : {&p.w, &p.w_y, &p.w_x})
        for (std::int64_t i = 0; i < d_in; ++i) (*vec)(i) = stream.normal();
    return p;
}

TreatmentVector make_treatment_vector(const std::vector<std::int32_t>& subset, int t,
                                      std::int64_t n_source) {
    TreatmentVector tv;
    tv.t = Eigen::VectorXd::Zero(n_source);
    for (auto i : subset) {
        if (i < 0 || i >= n_source)
            throw std::out_of_range("subset id " + std::to_string(i) + " outside [0," +
                                    std::to_string(n_source) + ")");
        tv.t(i) = static_cast<double>(t);
    }
    return tv;
}

Eigen::VectorXd deterministic_outcomes(const TwoGroupNetwork& net, const ScmParams& params,
                                       const Eigen::VectorXd& treatment) {
    check_dims(net, params);
    if (treatment.size() != net.n_source())
        throw std::invalid_argument("treatment length " + std::to_string(treatment.size()) +
                                    " vs |V_A| = " + std::to_string(net.n_source()));

    const Eigen::VectorXd base_y = net.features_b * params.w_y;
    const Eigen::VectorXd wx_source = net.features_a * params.w_x;

    Eigen::VectorXd treat_sum = Eigen::VectorXd::Zero(net.n_target());
    Eigen::VectorXd feat_sum = Eigen::VectorXd::Zero(net.n_target());
    for (const auto& e : net.edges_ab) {
        treat_sum(e.target) += e.weight * treatment(e.source);
        feat_sum(e.target) += e.weight * wx_source(e.source);
    }

    Eigen::VectorXd y(net.n_target());
    for (std::int64_t j = 0; j < net.n_target(); ++j) {
        const double scale = 1.0 / std::sqrt(static_cast<double>(net.cross_degree[j]));
        y(j) = base_y(j) + params.beta * ad::softplus_scalar(treat_sum(j) * scale) +
               params.alpha * ad::softplus_scalar(feat_sum(j) * scale);
    }
    return y;
}

Eigen::VectorXd treatment_propensities(const TwoGroupNetwork& net, const ScmParams& params,
                                       std::uint64_t sample_seed) {
    check_dims(net, params);
    rng::Stream stream(sample_seed);
    const Eigen::VectorXd logits = net.features_a * params.w;
    Eigen::VectorXd pi(net.n_source());
    for (std::int64_t i = 0; i < net.n_source(); ++i) {
        const double b = params.b_scale > 0.0 ? stream.normal(0.0, params.b_scale) : 0.0;
        pi(i) = ad::sigmoid_scalar(logits(i) + b);
    }
    return pi;
}

std::vector<ObservationalSample> sample_observational(const TwoGroupNetwork& net,
                                                      const ScmParams& params,
                                                      std::int64_t n_samples,
                                                      std::uint64_t seed) {
    check_dims(net, params);
    std::vector<ObservationalSample> out;
    out.reserve(n_samples);
    for (std::int64_t n = 0; n < n_samples; ++n) {
        // each sample draws from its own derived stream so parallel and
        // sequential generation agree
        const std::uint64_t prop_seed = rng::derive(seed, "obs_propensity", {static_cast<std::uint64_t>(n)});
        rng::Stream stream(seed, "obs_draw", {static_cast<std::uint64_t>(n)});

        ObservationalSample s;
        const Eigen::VectorXd pi = treatment_propensities(net, params, prop_seed);
        s.treatment.resize(net.n_source());
        for (std::int64_t i = 0; i < net.n_source(); ++i)
            s.treatment(i) = stream.bernoulli(pi(i)) ? 1.0 : 0.0;

        s.outcomes = deterministic_outcomes(net, params, s.treatment);
        if (params.noise_sigma > 0.0)
            for (std::int64_t j = 0; j < net.n_target(); ++j)
                s.outcomes(j) += stream.normal(0.0, params.noise_sigma);
        s.y_bar = s.outcomes.mean();
        out.push_back(std::move(s));
    }
    return out;
}

double true_interventional_mean(const TwoGroupNetwork& net, const ScmParams& params,
                                const std::vector<std::int32_t>& subset, int t) {
    const TreatmentVector tv = make_treatment_vector(subset, t, net.n_source());
    return deterministic_outcomes(net, params, tv.t).mean();
}

double true_co2g(const TwoGroupNetwork& net, const ScmParams& params,
                 const std::vector<std::int32_t>& subset) {
    return true_interventional_mean(net, params, subset, 1) -
           true_interventional_mean(net, params, subset, 0);
}

void synthesize_features(TwoGroupNetwork& net, std::int64_t d_in, std::uint64_t seed) {
    if (d_in < 1) throw std::invalid_argument("d_in must be >= 1");
    rng::Stream stream(seed, "features");
    net.features_a.resize(net.n_source(), d_in);
    for (std::int64_t i = 0; i < net.n_source(); ++i)
        for (std::int64_t k = 0; k < d_in; ++k) net.features_a(i, k) = stream.normal();
    net.features_b.resize(net.n_target(), d_in);
    for (std::int64_t j = 0; j < net.n_target(); ++j)
        for (std::int64_t k = 0; k < d_in; ++k) net.features_b(j, k) = stream.normal();
}

namespace {

void write_matrix(std::ostringstream& out, const char* name, const Eigen::MatrixXd& m) {
    out << name << " " << m.rows() << " " << m.cols() << "\n";
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j) out << " ";
            out << format_double(m(i, j));
        }
        out << "\n";
    }
}

Eigen::MatrixXd read_matrix(std::ifstream& in, const char* name, const std::string& path) {
    std::string tok;
    Eigen::Index rows, cols;
    in >> tok >> rows >> cols;
    if (tok != name) throw std::runtime_error(path + ": expected block \"" + name + "\"");
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) in >> m(i, j);
    if (!in) throw std::runtime_error(path + ": truncated block \"" + name + "\"");
    return m;
}

}  // namespace

void save_dataset(const ScmDataset& data, const std::filesystem::path& path,
                  const std::string& config_hash) {
    std::ostringstream out;
    out << "CAUMAX-DATA v1\n";
    out << "config_hash " << config_hash << "\n";
    out << "seed " << data.params.seed << "\n";
    out << "scalars " << format_double(data.params.b_scale) << " "
        << format_double(data.params.beta) << " " << format_double(data.params.alpha) << " "
        << format_double(data.params.noise_sigma) << "\n";
    write_matrix(out, "w", data.params.w);
    write_matrix(out, "w_y", data.params.w_y);
    write_matrix(out, "w_x", data.params.w_x);
    write_matrix(out, "features_a", data.features_a);
    write_matrix(out, "features_b", data.features_b);

    const auto n = static_cast<Eigen::Index>(data.samples.size());
    Eigen::MatrixXd treatments(n, n ? data.samples.front().treatment.size() : 0);
    Eigen::MatrixXd outcomes(n, n ? data.samples.front().outcomes.size() : 0);
    for (Eigen::Index i = 0; i < n; ++i) {
        treatments.row(i) = data.samples[i].treatment;
        outcomes.row(i) = data.samples[i].outcomes;
    }
    write_matrix(out, "treatments", treatments);
    write_matrix(out, "outcomes", outcomes);
    atomic_write(path, out.str());
}

ScmDataset load_dataset(const std::filesystem::path& path, const std::string& expected_hash) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open dataset: " + path.string());
    std::string magic, version;
    in >> magic >> version;
    if (magic != "CAUMAX-DATA" || version != "v1")
        throw std::runtime_error(path.string() + ": expected magic \"CAUMAX-DATA v1\"");
    std::string key, hash;
    in >> key >> hash;
    if (key != "config_hash") throw std::runtime_error(path.string() + ": missing config_hash");
    if (!expected_hash.empty() && hash != expected_hash)
        throw std::runtime_error(path.string() + ": config hash mismatch (" + hash +
                                 " vs expected " + expected_hash + ")");

    ScmDataset data;
    in >> key >> data.params.seed;
    if (key != "seed") throw std::runtime_error(path.string() + ": missing seed");
    in >> key >> data.params.b_scale >> data.params.beta >> data.params.alpha >>
        data.params.noise_sigma;
    if (key != "scalars") throw std::runtime_error(path.string() + ": missing scalars");

    data.params.w = read_matrix(in, "w", path.string());
    data.params.w_y = read_matrix(in, "w_y", path.string());
    data.params.w_x = read_matrix(in, "w_x", path.string());
    data.features_a = read_matrix(in, "features_a", path.string());
    data.features_b = read_matrix(in, "features_b", path.string());
    const Eigen::MatrixXd treatments = read_matrix(in, "treatments", path.string());
    const Eigen::MatrixXd outcomes = read_matrix(in, "outcomes", path.string());
    if (treatments.rows() != outcomes.rows())
        throw std::runtime_error(path.string() + ": treatment/outcome row mismatch");

    data.samples.resize(treatments.rows());
    for (Eigen::Index i = 0; i < treatments.rows(); ++i) {
        data.samples[i].treatment = treatments.row(i);
        data.samples[i].outcomes = outcomes.row(i);
        data.samples[i].y_bar = data.samples[i].outcomes.mean();
    }
    return data;
}

}  // namespace caumax
