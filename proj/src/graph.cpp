#include "caumax/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include "caumax/io_util.hpp"
#include "caumax/rng.hpp"

namespace caumax {

namespace {

std::vector<Edge> normalize_edges(std::vector<Edge> edges) {
    for (auto& [u, v] : edges)
        if (u > v) std::swap(u, v);
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    return edges;
}

std::vector<std::vector<std::int32_t>> adjacency(std::int64_t n, const std::vector<Edge>& edges) {
    std::vector<std::vector<std::int32_t>> adj(n);
    for (const auto& [u, v] : edges) {
        adj[u].push_back(v);
        adj[v].push_back(u);
    }
    return adj;
}

}  // namespace

std::vector<std::int32_t> RawGraph::degrees() const {
    std::vector<std::int32_t> deg(node_count, 0);
    for (const auto& [u, v] : edges) {
        ++deg[u];
        ++deg[v];
    }
    return deg;
}

std::vector<std::vector<std::int32_t>> TwoGroupNetwork::source_neighbors_of_targets() const {
    std::vector<std::vector<std::int32_t>> nbrs(target_orig_ids.size());
    for (const auto& e : edges_ab) nbrs[e.target].push_back(e.source);
    return nbrs;
}

std::vector<std::vector<double>> TwoGroupNetwork::cross_weights_of_targets() const {
    std::vector<std::vector<double>> w(target_orig_ids.size());
    for (const auto& e : edges_ab) w[e.target].push_back(e.weight);
    return w;
}

std::vector<std::int32_t> TwoGroupNetwork::source_total_degrees() const {
    std::vector<std::int32_t> deg(source_orig_ids.size(), 0);
    for (const auto& [u, v] : edges_a) {
        ++deg[u];
        ++deg[v];
    }
    for (const auto& e : edges_ab) ++deg[e.source];
    return deg;
}

RawGraph load_edge_list(const std::filesystem::path& path,
                        const std::optional<std::filesystem::path>& feature_path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open edge list: " + path.string());

    RawGraph g;
    std::string line;
    std::int64_t line_no = 0;
    std::int64_t max_id = -1;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        long long u, v;
        if (!(ls >> u)) continue;  // blank or comment-only line
        std::string trailing;
        if (!(ls >> v) || (ls >> trailing) || u < 0 || v < 0)
            throw std::runtime_error("parse error in " + path.string() + " at line " +
                                     std::to_string(line_no));
        if (u == v)
            throw std::runtime_error("self-loop in " + path.string() + " at line " +
                                     std::to_string(line_no));
        g.edges.emplace_back(static_cast<std::int32_t>(u), static_cast<std::int32_t>(v));
        max_id = std::max({max_id, static_cast<std::int64_t>(u), static_cast<std::int64_t>(v)});
    }
    g.node_count = max_id + 1;
    g.edges = normalize_edges(std::move(g.edges));

    if (feature_path) {
        g.features = load_csv_matrix(*feature_path);
        if (g.features.rows() < g.node_count)
            throw std::runtime_error("feature file " + feature_path->string() + " has " +
                                     std::to_string(g.features.rows()) + " rows, graph has " +
                                     std::to_string(g.node_count) + " nodes");
        g.node_count = g.features.rows();
    }
    return g;
}

CorenessMap compute_coreness(const RawGraph& g) {
    const std::int64_t n = g.node_count;
    std::vector<std::int32_t> deg = g.degrees();
    auto adj = adjacency(n, g.edges);

    // Bucket sort nodes by degree, then peel in nondecreasing order.
    std::int32_t max_deg = 0;
    for (auto d : deg) max_deg = std::max(max_deg, d);
    std::vector<std::int64_t> bucket_start(max_deg + 2, 0);
    for (auto d : deg) ++bucket_start[d + 1];
    for (std::int32_t d = 0; d <= max_deg; ++d) bucket_start[d + 1] += bucket_start[d];

    std::vector<std::int64_t> pos(n);
    std::vector<std::int32_t> order(n);
    {
        std::vector<std::int64_t> fill = bucket_start;
        for (std::int32_t v = 0; v < n; ++v) {
            pos[v] = fill[deg[v]]++;
            order[pos[v]] = v;
        }
    }

    // Peel in nondecreasing current-degree order; a demoted neighbor is
    // swapped to the front of its bucket, which then shrinks by one.
    std::vector<std::int32_t> cur = deg;
    for (std::int64_t i = 0; i < n; ++i) {
        const std::int32_t v = order[i];
        for (std::int32_t u : adj[v]) {
            if (cur[u] > cur[v]) {
                const std::int64_t pu = pos[u];
                const std::int64_t pw = bucket_start[cur[u]];
                const std::int32_t w = order[pw];
                if (u != w) {
                    std::swap(order[pu], order[pw]);
                    std::swap(pos[u], pos[w]);
                }
                ++bucket_start[cur[u]];
                --cur[u];
            }
        }
    }
    return CorenessMap{std::move(cur)};
}

TwoGroupNetwork core_periphery_split(const RawGraph& g, double percent) {
    if (percent <= 0.0 || percent >= 100.0)
        throw std::runtime_error("split percent must lie in (0,100), got " +
                                 std::to_string(percent));
    const std::int64_t n = g.node_count;
    if (n == 0) throw std::runtime_error("cannot split an empty graph");

    const CorenessMap cm = compute_coreness(g);
    const auto deg = g.degrees();

    std::vector<std::int32_t> ranked(n);
    std::iota(ranked.begin(), ranked.end(), 0);
    std::stable_sort(ranked.begin(), ranked.end(), [&](std::int32_t a, std::int32_t b) {
        if (cm.coreness[a] != cm.coreness[b]) return cm.coreness[a] > cm.coreness[b];
        if (deg[a] != deg[b]) return deg[a] > deg[b];
        return a < b;
    });

    const auto n_core = static_cast<std::int64_t>(
        std::ceil(percent / 100.0 * static_cast<double>(n)));
    if (n_core <= 0) throw std::runtime_error("split yields empty source group");
    if (n_core >= n) throw std::runtime_error("split yields empty target group");

    std::vector<bool> in_source(n, false);
    for (std::int64_t i = 0; i < n_core; ++i) in_source[ranked[i]] = true;

    // Restrict targets to nodes adjacent to at least one source node.
    std::vector<bool> touched(n, false);
    for (const auto& [u, v] : g.edges) {
        if (in_source[u] && !in_source[v]) touched[v] = true;
        if (in_source[v] && !in_source[u]) touched[u] = true;
    }

    TwoGroupNetwork net;
    std::vector<std::int32_t> local(n, -1);
    for (std::int32_t v = 0; v < n; ++v)
        if (in_source[v]) {
            local[v] = static_cast<std::int32_t>(net.source_orig_ids.size());
            net.source_orig_ids.push_back(v);
        }
    for (std::int32_t v = 0; v < n; ++v)
        if (!in_source[v] && touched[v]) {
            local[v] = static_cast<std::int32_t>(net.target_orig_ids.size());
            net.target_orig_ids.push_back(v);
        }
    if (net.target_orig_ids.empty())
        throw std::runtime_error("split yields empty target group after restriction");

    for (const auto& [u, v] : g.edges) {
        const bool su = in_source[u], sv = in_source[v];
        if (su && sv) {
            net.edges_a.emplace_back(std::min(local[u], local[v]),
                                     std::max(local[u], local[v]));
        } else if (!su && !sv) {
            if (local[u] >= 0 && local[v] >= 0)
                net.edges_b.emplace_back(std::min(local[u], local[v]),
                                         std::max(local[u], local[v]));
        } else {
            const std::int32_t s = su ? u : v;
            const std::int32_t t = su ? v : u;
            net.edges_ab.push_back({local[s], local[t], 1.0});
        }
    }
    std::sort(net.edges_a.begin(), net.edges_a.end());
    std::sort(net.edges_b.begin(), net.edges_b.end());
    std::sort(net.edges_ab.begin(), net.edges_ab.end(), [](const CrossEdge& a, const CrossEdge& b) {
        return std::tie(a.source, a.target) < std::tie(b.source, b.target);
    });

    net.cross_degree.assign(net.target_orig_ids.size(), 0);
    for (const auto& e : net.edges_ab) ++net.cross_degree[e.target];

    if (g.has_features()) {
        net.features_a.resize(net.n_source(), g.features.cols());
        for (std::int64_t i = 0; i < net.n_source(); ++i)
            net.features_a.row(i) = g.features.row(net.source_orig_ids[i]);
        net.features_b.resize(net.n_target(), g.features.cols());
        for (std::int64_t j = 0; j < net.n_target(); ++j)
            net.features_b.row(j) = g.features.row(net.target_orig_ids[j]);
    }
    return net;
}

RawGraph synthesize_graph(std::int64_t n, std::int32_t attachment, std::uint64_t seed) {
    if (attachment < 1) throw std::invalid_argument("attachment must be >= 1");
    if (n < attachment + 1)
        throw std::invalid_argument("need n >= attachment+1, got n=" + std::to_string(n) +
                                    " attachment=" + std::to_string(attachment));
    RawGraph g;
    g.node_count = n;

    // endpoint list doubles as the degree-proportional sampling urn
    std::vector<std::int32_t> urn;
    for (std::int32_t u = 0; u < attachment + 1; ++u)
        for (std::int32_t v = u + 1; v < attachment + 1; ++v) {
            g.edges.emplace_back(u, v);
            urn.push_back(u);
            urn.push_back(v);
        }

    rng::Stream stream(seed, "pa_graph");
    std::set<std::int32_t> picked;
    for (std::int32_t v = attachment + 1; v < n; ++v) {
        picked.clear();
        while (static_cast<std::int32_t>(picked.size()) < attachment)
            picked.insert(urn[stream.below(urn.size())]);
        for (std::int32_t u : picked) {
            g.edges.emplace_back(u, v);
            urn.push_back(u);
            urn.push_back(v);
        }
    }
    g.edges = normalize_edges(std::move(g.edges));
    return g;
}

void save_split(const TwoGroupNetwork& net, const std::filesystem::path& path,
                const std::string& config_hash) {
    std::ostringstream out;
    out << "CAUMAX-SPLIT v1\n";
    out << "config_hash " << config_hash << "\n";
    out << "n_source " << net.n_source() << " n_target " << net.n_target() << "\n";
    out << "source_ids";
    for (auto id : net.source_orig_ids) out << " " << id;
    out << "\ntarget_ids";
    for (auto id : net.target_orig_ids) out << " " << id;
    out << "\nedges_a " << net.edges_a.size() << "\n";
    for (const auto& [u, v] : net.edges_a) out << u << " " << v << "\n";
    out << "edges_b " << net.edges_b.size() << "\n";
    for (const auto& [u, v] : net.edges_b) out << u << " " << v << "\n";
    out << "edges_ab " << net.edges_ab.size() << "\n";
    for (const auto& e : net.edges_ab)
        out << e.source << " " << e.target << " " << format_double(e.weight) << "\n";
    atomic_write(path, out.str());
}

TwoGroupNetwork load_split(const std::filesystem::path& path, const std::string& expected_hash) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open split file: " + path.string());
    std::string magic, version;
    in >> magic >> version;
    if (magic != "CAUMAX-SPLIT" || version != "v1")
        throw std::runtime_error(path.string() + ": expected magic \"CAUMAX-SPLIT v1\"");
    std::string key, hash;
    in >> key >> hash;
    if (key != "config_hash") throw std::runtime_error(path.string() + ": missing config_hash");
    if (!expected_hash.empty() && hash != expected_hash)
        throw std::runtime_error(path.string() + ": config hash mismatch (" + hash +
                                 " vs expected " + expected_hash + ")");

    TwoGroupNetwork net;
    std::int64_t ns, nt;
    std::string tok;
    in >> tok >> ns >> tok >> nt;
    in >> tok;  // source_ids
    net.source_orig_ids.resize(ns);
    for (auto& id : net.source_orig_ids) in >> id;
    in >> tok;  // target_ids
    net.target_orig_ids.resize(nt);
    for (auto& id : net.target_orig_ids) in >> id;

    std::size_t count;
    in >> tok >> count;
    net.edges_a.resize(count);
    for (auto& [u, v] : net.edges_a) in >> u >> v;
    in >> tok >> count;
    net.edges_b.resize(count);
    for (auto& [u, v] : net.edges_b) in >> u >> v;
    in >> tok >> count;
    net.edges_ab.resize(count);
    for (auto& e : net.edges_ab) in >> e.source >> e.target >> e.weight;
    if (!in) throw std::runtime_error(path.string() + ": truncated split file");

    net.cross_degree.assign(nt, 0);
    for (const auto& e : net.edges_ab) ++net.cross_degree[e.target];
    return net;
}

}  // namespace caumax
