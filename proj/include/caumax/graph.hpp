#pragma once

// Two-group network construction: edge-list ingestion, k-core coreness,
// core-periphery splitting and a preferential-attachment generator for
// synthetic runs.

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace caumax {

using Edge = std::pair<std::int32_t, std::int32_t>;

struct RawGraph {
    std::int64_t node_count = 0;
    std::vector<Edge> edges;     // normalized u < v, sorted, unique
    Eigen::MatrixXd features;    // node_count x d_in; 0x0 when absent

    bool has_features() const { return features.size() > 0; }
    std::vector<std::int32_t> degrees() const;
};

struct CorenessMap {
    std::vector<std::int32_t> coreness;  // indexed by node id
};

struct CrossEdge {
    std::int32_t source;  // local index into source group
    std::int32_t target;  // local index into target group
    double weight = 1.0;
};

struct TwoGroupNetwork {
    // Local indices are dense and 0-based within each group; *_orig_ids
    // map them back to the input graph's node ids.
    std::vector<std::int32_t> source_orig_ids;
    std::vector<std::int32_t> target_orig_ids;
    std::vector<Edge> edges_a;          // within source group (local ids)
    std::vector<Edge> edges_b;          // within target group (local ids)
    std::vector<CrossEdge> edges_ab;
    Eigen::MatrixXd features_a;
    Eigen::MatrixXd features_b;
    std::vector<std::int32_t> cross_degree;  // d_j per target node, >= 1

    std::int64_t n_source() const { return static_cast<std::int64_t>(source_orig_ids.size()); }
    std::int64_t n_target() const { return static_cast<std::int64_t>(target_orig_ids.size()); }
    std::int64_t d_in() const { return features_a.cols(); }

    // neighbors in V_A per target node, ascending (with weights aligned)
    std::vector<std::vector<std::int32_t>> source_neighbors_of_targets() const;
    std::vector<std::vector<double>> cross_weights_of_targets() const;
    // total degree (within-A plus cross) per source node
    std::vector<std::int32_t> source_total_degrees() const;
};

// Edge-list format: one "u v" pair per line, '#' starts a comment,
// blank lines ignored. Optional feature file: headerless CSV, row i =
// covariates of node i.
RawGraph load_edge_list(const std::filesystem::path& path,
                        const std::optional<std::filesystem::path>& feature_path = {});

// Largest k such that the node survives iterative peeling of nodes with
// degree < k (Batagelj-Zaversnik bucket peeling).
CorenessMap compute_coreness(const RawGraph& g);

// V_A = top ceil(p% * |V|) nodes by (coreness desc, degree desc, id asc);
// V_B = remainder restricted to nodes adjacent to V_A. Throws
// std::runtime_error when either side ends up empty.
TwoGroupNetwork core_periphery_split(const RawGraph& g, double percent);

// Preferential attachment: seed clique of (attachment+1) nodes, then
// each new node attaches to `attachment` distinct existing nodes with
// degree-proportional probability. Deterministic given seed.
RawGraph synthesize_graph(std::int64_t n, std::int32_t attachment, std::uint64_t seed);

void save_split(const TwoGroupNetwork& net, const std::filesystem::path& path,
                const std::string& config_hash);
TwoGroupNetwork load_split(const std::filesystem::path& path,
                           const std::string& expected_hash = "");

}  // namespace caumax
