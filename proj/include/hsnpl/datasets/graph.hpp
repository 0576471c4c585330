#pragma once

// Heterogeneous user graph. Every user contributes a Post node (its hub), a
// Symptom node and a Behavior node; Topic and Entity nodes are shared between
// the users that reference them. Entities are also linked to each other when
// the cosine similarity of their embeddings exceeds a threshold.

#include "hsnpl/core/errors.hpp"
#include "hsnpl/datasets/behavior.hpp"
#include "hsnpl/datasets/records.hpp"
#include "hsnpl/sds/mapping.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace hsnpl::datasets {

enum class NodeType : int { Post = 0, Topic = 1, Entity = 2, Symptom = 3, Behavior = 4 };
inline constexpr std::size_t kNodeTypeCount = 5;
inline constexpr std::array<NodeType, kNodeTypeCount> kAllNodeTypes = {NodeType::Post, NodeType::Topic, NodeType::Entity,
                                                                     NodeType::Symptom, NodeType::Behavior};
inline constexpr std::array<const char*, kNodeTypeCount> kNodeTypeNames = {"post", "topic", "entity", "symptom", "behavior"};
inline constexpr std::size_t kSymptomWidth = 4;

constexpr std::size_t type_index(NodeType t) { return static_cast<std::size_t>(t); }
inline const char* type_name(NodeType t) { return kNodeTypeNames[type_index(t)]; }

/// Raw feature width of each node type for a given post embedding width.
inline std::array<std::size_t, kNodeTypeCount> raw_widths(std::size_t d_post) {
    return {d_post, d_post, d_post, kSymptomWidth, BehaviorFeatures::kDims};
}

struct GraphNode {
    std::string key;
    NodeType type = NodeType::Post;
    std::vector<std::size_t> owners; // user indices, sorted
};

/// Directed half of an undirected edge; `weight` is the row-normalized
/// adjacency A_{src,dst} within the block of dst's type.
struct Edge {
    std::size_t src = 0;
    std::size_t dst = 0;
    double weight = 0.0;
};

struct GraphOptions {
    double entity_threshold = 0.5;
    bool include_symptoms = true;
    bool include_behavior = true;
    bool include_semantics = true; // topics and entities
    /// Normalization statistics; when empty they are fitted on all records.
    std::optional<BehaviorStats> behavior_stats;
};

class HeteroGraph {
public:
    using Matrix = Eigen::MatrixXd;

    std::vector<GraphNode> nodes;
    /// Raw features per type; row k belongs to node members[type][k].
    std::array<Matrix, kNodeTypeCount> features;
    std::array<std::vector<std::size_t>, kNodeTypeCount> members;
    /// Position of each node within its type's member list.
    std::vector<std::size_t> local_index;
    /// Sorted by (src, dst); includes one self loop per node.
    std::vector<Edge> edges;
    /// edges[row_start[v] .. row_start[v+1]) have src == v.
    std::vector<std::size_t> row_start;

    std::vector<std::string> user_ids;
    std::vector<int> labels;
    std::vector<std::size_t> post_node;
    /// Nodes of each user's subgraph, sorted.
    std::vector<std::vector<std::size_t>> user_nodes;
    std::size_t d_post = 0;

    [[nodiscard]] std::size_t node_count() const { return nodes.size(); }
    [[nodiscard]] std::size_t user_count() const { return user_ids.size(); }
    [[nodiscard]] NodeType type_of(std::size_t v) const { return nodes[v].type; }
    [[nodiscard]] bool has_type(NodeType t) const { return !members[type_index(t)].empty(); }

    /// Raw feature row of node v.
    [[nodiscard]] Eigen::RowVectorXd raw_feature(std::size_t v) const {
        return features[type_index(nodes[v].type)].row(static_cast<Eigen::Index>(local_index[v]));
    }

    /// Dense n x n block A_tau: row v holds A_{v,v'} for neighbors v' of type tau.
    [[nodiscard]] Matrix adjacency_block(NodeType t) const {
        const auto n = static_cast<Eigen::Index>(node_count());
        Matrix a = Matrix::Zero(n, n);
        for (const auto& e : edges)
            if (nodes[e.dst].type == t) a(static_cast<Eigen::Index>(e.src), static_cast<Eigen::Index>(e.dst)) = e.weight;
        return a;
    }

    /// Unweighted dense adjacency including self loops.
    [[nodiscard]] Matrix adjacency() const {
        const auto n = static_cast<Eigen::Index>(node_count());
        Matrix a = Matrix::Zero(n, n);
        for (const auto& e : edges) a(static_cast<Eigen::Index>(e.src), static_cast<Eigen::Index>(e.dst)) = 1.0;
        return a;
    }

    [[nodiscard]] std::size_t degree(std::size_t v) const { return row_start[v + 1] - row_start[v]; }

    /// Same structure with replaced per-type features (used for corruption).
    [[nodiscard]] HeteroGraph with_features(std::array<Matrix, kNodeTypeCount> replacement) const {
        for (std::size_t t = 0; t < kNodeTypeCount; ++t)
            if (replacement[t].rows() != features[t].rows() || replacement[t].cols() != features[t].cols())
                throw ValidationError(std::string("replacement features for ") + kNodeTypeNames[t] + " have the wrong shape");
        HeteroGraph g = *this;
        g.features = std::move(replacement);
        return g;
    }
};

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

/// Builds the global graph over all records. Only topics and entities
/// referenced by at least one user become nodes.
inline HeteroGraph build_hetero_graph(std::span<const UserRecord> records, const Vocabulary& vocab, const GraphOptions& options = {}) {
    if (options.entity_threshold < -1.0 || options.entity_threshold > 1.0)
        throw ValidationError("entity threshold must lie in [-1, 1]");
    if (records.empty()) throw ValidationError("cannot build a graph with no users");
    HeteroGraph g;
    g.d_post = records.front().post_embedding.size();
    const auto widths = raw_widths(g.d_post);

    std::vector<std::size_t> all(records.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const BehaviorStats stats = options.behavior_stats ? *options.behavior_stats : BehaviorStats::fit(records, all);

    std::array<std::vector<std::vector<double>>, kNodeTypeCount> rows;
    auto add_node = [&](std::string key, NodeType t, std::vector<double> feature) {
        const std::size_t id = g.nodes.size();
        g.nodes.push_back({std::move(key), t, {}});
        g.local_index.push_back(g.members[type_index(t)].size());
        g.members[type_index(t)].push_back(id);
        rows[type_index(t)].push_back(std::move(feature));
        return id;
    };

    std::set<std::pair<std::size_t, std::size_t>> undirected;
    auto link = [&](std::size_t a, std::size_t b) { undirected.insert(std::minmax(a, b)); };

    // Posts first so that post node id == user index.
    for (std::size_t u = 0; u < records.size(); ++u) {
        const auto& r = records[u];
        if (r.post_embedding.size() != g.d_post) throw ValidationError("user " + r.user_id + ": inconsistent post_embedding width");
        g.user_ids.push_back(r.user_id);
        g.labels.push_back(r.label);
        g.post_node.push_back(add_node("post:" + r.user_id, NodeType::Post, r.post_embedding));
    }
    g.user_nodes.resize(records.size());

    if (options.include_semantics) {
        std::map<std::string, std::vector<std::size_t>> topic_users, entity_users;
        for (std::size_t u = 0; u < records.size(); ++u) {
            for (const auto& t : records[u].topic_ids) topic_users[t].push_back(u);
            for (const auto& e : records[u].entity_ids) entity_users[e].push_back(u);
        }
        auto add_shared = [&](const auto& by_id, const auto& table, NodeType type, const char* prefix) {
            std::vector<std::size_t> ids;
            for (const auto& [key, users] : by_id) {
                auto it = table.find(key);
                if (it == table.end()) throw ValidationError(std::string("unknown ") + type_name(type) + " id \"" + key + "\"");
                const auto v = add_node(std::string(prefix) + key, type, it->second);
                g.nodes[v].owners = users;
                for (auto u : users) {
                    link(g.post_node[u], v);
                    g.user_nodes[u].push_back(v);
                }
                ids.push_back(v);
            }
            return ids;
        };
        add_shared(topic_users, vocab.topics, NodeType::Topic, "topic:");
        const auto entity_nodes = add_shared(entity_users, vocab.entities, NodeType::Entity, "entity:");
        for (std::size_t a = 0; a < entity_nodes.size(); ++a) {
            const auto& fa = rows[type_index(NodeType::Entity)][g.local_index[entity_nodes[a]]];
            for (std::size_t b = a + 1; b < entity_nodes.size(); ++b) {
                const auto& fb = rows[type_index(NodeType::Entity)][g.local_index[entity_nodes[b]]];
                if (cosine_similarity(fa, fb) > options.entity_threshold) link(entity_nodes[a], entity_nodes[b]);
            }
        }
    }

    for (std::size_t u = 0; u < records.size(); ++u) {
        const auto& r = records[u];
        if (options.include_symptoms) {
            const auto sv = sds::aggregate_degrees(r.sds_answers);
            const auto v = add_node("symptom:" + r.user_id, NodeType::Symptom, {sv.normalized.begin(), sv.normalized.end()});
            g.nodes[v].owners = {u};
            link(g.post_node[u], v);
            g.user_nodes[u].push_back(v);
        }
        if (options.include_behavior) {
            const auto flat = normalize_behavior(r.behavior, stats).flatten();
            const auto v = add_node("behavior:" + r.user_id, NodeType::Behavior, {flat.begin(), flat.end()});
            g.nodes[v].owners = {u};
            link(g.post_node[u], v);
            g.user_nodes[u].push_back(v);
        }
        g.nodes[g.post_node[u]].owners = {u};
        g.user_nodes[u].push_back(g.post_node[u]);
        std::sort(g.user_nodes[u].begin(), g.user_nodes[u].end());
    }

    for (std::size_t t = 0; t < kNodeTypeCount; ++t) {
        const auto& rs = rows[t];
        g.features[t] = HeteroGraph::Matrix(static_cast<Eigen::Index>(rs.size()), static_cast<Eigen::Index>(widths[t]));
        for (std::size_t k = 0; k < rs.size(); ++k)
            for (std::size_t i = 0; i < widths[t]; ++i) g.features[t](static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) = rs[k][i];
    }

    // Adjacency lists with self loops, then per-type row normalization.
    const std::size_t n = g.nodes.size();
    std::vector<std::vector<std::size_t>> adj(n);
    for (std::size_t v = 0; v < n; ++v) adj[v].push_back(v);
    for (const auto& [a, b] : undirected) {
        adj[a].push_back(b);
        adj[b].push_back(a);
    }
    g.row_start.assign(n + 1, 0);
    for (std::size_t v = 0; v < n; ++v) {
        auto& nb = adj[v];
        std::sort(nb.begin(), nb.end());
        std::array<std::size_t, kNodeTypeCount> per_type{};
        for (auto w : nb) ++per_type[type_index(g.nodes[w].type)];
        g.row_start[v] = g.edges.size();
        for (auto w : nb)
            g.edges.push_back({v, w, 1.0 / static_cast<double>(per_type[type_index(g.nodes[w].type)])});
    }
    g.row_start[n] = g.edges.size();
    return g;
}

inline HeteroGraph build_hetero_graph(const Dataset& d, const GraphOptions& options) {
    return build_hetero_graph(d.records, d.vocab, options);
}

} // namespace hsnpl::datasets
