#pragma once

// Subgraph-level encoding and the contrastive objective.
//
//   g_i   = sum_{j in U_i} sigmoid((x_ij W_intra) . alpha_intra) x_ij
//   sg_i  = (1/M) sum_m sum_{j in N_i} beta^m_ij g_j W^m
//           beta^m_i. = softmax_j LeakyReLU(a^m . [g_i W^m || g_j W^m])
//   G'    = sigmoid(mean_i sg_i)
//   D     = sigmoid(sg^T W_MI G')
//   L_cl  = -(sum_pos log D + sum_neg log(1 - D)) / (n_pos + n_neg)
//
// Users are supernodes; two users are adjacent when their subgraphs share a
// Topic or Entity node.

#include "hsnpl/core/autodiff.hpp"
#include "hsnpl/core/errors.hpp"
#include "hsnpl/core/parameters.hpp"
#include "hsnpl/core/rng.hpp"
#include "hsnpl/datasets/graph.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace hsnpl::subcon {

using datasets::HeteroGraph;
using datasets::NodeType;
using Index = Eigen::Index;

inline constexpr double kLeakySlope = 0.2;
inline constexpr double kProbabilityClamp = 1e-7;

inline std::string intra_weight_name() { return "subcon/intra/W"; }
inline std::string intra_attention_name() { return "subcon/intra/alpha"; }
inline std::string inter_weight_name(std::size_t head) { return "subcon/inter/head" + std::to_string(head) + "/W"; }
inline std::string inter_attention_name(std::size_t head) { return "subcon/inter/head" + std::to_string(head) + "/a"; }
inline std::string discriminator_name() { return "subcon/disc/W"; }

inline void add_parameters(ParameterStore& store, std::size_t q, std::size_t heads, Rng& rng) {
    if (heads == 0) throw ValidationError("at least one inter-subgraph attention head is required");
    const auto qi = static_cast<Index>(q);
    store.add(intra_weight_name(), xavier(rng, qi, qi));
    store.add(intra_attention_name(), xavier(rng, qi, 1));
    for (std::size_t m = 0; m < heads; ++m) {
        store.add(inter_weight_name(m), xavier(rng, qi, qi));
        store.add(inter_attention_name(m), xavier(rng, 2 * qi, 1));
    }
    store.add(discriminator_name(), xavier(rng, qi, qi));
}

// ---------------------------------------------------------------------------
// Supernode graph
// ---------------------------------------------------------------------------

struct SupernodeGraph {
    /// neighbors[i] sorted, always containing i.
    std::vector<std::vector<std::size_t>> neighbors;

    [[nodiscard]] std::size_t size() const { return neighbors.size(); }

    [[nodiscard]] Matrix adjacency() const {
        const auto n = static_cast<Index>(size());
        Matrix a = Matrix::Zero(n, n);
        for (std::size_t i = 0; i < size(); ++i)
            for (auto j : neighbors[i]) a(static_cast<Index>(i), static_cast<Index>(j)) = 1.0;
        return a;
    }
};

inline SupernodeGraph build_supernode_graph(const HeteroGraph& g) {
    std::vector<std::set<std::size_t>> adj(g.user_count());
    for (std::size_t i = 0; i < adj.size(); ++i) adj[i].insert(i);
    for (const auto& node : g.nodes) {
        if (node.type != NodeType::Topic && node.type != NodeType::Entity) continue;
        for (auto a : node.owners)
            for (auto b : node.owners) adj[a].insert(b);
    }
    SupernodeGraph s;
    for (const auto& nb : adj) s.neighbors.emplace_back(nb.begin(), nb.end());
    return s;
}

/// Index arrays for the tape path.
struct SubgraphIndex {
    Index users = 0;
    std::vector<Index> member_user, member_node; // one entry per (user, node in subgraph)
    std::vector<Index> super_src, super_dst;     // supernode edges incl. self loops, grouped by src
    Matrix inverse_size;                         // (member count x 1) 1/|U_i| per membership entry

    SubgraphIndex(const HeteroGraph& g, const SupernodeGraph& s) : users(static_cast<Index>(g.user_count())) {
        std::vector<double> inv;
        for (std::size_t u = 0; u < g.user_count(); ++u)
            for (auto v : g.user_nodes[u]) {
                member_user.push_back(static_cast<Index>(u));
                member_node.push_back(static_cast<Index>(v));
                inv.push_back(1.0 / static_cast<double>(g.user_nodes[u].size()));
            }
        inverse_size = Eigen::Map<const Matrix>(inv.data(), static_cast<Index>(inv.size()), 1);
        for (std::size_t i = 0; i < s.size(); ++i)
            for (auto j : s.neighbors[i]) {
                super_src.push_back(static_cast<Index>(i));
                super_dst.push_back(static_cast<Index>(j));
            }
    }
};

// ---------------------------------------------------------------------------
// Tape path
// ---------------------------------------------------------------------------

/// Gated sum of each user's node embeddings (U x q). `gates`, when given,
/// receives the per-membership gate values.
inline ad::Var intra_subgraph_embed(const SubgraphIndex& idx, const ad::Var& x, const BoundParameters& p, Eigen::VectorXd* gates = nullptr) {
    const auto members = ad::gather_rows(x, idx.member_node);
    const auto gate = ad::sigmoid(ad::matmul(ad::matmul(members, p[intra_weight_name()]), p[intra_attention_name()]));
    if (gates) *gates = gate.value().col(0);
    return ad::scatter_add_rows(ad::scale_rows(members, gate), idx.member_user, idx.users);
}

/// Mean of each user's node embeddings (used when subgraph attention is off).
inline ad::Var mean_subgraph_embed(ad::Tape& tape, const SubgraphIndex& idx, const ad::Var& x) {
    return ad::scatter_add_rows(ad::scale_rows(ad::gather_rows(x, idx.member_node), tape.constant(idx.inverse_size)), idx.member_user,
                                idx.users);
}

/// Multi-head attention over adjacent supernodes (U x q). `head_weights`,
/// when given, receives beta^m in supernode edge order for every head.
inline ad::Var inter_subgraph_attend(const SubgraphIndex& idx, const ad::Var& g, const BoundParameters& p, std::size_t heads,
                                     std::vector<Eigen::VectorXd>* head_weights = nullptr) {
    const Index q = g.cols();
    std::optional<ad::Var> sum;
    for (std::size_t m = 0; m < heads; ++m) {
        const auto h = ad::matmul(g, p[inter_weight_name(m)]);
        const auto a = p[inter_attention_name(m)];
        const auto left = ad::matmul(h, ad::slice_rows(a, 0, q));
        const auto right = ad::matmul(h, ad::slice_rows(a, q, q));
        const auto score = ad::leaky_relu(ad::add(ad::gather_rows(left, idx.super_src), ad::gather_rows(right, idx.super_dst)), kLeakySlope);
        const auto beta = ad::segment_softmax(score, idx.super_src, idx.users);
        if (head_weights) head_weights->push_back(beta.value().col(0));
        auto agg = ad::scatter_add_rows(ad::scale_rows(ad::gather_rows(h, idx.super_dst), beta), idx.super_src, idx.users);
        sum = sum ? ad::add(*sum, agg) : agg;
    }
    return ad::scale(*sum, 1.0 / static_cast<double>(heads));
}

/// G' = sigmoid(mean over users), 1 x q.
inline ad::Var readout(const ad::Var& sg) { return ad::sigmoid(ad::mean_rows(sg)); }

/// Discriminator logits sg W_MI G'^T, one per row of sg.
inline ad::Var discriminator_logits(const ad::Var& sg, const ad::Var& global, const BoundParameters& p) {
    return ad::matmul(sg, ad::matmul(p[discriminator_name()], ad::transpose(global)));
}

/// Minimizable contrastive loss from positive and negative logits.
inline ad::Var contrastive_loss(const ad::Var& pos_logits, const ad::Var& neg_logits) {
    const auto n_pos = static_cast<std::size_t>(pos_logits.rows());
    const auto n_neg = static_cast<std::size_t>(neg_logits.rows());
    if (n_pos == 0) throw ValidationError("contrastive loss needs at least one positive sample");
    const auto pos = ad::bce_sum(pos_logits, std::vector<int>(n_pos, 1), kProbabilityClamp);
    if (n_neg == 0) return ad::scale(pos, 1.0 / static_cast<double>(n_pos));
    const auto neg = ad::bce_sum(neg_logits, std::vector<int>(n_neg, 0), kProbabilityClamp);
    return ad::scale(ad::add(pos, neg), 1.0 / static_cast<double>(n_pos + n_neg));
}

// ---------------------------------------------------------------------------
// Value-level helpers
// ---------------------------------------------------------------------------

inline double discriminate(const Eigen::VectorXd& sg, const Eigen::VectorXd& global, const Matrix& w_mi) {
    return ad::sigmoid(sg.dot(w_mi * global));
}

/// Same formula as contrastive_loss, from discriminator probabilities.
inline double contrastive_loss(std::span<const double> pos_prob, std::span<const double> neg_prob) {
    if (pos_prob.empty()) throw ValidationError("contrastive loss needs at least one positive sample");
    double s = 0.0;
    for (double d : pos_prob) s += std::log(std::clamp(d, kProbabilityClamp, 1.0 - kProbabilityClamp));
    for (double d : neg_prob) s += std::log(1.0 - std::clamp(d, kProbabilityClamp, 1.0 - kProbabilityClamp));
    return -s / static_cast<double>(pos_prob.size() + neg_prob.size());
}

// ---------------------------------------------------------------------------
// Corruption
// ---------------------------------------------------------------------------

struct Corruption {
    HeteroGraph graph;
    /// perms[t][k]: the corrupted row k of type t takes original row perms[t][k].
    std::array<std::vector<std::size_t>, datasets::kNodeTypeCount> perms;
    /// True when every permutation is the identity (negatives == positives).
    bool degenerate = false;
};

/// Shuffles raw feature rows within each node type; structure, types and
/// owner sets are untouched.
inline Corruption corrupt(const HeteroGraph& g, std::uint64_t seed) {
    Corruption c;
    Rng rng(seed);
    std::array<Matrix, datasets::kNodeTypeCount> feats;
    c.degenerate = true;
    for (std::size_t t = 0; t < datasets::kNodeTypeCount; ++t) {
        const auto rows = static_cast<std::size_t>(g.features[t].rows());
        c.perms[t] = rng.permutation(rows);
        feats[t] = Matrix(g.features[t].rows(), g.features[t].cols());
        for (std::size_t k = 0; k < rows; ++k) {
            feats[t].row(static_cast<Index>(k)) = g.features[t].row(static_cast<Index>(c.perms[t][k]));
            if (c.perms[t][k] != k) c.degenerate = false;
        }
    }
    c.graph = g.with_features(std::move(feats));
    return c;
}

/// round(rate * n_pos); a non-positive rate disables negatives.
inline std::size_t negative_count(double rate, std::size_t n_pos) {
    if (rate <= 0.0) return 0;
    return static_cast<std::size_t>(std::llround(rate * static_cast<double>(n_pos)));
}

} // namespace hsnpl::subcon
