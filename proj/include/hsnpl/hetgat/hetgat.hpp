#pragma once

// Heterogeneous graph attention with type-level and node-level attention.
//
// For node v and each neighbor type tau present around v:
//   x_tau      = sum_{v' of type tau} A_{vv'} x_{v'}
//   a_{v,tau}  = LeakyReLU(mu_tau . [x_v || x_tau])
//   alpha_{v,.} = softmax over present types
//   b_{vv'}    = LeakyReLU(alpha_{v,tau(v')} * mu~ . (x_v (.) x_{v'}))
//   beta_{v,.} = softmax over N_v (self loop included)
//   G'         = ELU( sum_tau B_tau G_tau W_tau )
//
// The per-node value functions (type_aggregate, type_attention,
// node_attention) mirror the vectorized tape path used for training.

#include "hsnpl/core/autodiff.hpp"
#include "hsnpl/core/errors.hpp"
#include "hsnpl/core/parameters.hpp"
#include "hsnpl/core/rng.hpp"
#include "hsnpl/datasets/graph.hpp"

#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace hsnpl::hetgat {

using datasets::HeteroGraph;
using datasets::kNodeTypeCount;
using datasets::NodeType;
using Index = Eigen::Index;

inline constexpr double kLeakySlope = 0.2;

inline std::string projection_name(NodeType t) { return std::string("hetgat/proj/") + datasets::type_name(t); }
inline std::string type_attention_name(NodeType t) { return std::string("hetgat/type_att/") + datasets::type_name(t); }
inline std::string node_attention_name() { return "hetgat/node_att"; }
inline std::string layer_weight_name(std::size_t layer, NodeType t) {
    return "hetgat/layer" + std::to_string(layer) + "/" + datasets::type_name(t);
}

/// Registers projections (raw_width x q), type attention vectors (2q x 1),
/// the node attention vector (q x 1) and per-layer per-type transforms (q x q).
inline void add_parameters(ParameterStore& store, std::size_t d_post, std::size_t q, std::size_t layers, Rng& rng) {
    const auto widths = datasets::raw_widths(d_post);
    const auto qi = static_cast<Index>(q);
    for (auto t : datasets::kAllNodeTypes)
        store.add(projection_name(t), xavier(rng, static_cast<Index>(widths[datasets::type_index(t)]), qi));
    for (auto t : datasets::kAllNodeTypes) store.add(type_attention_name(t), xavier(rng, 2 * qi, 1));
    store.add(node_attention_name(), xavier(rng, qi, 1));
    for (std::size_t l = 0; l < layers; ++l)
        for (auto t : datasets::kAllNodeTypes) store.add(layer_weight_name(l, t), xavier(rng, qi, qi));
}

inline double leaky(double x) { return x > 0.0 ? x : kLeakySlope * x; }

// ---------------------------------------------------------------------------
// Per-node value functions
// ---------------------------------------------------------------------------

/// Weighted sum of v's type-tau neighbors under the normalized block A_tau;
/// the zero vector when v has no neighbor of that type.
inline Eigen::RowVectorXd type_aggregate(const HeteroGraph& g, const Matrix& x, std::size_t v, NodeType t) {
    Eigen::RowVectorXd out = Eigen::RowVectorXd::Zero(x.cols());
    for (std::size_t k = g.row_start[v]; k < g.row_start[v + 1]; ++k) {
        const auto& e = g.edges[k];
        if (g.type_of(e.dst) == t) out += e.weight * x.row(static_cast<Index>(e.dst));
    }
    return out;
}

/// alpha over the given types. `attention[t]` is mu_t (length 2q).
inline std::map<NodeType, double> type_attention(const Eigen::RowVectorXd& x_v, const std::map<NodeType, Eigen::RowVectorXd>& aggregates,
                                                 const std::map<NodeType, Eigen::VectorXd>& attention) {
    if (aggregates.empty()) throw ValidationError("type_attention: no neighbor types");
    const auto q = x_v.size();
    std::map<NodeType, double> score;
    double mx = -std::numeric_limits<double>::infinity();
    for (const auto& [t, agg] : aggregates) {
        const auto& mu = attention.at(t);
        const double a = leaky(x_v.dot(mu.head(q)) + agg.dot(mu.tail(q)));
        score[t] = a;
        mx = std::max(mx, a);
    }
    double z = 0.0;
    for (auto& [t, s] : score) z += (s = std::exp(s - mx));
    for (auto& [t, s] : score) s /= z;
    return score;
}

/// beta over v's neighbors in edge order (neighbors sorted by id).
inline std::vector<double> node_attention(const HeteroGraph& g, const Matrix& x, std::size_t v, const std::map<NodeType, double>& alpha,
                                          const Eigen::VectorXd& node_att) {
    std::vector<double> b;
    double mx = -std::numeric_limits<double>::infinity();
    const Eigen::RowVectorXd xv = x.row(static_cast<Index>(v));
    for (std::size_t k = g.row_start[v]; k < g.row_start[v + 1]; ++k) {
        const auto u = g.edges[k].dst;
        const double h = xv.cwiseProduct(x.row(static_cast<Index>(u))).dot(node_att.transpose());
        b.push_back(leaky(alpha.at(g.type_of(u)) * h));
        mx = std::max(mx, b.back());
    }
    double z = 0.0;
    for (auto& s : b) z += (s = std::exp(s - mx));
    for (auto& s : b) s /= z;
    return b;
}

// ---------------------------------------------------------------------------
// Vectorized tape path
// ---------------------------------------------------------------------------

/// Index arrays derived once per graph.
struct GraphIndex {
    Index n = 0;
    std::vector<Index> src, dst, dst_type;
    std::array<std::vector<Index>, kNodeTypeCount> type_src, type_dst;
    std::array<Matrix, kNodeTypeCount> type_weight; // (m_tau x 1)
    std::array<std::vector<Index>, kNodeTypeCount> members;
    std::vector<Index> pair_node, pair_type; // (v, tau) with tau present around v
    std::vector<Index> pair_count;           // present types per node
    std::vector<Index> degree;

    explicit GraphIndex(const HeteroGraph& g) : n(static_cast<Index>(g.node_count())) {
        std::array<std::vector<double>, kNodeTypeCount> w;
        for (const auto& e : g.edges) {
            const auto t = datasets::type_index(g.type_of(e.dst));
            src.push_back(static_cast<Index>(e.src));
            dst.push_back(static_cast<Index>(e.dst));
            dst_type.push_back(static_cast<Index>(t));
            type_src[t].push_back(static_cast<Index>(e.src));
            type_dst[t].push_back(static_cast<Index>(e.dst));
            w[t].push_back(e.weight);
        }
        for (std::size_t t = 0; t < kNodeTypeCount; ++t) {
            type_weight[t] = Eigen::Map<const Matrix>(w[t].data(), static_cast<Index>(w[t].size()), 1);
            for (auto v : g.members[t]) members[t].push_back(static_cast<Index>(v));
        }
        pair_count.assign(static_cast<std::size_t>(n), 0);
        degree.assign(static_cast<std::size_t>(n), 0);
        for (std::size_t v = 0; v < g.node_count(); ++v) {
            std::array<bool, kNodeTypeCount> present{};
            for (std::size_t k = g.row_start[v]; k < g.row_start[v + 1]; ++k) present[datasets::type_index(g.type_of(g.edges[k].dst))] = true;
            for (std::size_t t = 0; t < kNodeTypeCount; ++t)
                if (present[t]) {
                    pair_node.push_back(static_cast<Index>(v));
                    pair_type.push_back(static_cast<Index>(t));
                    ++pair_count[v];
                }
            degree[v] = static_cast<Index>(g.degree(v));
        }
    }
};

struct PropagationOptions {
    /// false replaces alpha and beta with uniform weights.
    bool dual_attention = true;
    /// Drop probability for attention weights and layer outputs; 0 disables.
    double dropout = 0.0;
    Rng* rng = nullptr;
};

/// Attention weights observed during a pass, for diagnostics and tests.
struct LayerTrace {
    Eigen::VectorXd type_weights; // in GraphIndex pair order
    Eigen::VectorXd node_weights; // in edge order
};

struct PropagationResult {
    ad::Var embeddings; // n x q after the last layer
    ad::Var inputs;     // n x q layer-0 projection
    std::vector<LayerTrace> trace;
};

/// x_v = raw_v P_{tau(v)} for every node.
inline ad::Var project_inputs(ad::Tape& tape, const HeteroGraph& g, const GraphIndex& idx, const BoundParameters& p) {
    std::optional<ad::Var> out;
    for (auto t : datasets::kAllNodeTypes) {
        const auto ti = datasets::type_index(t);
        if (idx.members[ti].empty()) continue;
        const auto proj = p[projection_name(t)];
        if (proj.rows() != g.features[ti].cols())
            throw ValidationError(std::string("projection for ") + datasets::type_name(t) + " expects width " + std::to_string(proj.rows()) +
                                  " but features have width " + std::to_string(g.features[ti].cols()));
        auto part = ad::scatter_add_rows(ad::matmul(tape.constant(g.features[ti]), proj), idx.members[ti], idx.n);
        out = out ? ad::add(*out, part) : part;
    }
    return *out;
}

namespace detail {

inline Matrix dropout_mask(Rng& rng, Index rows, Index cols, double p) {
    Matrix m(rows, cols);
    const double keep = 1.0 / (1.0 - p);
    for (Index j = 0; j < cols; ++j)
        for (Index i = 0; i < rows; ++i) m(i, j) = rng.uniform() < p ? 0.0 : keep;
    return m;
}

inline void check_finite(const Matrix& m, const std::string& what) {
    if (!m.allFinite()) throw NumericalError("non-finite values in " + what);
}

} // namespace detail

/// One propagation layer.
inline ad::Var propagate_layer(ad::Tape& tape, const GraphIndex& idx, const ad::Var& x, const BoundParameters& p, std::size_t layer,
                               const PropagationOptions& opt, LayerTrace* trace = nullptr) {
    const Index n = idx.n;
    const Index q = x.cols();
    ad::Var alpha_pairs, beta;
    if (opt.dual_attention) {
        // Type-level scores: column tau of S is mu_tau . [x_v || x_tau] for every v.
        std::vector<ad::Var> cols;
        for (auto t : datasets::kAllNodeTypes) {
            const auto ti = datasets::type_index(t);
            if (idx.members[ti].empty()) {
                cols.push_back(tape.constant(Matrix::Zero(n, 1)));
                continue;
            }
            auto agg = ad::scatter_add_rows(
                ad::scale_rows(ad::gather_rows(x, idx.type_dst[ti]), tape.constant(idx.type_weight[ti])), idx.type_src[ti], n);
            const auto mu = p[type_attention_name(t)];
            cols.push_back(ad::add(ad::matmul(x, ad::slice_rows(mu, 0, q)), ad::matmul(agg, ad::slice_rows(mu, q, q))));
        }
        const auto scores = ad::hstack(cols);
        alpha_pairs = ad::segment_softmax(ad::leaky_relu(ad::gather_elements(scores, idx.pair_node, idx.pair_type), kLeakySlope),
                                          idx.pair_node, n);
        const auto alpha = ad::scatter_elements(alpha_pairs, idx.pair_node, idx.pair_type, n, static_cast<Index>(kNodeTypeCount));
        const auto alpha_edge = ad::gather_elements(alpha, idx.src, idx.dst_type);
        const auto h = ad::matmul(ad::mul(ad::gather_rows(x, idx.src), ad::gather_rows(x, idx.dst)), p[node_attention_name()]);
        beta = ad::segment_softmax(ad::leaky_relu(ad::mul(alpha_edge, h), kLeakySlope), idx.src, n);
    } else {
        Matrix a(static_cast<Index>(idx.pair_node.size()), 1), b(static_cast<Index>(idx.src.size()), 1);
        for (std::size_t k = 0; k < idx.pair_node.size(); ++k) a(static_cast<Index>(k), 0) = 1.0 / static_cast<double>(idx.pair_count[static_cast<std::size_t>(idx.pair_node[k])]);
        for (std::size_t k = 0; k < idx.src.size(); ++k) b(static_cast<Index>(k), 0) = 1.0 / static_cast<double>(idx.degree[static_cast<std::size_t>(idx.src[k])]);
        alpha_pairs = tape.constant(std::move(a));
        beta = tape.constant(std::move(b));
    }
    if (trace) {
        trace->type_weights = alpha_pairs.value().col(0);
        trace->node_weights = beta.value().col(0);
    }
    if (opt.dropout > 0.0 && opt.rng) beta = ad::mul_const(beta, detail::dropout_mask(*opt.rng, beta.rows(), 1, opt.dropout));

    // Row v' of H is x_{v'} W_{tau(v')}; the layer output sums beta-weighted rows.
    std::optional<ad::Var> h_all;
    for (auto t : datasets::kAllNodeTypes) {
        const auto ti = datasets::type_index(t);
        if (idx.members[ti].empty()) continue;
        auto part = ad::scatter_add_rows(ad::matmul(ad::gather_rows(x, idx.members[ti]), p[layer_weight_name(layer, t)]), idx.members[ti], n);
        h_all = h_all ? ad::add(*h_all, part) : part;
    }
    auto out = ad::elu(ad::scatter_add_rows(ad::scale_rows(ad::gather_rows(*h_all, idx.dst), beta), idx.src, n));
    detail::check_finite(out.value(), "hetgat layer " + std::to_string(layer));
    if (opt.dropout > 0.0 && opt.rng) out = ad::mul_const(out, detail::dropout_mask(*opt.rng, out.rows(), out.cols(), opt.dropout));
    return out;
}

/// Projection followed by `layers` propagation layers.
inline PropagationResult propagate(ad::Tape& tape, const HeteroGraph& g, const GraphIndex& idx, const BoundParameters& p, std::size_t layers,
                                   const PropagationOptions& opt = {}, bool keep_trace = false) {
    PropagationResult r;
    r.inputs = project_inputs(tape, g, idx, p);
    detail::check_finite(r.inputs.value(), "hetgat input projection");
    r.embeddings = r.inputs;
    for (std::size_t l = 0; l < layers; ++l) {
        LayerTrace tr;
        r.embeddings = propagate_layer(tape, idx, r.embeddings, p, l, opt, keep_trace ? &tr : nullptr);
        if (keep_trace) r.trace.push_back(std::move(tr));
    }
    return r;
}

} // namespace hsnpl::hetgat
