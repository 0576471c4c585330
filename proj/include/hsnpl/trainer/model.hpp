#pragma once

// Full model: hetgat encoder -> subgraph encoder -> classifier heads, plus
// the contrastive and classification objectives.

#include "hsnpl/core/autodiff.hpp"
#include "hsnpl/core/parameters.hpp"
#include "hsnpl/core/rng.hpp"
#include "hsnpl/datasets/graph.hpp"
#include "hsnpl/hetgat/hetgat.hpp"
#include "hsnpl/subcon/subcon.hpp"
#include "hsnpl/trainer/config.hpp"

#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace hsnpl::trainer {

using datasets::HeteroGraph;
using Index = Eigen::Index;

struct ModelDims {
    std::size_t d_post = 768;
    std::size_t q = 512;
    std::size_t layers = 2;
    std::size_t heads = 6;

    static ModelDims from(const TrainConfig& c, std::size_t d_post) { return {d_post, c.hidden_width, c.layers, c.heads}; }
    friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

inline constexpr std::size_t kClassCount = 2;
inline std::string subgraph_head_weight() { return "heads/subgraph/W"; }
inline std::string subgraph_head_bias() { return "heads/subgraph/b"; }
inline std::string post_head_weight() { return "heads/post/W"; }
inline std::string post_head_bias() { return "heads/post/b"; }

inline ParameterStore init_parameters(const ModelDims& dims, std::uint64_t seed) {
    Rng rng(derive_seed(seed, {0x696e6974ULL}));
    ParameterStore store;
    hetgat::add_parameters(store, dims.d_post, dims.q, dims.layers, rng);
    subcon::add_parameters(store, dims.q, dims.heads, rng);
    const auto q = static_cast<Index>(dims.q);
    const auto c = static_cast<Index>(kClassCount);
    store.add(subgraph_head_weight(), xavier(rng, q, c));
    store.add(subgraph_head_bias(), Matrix::Zero(1, c));
    store.add(post_head_weight(), xavier(rng, q, c));
    store.add(post_head_bias(), Matrix::Zero(1, c));
    return store;
}

inline datasets::GraphOptions graph_options(const TrainConfig& c, std::optional<datasets::BehaviorStats> stats = {}) {
    datasets::GraphOptions o;
    o.entity_threshold = c.entity_threshold;
    o.include_symptoms = !c.disable_prompt_features;
    o.include_behavior = !c.disable_behavior_features;
    o.include_semantics = !c.disable_semantic_features;
    o.behavior_stats = std::move(stats);
    return o;
}

/// Graph plus the index structures derived from it.
struct ModelContext {
    HeteroGraph graph;
    hetgat::GraphIndex graph_index;
    subcon::SupernodeGraph supernodes;
    subcon::SubgraphIndex subgraph_index;

    explicit ModelContext(HeteroGraph g)
        : graph(std::move(g)), graph_index(graph), supernodes(subcon::build_supernode_graph(graph)), subgraph_index(graph, supernodes) {}
};

struct ForwardOptions {
    bool training = false;           // enables dropout
    std::uint64_t noise_seed = 0;    // dropout masks
    std::uint64_t corruption_seed = 0;
    bool keep_trace = false;
};

struct Encoding {
    ad::Var nodes; // n x q
    ad::Var sg;    // U x q
    std::vector<hetgat::LayerTrace> trace;
    std::vector<Eigen::VectorXd> inter_weights;
};

struct ForwardResult {
    ad::Var total;
    ad::Var loss_sub;
    std::optional<ad::Var> loss_cl;
    ad::Var regularizer;
    Encoding positive;
    ad::Var logits_subgraph; // U x 2
    ad::Var logits_post;     // U x 2
    ad::Var global;          // 1 x q
    std::optional<ad::Var> pos_logits, neg_logits;
    bool degenerate_corruption = false;
};

/// hetgat + subgraph encoder over the given graph (whose structure must match
/// ctx; only the features may differ).
inline Encoding encode(ad::Tape& tape, const ModelContext& ctx, const HeteroGraph& features, const BoundParameters& p, const TrainConfig& c,
                       Rng* dropout_rng, bool keep_trace) {
    hetgat::PropagationOptions po;
    po.dual_attention = !c.disable_dual_attention;
    po.dropout = dropout_rng ? c.dropout : 0.0;
    po.rng = dropout_rng;
    auto prop = hetgat::propagate(tape, features, ctx.graph_index, p, c.layers, po, keep_trace);
    Encoding e;
    e.nodes = prop.embeddings;
    e.trace = std::move(prop.trace);
    if (c.disable_subgraph_attention) {
        e.sg = subcon::mean_subgraph_embed(tape, ctx.subgraph_index, e.nodes);
    } else {
        const auto g = subcon::intra_subgraph_embed(ctx.subgraph_index, e.nodes, p);
        e.sg = subcon::inter_subgraph_attend(ctx.subgraph_index, g, p, c.heads, keep_trace ? &e.inter_weights : nullptr);
    }
    return e;
}

/// Builds the total loss. `labeled` selects the users whose labels enter the
/// classification loss; it may be empty (loss_sub is then 0).
inline ForwardResult forward(ad::Tape& tape, const ModelContext& ctx, const BoundParameters& p, const TrainConfig& c,
                             const std::vector<std::size_t>& labeled, const ForwardOptions& opt = {}) {
    ForwardResult r;
    std::optional<Rng> dropout_rng;
    if (opt.training && c.dropout > 0.0) dropout_rng.emplace(opt.noise_seed);
    r.positive = encode(tape, ctx, ctx.graph, p, c, dropout_rng ? &*dropout_rng : nullptr, opt.keep_trace);

    const auto& g = ctx.graph;
    std::vector<Index> post_rows;
    for (auto v : g.post_node) post_rows.push_back(static_cast<Index>(v));
    r.logits_subgraph = ad::add_row(ad::matmul(r.positive.sg, p[subgraph_head_weight()]), p[subgraph_head_bias()]);
    r.logits_post = ad::add_row(ad::matmul(ad::gather_rows(r.positive.nodes, post_rows), p[post_head_weight()]), p[post_head_bias()]);

    if (labeled.empty()) {
        r.loss_sub = tape.constant(Matrix::Zero(1, 1));
    } else {
        std::vector<Index> rows;
        std::vector<int> y;
        for (auto u : labeled) {
            rows.push_back(static_cast<Index>(u));
            y.push_back(g.labels[u]);
        }
        r.loss_sub = ad::add(ad::softmax_cross_entropy(r.logits_subgraph, rows, y), ad::softmax_cross_entropy(r.logits_post, rows, y));
    }

    r.global = subcon::readout(r.positive.sg);
    const auto users = g.user_count();
    const auto n_neg = subcon::negative_count(c.negative_sampling_rate, users);
    const bool contrastive = !c.disable_contrastive && c.alpha_cl > 0.0;
    if (contrastive) {
        r.pos_logits = subcon::discriminator_logits(r.positive.sg, r.global, p);
        std::vector<ad::Var> negatives;
        std::size_t remaining = n_neg;
        for (std::uint64_t round = 0; remaining > 0; ++round) {
            const auto cor = subcon::corrupt(g, derive_seed(opt.corruption_seed, {round}));
            r.degenerate_corruption = r.degenerate_corruption || cor.degenerate;
            std::optional<Rng> neg_rng;
            if (dropout_rng) neg_rng.emplace(derive_seed(opt.noise_seed, {0x6e6567ULL, round}));
            auto enc = encode(tape, ctx, cor.graph, p, c, neg_rng ? &*neg_rng : nullptr, false);
            const std::size_t take = std::min(remaining, users);
            if (take == users) {
                negatives.push_back(enc.sg);
            } else {
                Rng pick(derive_seed(opt.corruption_seed, {0x7069636bULL, round}));
                auto order = pick.permutation(users);
                std::vector<Index> rows(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take));
                std::sort(rows.begin(), rows.end());
                negatives.push_back(ad::gather_rows(enc.sg, rows));
            }
            remaining -= take;
        }
        if (!negatives.empty()) {
            r.neg_logits = subcon::discriminator_logits(ad::vstack(negatives), r.global, p);
            r.loss_cl = subcon::contrastive_loss(*r.pos_logits, *r.neg_logits);
        } else {
            r.loss_cl = subcon::contrastive_loss(*r.pos_logits, tape.constant(Matrix::Zero(0, 1)));
        }
    }

    r.regularizer = ad::l2_norm(p.all(), c.squared_l2);
    std::vector<ad::Var> terms = {r.loss_sub, r.regularizer};
    std::vector<double> weights = {c.beta_sub, c.l2_coeff};
    if (r.loss_cl) {
        terms.push_back(*r.loss_cl);
        weights.push_back(c.alpha_cl);
    }
    r.total = ad::weighted_sum(terms, weights);
    if (!std::isfinite(r.total.scalar())) throw NumericalError("non-finite total loss");
    return r;
}

/// argmax over the subgraph head, ties to class 0.
inline std::vector<int> predict(const ad::Var& logits) {
    std::vector<int> out;
    const auto& z = logits.value();
    for (Index i = 0; i < z.rows(); ++i) out.push_back(z(i, 1) > z(i, 0) ? 1 : 0);
    return out;
}

} // namespace hsnpl::trainer
