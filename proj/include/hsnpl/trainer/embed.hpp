#pragma once

#include "hsnpl/trainer/train.hpp"

#include <cstdio>
#include <ostream>

namespace hsnpl::trainer {

struct EmbeddingDump {
    std::vector<std::string> user_ids;
    std::vector<int> labels;
    Matrix subgraph;                // U x q
    Eigen::VectorXd disc_positive;  // D(sg_i, G')
    Eigen::VectorXd disc_negative;  // D(sg'_i, G') for one corruption
};

/// Subgraph embeddings of every user under one fold's parameters, plus the
/// discriminator outputs for the real and a corrupted graph.
inline EmbeddingDump compute_embeddings(const Checkpoint& ck, const datasets::Dataset& d, std::size_t fold) {
    if (fold >= ck.folds.size()) throw ValidationError("fold " + std::to_string(fold) + " not in checkpoint");
    if (ck.dims.d_post != d.manifest.d_post) throw ValidationError("checkpoint and dataset disagree on d_post");
    TrainConfig c = ck.config;
    const auto folds = make_folds(d, c);
    const auto setup = prepare_fold(d, c, folds[fold], fold);
    c.disable_contrastive = false;
    c.negative_sampling_rate = 1.0;
    if (c.alpha_cl <= 0.0) c.alpha_cl = 1.0;
    ad::Tape tape;
    BoundParameters bound(tape, ck.folds[fold]);
    ForwardOptions fo;
    fo.corruption_seed = derive_seed(c.seed, {0x656d62ULL, fold});
    const auto r = forward(tape, setup.context, bound, c, {}, fo);
    EmbeddingDump out;
    out.user_ids = setup.context.graph.user_ids;
    out.labels = setup.context.graph.labels;
    out.subgraph = r.positive.sg.value();
    out.disc_positive = r.pos_logits->value().col(0).unaryExpr([](double z) { return ad::sigmoid(z); });
    out.disc_negative = r.neg_logits->value().col(0).unaryExpr([](double z) { return ad::sigmoid(z); });
    return out;
}

/// TSV: header "user_id  label  sg_0 ... sg_{q-1}", one row per user.
inline void write_embeddings_tsv(const EmbeddingDump& e, std::ostream& out) {
    out << "user_id\tlabel";
    for (Eigen::Index k = 0; k < e.subgraph.cols(); ++k) out << "\tsg_" << k;
    out << '\n';
    char buf[40];
    for (std::size_t i = 0; i < e.user_ids.size(); ++i) {
        out << e.user_ids[i] << '\t' << e.labels[i];
        for (Eigen::Index k = 0; k < e.subgraph.cols(); ++k) {
            std::snprintf(buf, sizeof buf, "%.17g", e.subgraph(static_cast<Eigen::Index>(i), k));
            out << '\t' << buf;
        }
        out << '\n';
    }
}

/// JSONL: one line per user with the positive and corrupted discriminator
/// outputs.
inline void write_discriminator_jsonl(const EmbeddingDump& e, std::ostream& out) {
    for (std::size_t i = 0; i < e.user_ids.size(); ++i) {
        const auto k = static_cast<Eigen::Index>(i);
        out << nlohmann::json{{"user_id", e.user_ids[i]}, {"label", e.labels[i]}, {"d_positive", e.disc_positive(k)},
                              {"d_negative", e.disc_negative(k)}}
                   .dump()
            << '\n';
    }
}

} // namespace hsnpl::trainer
