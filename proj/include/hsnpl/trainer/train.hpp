#pragma once

// k-fold training and evaluation.
//
// The graph is transductive: every fold builds the global graph over all
// users (behavior statistics fitted on the fold's training users only) and
// only training labels enter the loss. Within the training users a stratified
// holdout drives early stopping.

#include "hsnpl/core/errors.hpp"
#include "hsnpl/core/rng.hpp"
#include "hsnpl/datasets/behavior.hpp"
#include "hsnpl/datasets/graph.hpp"
#include "hsnpl/datasets/kfold.hpp"
#include "hsnpl/datasets/records.hpp"
#include "hsnpl/trainer/checkpoint.hpp"
#include "hsnpl/trainer/config.hpp"
#include "hsnpl/trainer/metrics.hpp"
#include "hsnpl/trainer/model.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

namespace hsnpl::trainer {

/// Thrown when the loss or a gradient stops being finite. Carries the last
/// parameters that produced a finite step.
class TrainingDiverged : public NumericalError {
public:
    TrainingDiverged(const std::string& what, std::size_t fold, std::size_t epoch, ParameterStore last_good)
        : NumericalError(what), fold_(fold), epoch_(epoch), last_good_(std::move(last_good)) {}

    [[nodiscard]] std::size_t fold() const { return fold_; }
    [[nodiscard]] std::size_t epoch() const { return epoch_; }
    [[nodiscard]] const ParameterStore& last_good() const { return last_good_; }

private:
    std::size_t fold_, epoch_;
    ParameterStore last_good_;
};

struct FoldSetup {
    datasets::Fold fold;
    std::vector<std::size_t> fit;        // training users whose labels enter the loss
    std::vector<std::size_t> validation; // early-stopping holdout
    ModelContext context;
};

inline FoldSetup prepare_fold(const datasets::Dataset& d, const TrainConfig& c, const datasets::Fold& fold, std::size_t fold_index) {
    const auto stats = datasets::BehaviorStats::fit(d.records, fold.train);
    ModelContext ctx(datasets::build_hetero_graph(d.records, d.vocab, graph_options(c, stats)));
    const auto labels = d.labels();
    auto [fit, val] = datasets::stratified_holdout(fold.train, labels, c.validation_fraction, derive_seed(c.seed, {0x76616cULL, fold_index}));
    if (val.empty()) val = fit;
    return {fold, std::move(fit), std::move(val), std::move(ctx)};
}

inline std::vector<datasets::Fold> make_folds(const datasets::Dataset& d, const TrainConfig& c) {
    const auto labels = d.labels();
    return datasets::kfold_split(labels, c.n_folds, c.seed);
}

struct Evaluation {
    Confusion counts;
    double loss = 0.0; // classification loss on the evaluated users
};

/// Deterministic inference (no dropout) on `users`.
inline Evaluation evaluate_users(const ModelContext& ctx, const ParameterStore& params, const TrainConfig& c,
                                 const std::vector<std::size_t>& users) {
    TrainConfig eval_cfg = c;
    eval_cfg.disable_contrastive = true;
    ad::Tape tape;
    BoundParameters bound(tape, params);
    const auto r = forward(tape, ctx, bound, eval_cfg, users);
    const auto pred = predict(r.logits_subgraph);
    std::vector<int> p, y;
    for (auto u : users) {
        p.push_back(pred[u]);
        y.push_back(ctx.graph.labels[u]);
    }
    return {confusion(p, y), r.loss_sub.scalar()};
}

struct FoldResult {
    ParameterStore best;
    std::size_t best_epoch = 0;
    std::size_t last_improvement = 0; // first epoch reaching the best validation F1
    std::size_t epochs_run = 0;
    double best_val_f1 = 0.0;
};

/// SGD with momentum: v <- mu v + g; theta <- theta - lr v.
inline void sgd_momentum_step(ParameterStore& params, ParameterStore& velocity, const ParameterStore& grads, double lr, double mu) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        velocity.at(i) = mu * velocity.at(i) + grads.at(i);
        params.at(i) -= lr * velocity.at(i);
    }
}

inline FoldResult train_fold(const FoldSetup& setup, const TrainConfig& c, std::size_t fold_index, std::ostream* log = nullptr) {
    const auto dims = ModelDims::from(c, setup.context.graph.d_post);
    ParameterStore params = init_parameters(dims, derive_seed(c.seed, {0x666f6c64ULL, fold_index}));
    ParameterStore velocity = params.zeros_like();
    const bool contrastive = !c.disable_contrastive && c.alpha_cl > 0.0;

    FoldResult result;
    result.best = params;
    double best_f1 = -1.0;
    double best_loss = std::numeric_limits<double>::infinity();
    for (std::size_t epoch = 1; epoch <= c.epochs; ++epoch) {
        ForwardOptions opt;
        opt.training = true;
        opt.noise_seed = derive_seed(c.seed, {fold_index, epoch, 1});
        opt.corruption_seed = derive_seed(c.seed, {fold_index, epoch, 2});

        ad::Tape tape;
        BoundParameters bound(tape, params);
        ForwardResult fr;
        try {
            fr = forward(tape, setup.context, bound, c, setup.fit, opt);
        } catch (const NumericalError& e) {
            throw TrainingDiverged("fold " + std::to_string(fold_index) + " epoch " + std::to_string(epoch) + ": " + e.what(), fold_index, epoch,
                                   params);
        }
        tape.backward(fr.total);
        const auto grads = bound.gradients(tape);
        for (std::size_t i = 0; i < grads.size(); ++i)
            if (!grads.at(i).allFinite())
                throw TrainingDiverged("fold " + std::to_string(fold_index) + " epoch " + std::to_string(epoch) + ": non-finite gradient for " +
                                           grads.names()[i],
                                       fold_index, epoch, params);
        sgd_momentum_step(params, velocity, grads, c.learning_rate, c.momentum);

        const auto val = evaluate_users(setup.context, params, c, setup.validation);
        const double val_f1 = val.counts.f1();
        if (log) {
            nlohmann::json line = {{"fold", fold_index},
                                   {"epoch", epoch},
                                   {"loss_total", fr.total.scalar()},
                                   {"loss_sub", fr.loss_sub.scalar()},
                                   {"loss_cl", fr.loss_cl ? nlohmann::json(fr.loss_cl->scalar()) : nlohmann::json(nullptr)},
                                   {"alpha_cl", contrastive ? c.alpha_cl : 0.0},
                                   {"l2", fr.regularizer.scalar()},
                                   {"val_f1", val_f1},
                                   {"val_loss", val.loss}};
            if (fr.degenerate_corruption) line["degenerate_corruption"] = true;
            *log << line.dump() << '\n';
        }
        result.epochs_run = epoch;
        if (val_f1 > best_f1) {
            best_f1 = val_f1;
            best_loss = val.loss;
            result.best = params;
            result.best_epoch = epoch;
            result.last_improvement = epoch;
        } else if (val_f1 == best_f1 && val.loss < best_loss) {
            best_loss = val.loss;
            result.best = params;
            result.best_epoch = epoch;
        }
        if (epoch - result.last_improvement >= c.patience) break;
    }
    result.best_val_f1 = std::max(best_f1, 0.0);
    return result;
}

struct TrainResult {
    Checkpoint checkpoint;
    MetricsReport test_metrics;
};

/// Trains one model per fold and scores each on its test users.
inline TrainResult train(const datasets::Dataset& d, const TrainConfig& c, std::ostream* log = nullptr) {
    c.validate();
    const auto folds = make_folds(d, c);
    TrainResult r;
    r.checkpoint.config = c;
    r.checkpoint.dims = ModelDims::from(c, d.manifest.d_post);
    for (std::size_t f = 0; f < folds.size(); ++f) {
        const auto setup = prepare_fold(d, c, folds[f], f);
        auto fr = train_fold(setup, c, f, log);
        const auto test = evaluate_users(setup.context, fr.best, c, folds[f].test);
        r.test_metrics.folds.push_back(FoldMetrics::from(test.counts, fr.best_epoch));
        r.checkpoint.folds.push_back(std::move(fr.best));
        r.checkpoint.best_epochs.push_back(fr.best_epoch);
    }
    r.test_metrics.finalize();
    return r;
}

/// Scores a checkpoint on the test users of each fold.
inline MetricsReport evaluate(const Checkpoint& ck, const datasets::Dataset& d, std::size_t n_folds) {
    if (ck.dims.d_post != d.manifest.d_post)
        throw ValidationError("checkpoint expects d_post " + std::to_string(ck.dims.d_post) + " but dataset has " +
                              std::to_string(d.manifest.d_post));
    if (n_folds != ck.folds.size())
        throw ValidationError("checkpoint holds " + std::to_string(ck.folds.size()) + " folds, requested " + std::to_string(n_folds));
    TrainConfig c = ck.config;
    c.n_folds = n_folds;
    const auto folds = make_folds(d, c);
    MetricsReport report;
    for (std::size_t f = 0; f < folds.size(); ++f) {
        const auto setup = prepare_fold(d, c, folds[f], f);
        const auto test = evaluate_users(setup.context, ck.folds[f], c, folds[f].test);
        report.folds.push_back(FoldMetrics::from(test.counts, f < ck.best_epochs.size() ? ck.best_epochs[f] : 0));
    }
    report.finalize();
    return report;
}

} // namespace hsnpl::trainer
