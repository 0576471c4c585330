#pragma once

#include "hsnpl/core/parameters.hpp"
#include "hsnpl/datasets/synthetic.hpp"
#include "hsnpl/trainer/config.hpp"
#include "hsnpl/trainer/model.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

namespace hsnpl::trainer {

struct TensorCheck {
    std::string name;
    double max_relative_error = 0.0;
    double max_abs_gradient = 0.0;
    std::size_t entries = 0;
};

struct GradCheckReport {
    std::vector<TensorCheck> tensors;

    [[nodiscard]] double max_relative_error() const {
        double m = 0.0;
        for (const auto& t : tensors) m = std::max(m, t.max_relative_error);
        return m;
    }
};

/// |a - n| / max(|a|, |n|, 1e-8)
inline double relative_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

/// Central differences of `loss` around `params` against `analytic`.
/// `params` is perturbed in place and restored.
inline GradCheckReport compare_gradients(ParameterStore& params, const ParameterStore& analytic,
                                         const std::function<double(const ParameterStore&)>& loss, double epsilon) {
    GradCheckReport report;
    for (std::size_t i = 0; i < params.size(); ++i) {
        TensorCheck tc;
        tc.name = params.names()[i];
        auto& m = params.at(i);
        const auto& g = analytic.at(i);
        for (Eigen::Index k = 0; k < m.size(); ++k) {
            const double orig = m.data()[k];
            m.data()[k] = orig + epsilon;
            const double up = loss(params);
            m.data()[k] = orig - epsilon;
            const double down = loss(params);
            m.data()[k] = orig;
            const double numeric = (up - down) / (2.0 * epsilon);
            tc.max_relative_error = std::max(tc.max_relative_error, relative_error(g.data()[k], numeric));
            tc.max_abs_gradient = std::max(tc.max_abs_gradient, std::abs(g.data()[k]));
            ++tc.entries;
        }
        report.tensors.push_back(tc);
    }
    return report;
}

struct GradCheckOptions {
    double epsilon = 1e-4;
    /// Multiplies the analytic gradient before comparison; 1 for a real
    /// check, anything else to confirm the harness catches a wrong gradient.
    double sabotage_factor = 1.0;
    std::size_t users = 6;
    std::size_t d_post = 8;
    std::uint64_t seed = 11;
};

/// Small synthetic graph where users share topics and entities.
inline datasets::Dataset gradcheck_fixture(const GradCheckOptions& o) {
    datasets::SynthConfig sc;
    sc.n_users = o.users;
    sc.n_folds = 2;
    sc.d_post = o.d_post;
    sc.n_topics = 3;
    sc.n_entities = 4;
    sc.entity_clusters = 2;
    sc.signal = 0.8;
    return datasets::generate_synthetic(sc, o.seed);
}

/// Checks every parameter tensor of the full model (dropout off) on the
/// fixture, with the total loss as the scalar objective.
inline GradCheckReport gradient_check(TrainConfig c, const GradCheckOptions& o = {}) {
    c.dropout = 0.0;
    const auto data = gradcheck_fixture(o);
    const ModelContext ctx(datasets::build_hetero_graph(data.records, data.vocab, graph_options(c)));
    std::vector<std::size_t> labeled(ctx.graph.user_count());
    for (std::size_t i = 0; i < labeled.size(); ++i) labeled[i] = i;
    ForwardOptions fo;
    fo.corruption_seed = derive_seed(o.seed, {0x6763ULL});

    ParameterStore params = init_parameters(ModelDims::from(c, o.d_post), o.seed);
    auto loss = [&](const ParameterStore& p) {
        ad::Tape tape;
        BoundParameters bound(tape, p);
        return forward(tape, ctx, bound, c, labeled, fo).total.scalar();
    };
    ad::Tape tape;
    BoundParameters bound(tape, params);
    const auto r = forward(tape, ctx, bound, c, labeled, fo);
    tape.backward(r.total);
    ParameterStore grads = bound.gradients(tape);
    for (std::size_t i = 0; i < grads.size(); ++i) grads.at(i) *= o.sabotage_factor;
    return compare_gradients(params, grads, loss, o.epsilon);
}

} // namespace hsnpl::trainer
