#include "support.hpp"

#include <gtest/gtest.h>

using namespace hsnpl;
using namespace hsnpl::testing;
using trainer::TrainConfig;

namespace {

TrainConfig tiny_config() {
    TrainConfig c;
    c.hidden_width = 8;
    c.heads = 2;
    c.epochs = 15;
    c.dropout = 0.2;
    c.n_folds = 2;
    c.patience = 100;
    c.learning_rate = 0.05;
    return c;
}

datasets::Dataset tiny_data(std::uint64_t seed = 1, std::size_t users = 20) {
    datasets::SynthConfig s;
    s.n_users = users;
    s.d_post = 8;
    s.n_topics = 5;
    s.n_entities = 8;
    s.entity_clusters = 2;
    s.n_folds = 2;
    return datasets::generate_synthetic(s, seed);
}

double softplus(double x) { return std::log1p(std::exp(x)); }

} // namespace

TEST(ClassificationLoss, LimitsAndHandCase) {
    ad::Tape t;
    const auto confident = t.constant((Matrix(2, 2) << 10, -10, 10, -10).finished());
    const auto l1 = ad::add(ad::softmax_cross_entropy(confident, {0, 1}, {0, 0}), ad::softmax_cross_entropy(confident, {0, 1}, {0, 0}));
    EXPECT_NEAR(l1.scalar(), 2 * softplus(-20), 1e-13);
    EXPECT_LT(l1.scalar(), 5e-9);

    const auto flat = t.constant(Matrix::Zero(3, 2));
    const auto l2 = ad::add(ad::softmax_cross_entropy(flat, {0, 1, 2}, {0, 1, 1}), ad::softmax_cross_entropy(flat, {0, 1, 2}, {0, 1, 1}));
    EXPECT_NEAR(l2.scalar(), 2 * std::log(2.0), 1e-12);

    // Two users: subgraph logits (1, 2), (0.5, -1); post logits (0, 3), (2, 2); labels (1, 0).
    const auto sg = t.constant((Matrix(2, 2) << 1, 2, 0.5, -1).finished());
    const auto hp = t.constant((Matrix(2, 2) << 0, 3, 2, 2).finished());
    const auto l3 = ad::add(ad::softmax_cross_entropy(sg, {0, 1}, {1, 0}), ad::softmax_cross_entropy(hp, {0, 1}, {1, 0}));
    const double expect = 0.5 * (softplus(-1) + softplus(-1.5)) + 0.5 * (softplus(-3) + std::log(2.0));
    EXPECT_NEAR(l3.scalar(), expect, 1e-9);
}

TEST(ClassificationLoss, ForwardMatchesHeadOracle) {
    const auto d = tiny_data();
    auto c = tiny_config();
    c.dropout = 0;
    const trainer::ModelContext ctx(datasets::build_hetero_graph(d, trainer::graph_options(c)));
    const auto p = trainer::init_parameters(trainer::ModelDims::from(c, 8), 5);
    ad::Tape t;
    BoundParameters b(t, p);
    const std::vector<std::size_t> labeled = {0, 3, 7, 11};
    const auto r = trainer::forward(t, ctx, b, c, labeled);
    double expect = 0;
    for (auto u : labeled)
        for (const auto* z : {&r.logits_subgraph.value(), &r.logits_post.value()}) {
            const auto row = static_cast<Index>(u);
            const double lse = std::log(std::exp((*z)(row, 0)) + std::exp((*z)(row, 1)));
            expect += (lse - (*z)(row, ctx.graph.labels[u])) / static_cast<double>(labeled.size());
        }
    EXPECT_NEAR(r.loss_sub.scalar(), expect, 1e-12);
}

TEST(TotalLoss, WeightedSumExamples) {
    ad::Tape t;
    const auto cl = t.constant(Matrix::Constant(1, 1, 0.5));
    const auto sub = t.constant(Matrix::Constant(1, 1, 1.0));
    std::vector<ad::Var> params = {t.variable((Matrix(1, 2) << 3, 4).finished())};
    const auto reg = ad::l2_norm(params);
    std::vector<ad::Var> terms = {cl, sub, reg};
    EXPECT_DOUBLE_EQ(ad::weighted_sum(terms, std::vector<double>{1, 1, 0}).scalar(), 1.5);
    EXPECT_DOUBLE_EQ(ad::weighted_sum(terms, std::vector<double>{0, 1, 0}).scalar(), 1.0);
    EXPECT_DOUBLE_EQ(ad::weighted_sum(terms, std::vector<double>{1, 1, 0.1}).scalar(), 2.0);
}

TEST(TotalLoss, ForwardComposesComponents) {
    const auto d = tiny_data();
    auto c = tiny_config();
    c.dropout = 0;
    c.alpha_cl = 0.7;
    c.beta_sub = 1.3;
    c.l2_coeff = 0.01;
    const trainer::ModelContext ctx(datasets::build_hetero_graph(d, trainer::graph_options(c)));
    const auto p = trainer::init_parameters(trainer::ModelDims::from(c, 8), 5);
    ad::Tape t;
    const auto r = trainer::forward(t, ctx, BoundParameters(t, p), c, {0, 1, 2});
    double norm = 0;
    for (std::size_t i = 0; i < p.size(); ++i) norm += p.at(i).squaredNorm();
    EXPECT_NEAR(r.regularizer.scalar(), std::sqrt(norm), 1e-12);
    EXPECT_NEAR(r.total.scalar(), 0.7 * r.loss_cl->scalar() + 1.3 * r.loss_sub.scalar() + 0.01 * std::sqrt(norm), 1e-12);

    c.squared_l2 = true;
    c.alpha_cl = 0;
    ad::Tape t2;
    const auto r2 = trainer::forward(t2, ctx, BoundParameters(t2, p), c, {0, 1, 2});
    EXPECT_FALSE(r2.loss_cl.has_value());
    EXPECT_NEAR(r2.total.scalar(), 1.3 * r2.loss_sub.scalar() + 0.01 * norm, 1e-12);
}

TEST(Metrics, HandComputedConfusion) {
    trainer::Confusion c{3, 1, 2, 4};
    EXPECT_DOUBLE_EQ(c.precision(), 0.75);
    EXPECT_DOUBLE_EQ(c.recall(), 0.6);
    EXPECT_NEAR(c.f1(), 2.0 / 3.0, 1e-12);
    EXPECT_DOUBLE_EQ(c.accuracy(), 0.7);
}

TEST(Metrics, AllCorrectAndAllWrong) {
    const std::vector<int> y = {1, 0, 1, 1, 0, 0, 1, 0, 1, 0};
    std::vector<int> wrong;
    for (int v : y) wrong.push_back(1 - v);
    const auto ok = trainer::confusion(y, y);
    EXPECT_EQ(ok.precision(), 1.0);
    EXPECT_EQ(ok.recall(), 1.0);
    EXPECT_EQ(ok.f1(), 1.0);
    EXPECT_EQ(ok.accuracy(), 1.0);
    const auto bad = trainer::confusion(wrong, y);
    EXPECT_EQ(bad.accuracy(), 0.0);
    EXPECT_EQ(bad.f1(), 0.0);
}

TEST(Metrics, F1IsHarmonicMeanProperty) {
    Rng rng(3);
    for (int i = 0; i < 200; ++i) {
        trainer::Confusion c{rng.below(20), rng.below(20), rng.below(20), rng.below(20)};
        const double p = c.precision(), r = c.recall();
        for (double m : {p, r, c.f1(), c.accuracy()}) {
            EXPECT_GE(m, 0.0);
            EXPECT_LE(m, 1.0);
        }
        if (p + r > 0) EXPECT_NEAR(c.f1(), 2 * p * r / (p + r), 1e-9);
    }
}

TEST(Config, UnknownKeyRejectedAndRoundTrip) {
    EXPECT_THROW(trainer::config_from_json({{"learning_rat", 0.1}}), ValidationError);
    EXPECT_THROW(trainer::config_from_json({{"dropout", 1.5}}), ValidationError);
    TrainConfig c;
    c.hidden_width = 33;
    c.disable_contrastive = true;
    c.seed = 99;
    const auto back = trainer::config_from_json(trainer::to_json(c));
    EXPECT_EQ(trainer::to_json(back), trainer::to_json(c));
    const auto partial = trainer::config_from_json({{"epochs", 7}});
    EXPECT_EQ(partial.epochs, 7u);
    EXPECT_EQ(partial.hidden_width, 512u);
}

TEST(Config, DefaultsFollowTable) {
    const TrainConfig c;
    EXPECT_EQ(c.learning_rate, 0.01);
    EXPECT_EQ(c.momentum, 0.8);
    EXPECT_EQ(c.batch_size, 64u);
    EXPECT_EQ(c.epochs, 1000u);
    EXPECT_EQ(c.dropout, 0.8);
    EXPECT_EQ(c.hidden_width, 512u);
    EXPECT_EQ(c.heads, 6u);
    EXPECT_EQ(c.negative_sampling_rate, 1.0);
    EXPECT_EQ(c.entity_threshold, 0.5);
}

TEST(Train, ZeroEpochsKeepsInitialParameters) {
    const auto d = tiny_data();
    auto c = tiny_config();
    c.epochs = 0;
    std::ostringstream log;
    const auto r = trainer::train(d, c, &log);
    EXPECT_TRUE(log.str().empty());
    ASSERT_EQ(r.checkpoint.folds.size(), 2u);
    const auto init = trainer::init_parameters(trainer::ModelDims::from(c, 8), derive_seed(c.seed, {0x666f6c64ULL, 0}));
    for (std::size_t i = 0; i < init.size(); ++i) EXPECT_EQ(r.checkpoint.folds[0].at(i), init.at(i));
}

TEST(Train, DeterministicLogsAndCheckpoints) {
    const auto d = tiny_data(4);
    const auto c = tiny_config();
    std::ostringstream a, b;
    const auto ra = trainer::train(d, c, &a);
    const auto rb = trainer::train(d, c, &b);
    EXPECT_EQ(a.str(), b.str());
    const auto dir = scratch_dir("determinism");
    trainer::save_checkpoint(ra.checkpoint, dir / "a.bin");
    trainer::save_checkpoint(rb.checkpoint, dir / "b.bin");
    EXPECT_EQ(slurp(dir / "a.bin"), slurp(dir / "b.bin"));
    EXPECT_EQ(ra.test_metrics.to_json(), rb.test_metrics.to_json());
}

TEST(Train, LogHasOneLinePerEpochWithFields) {
    const auto d = tiny_data();
    auto c = tiny_config();
    c.epochs = 4;
    std::ostringstream log;
    trainer::train(d, c, &log);
    std::istringstream in(log.str());
    std::size_t n = 0;
    for (std::string line; std::getline(in, line); ++n) {
        const auto j = nlohmann::json::parse(line);
        for (const char* k : {"fold", "epoch", "loss_total", "loss_sub", "loss_cl", "alpha_cl", "l2", "val_f1", "val_loss"})
            EXPECT_TRUE(j.contains(k)) << k;
    }
    EXPECT_EQ(n, 8u);
}

TEST(Train, LossDecreasesOnSmallData) {
    const auto d = tiny_data(2);
    auto c = tiny_config();
    c.dropout = 0;
    c.epochs = 40;
    std::ostringstream log;
    trainer::train(d, c, &log);
    std::istringstream in(log.str());
    std::vector<double> fold0;
    for (std::string line; std::getline(in, line);) {
        const auto j = nlohmann::json::parse(line);
        if (j.at("fold") == 0) fold0.push_back(j.at("loss_sub").get<double>());
    }
    ASSERT_EQ(fold0.size(), 40u);
    EXPECT_LT(fold0.back(), fold0.front());
    // Smoothed curve: the mean of the last ten epochs sits below the first ten.
    double head = 0, tail = 0;
    for (int i = 0; i < 10; ++i) {
        head += fold0[static_cast<std::size_t>(i)];
        tail += fold0[fold0.size() - 1 - static_cast<std::size_t>(i)];
    }
    EXPECT_LT(tail, head);
}

TEST(Train, EarlyStoppingAfterPatience) {
    const auto d = tiny_data();
    auto c = tiny_config();
    c.learning_rate = 0; // validation F1 never changes after epoch 1
    c.patience = 3;
    c.epochs = 50;
    const auto folds = trainer::make_folds(d, c);
    const auto setup = trainer::prepare_fold(d, c, folds[0], 0);
    const auto r = trainer::train_fold(setup, c, 0);
    EXPECT_EQ(r.epochs_run, 4u);
    EXPECT_EQ(r.best_epoch, 1u);
}

TEST(Train, DivergenceRaisesWithLastGoodParameters) {
    const auto d = tiny_data();
    auto c = tiny_config();
    c.learning_rate = 1e12;
    c.momentum = 0.9;
    c.epochs = 30;
    try {
        trainer::train(d, c);
        FAIL() << "expected divergence";
    } catch (const trainer::TrainingDiverged& e) {
        EXPECT_GE(e.epoch(), 2u);
        EXPECT_EQ(e.last_good().size(), trainer::init_parameters(trainer::ModelDims::from(c, 8), 0).size());
        for (std::size_t i = 0; i < e.last_good().size(); ++i) EXPECT_TRUE(e.last_good().at(i).allFinite());
        EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
    }
}

TEST(Checkpoint, RoundTripAndEvaluate) {
    const auto d = tiny_data(6);
    auto c = tiny_config();
    c.epochs = 5;
    const auto r = trainer::train(d, c);
    const auto dir = scratch_dir("ckpt");
    trainer::save_checkpoint(r.checkpoint, dir / "m.bin");
    const auto back = trainer::load_checkpoint(dir / "m.bin");
    EXPECT_EQ(back.dims, r.checkpoint.dims);
    EXPECT_EQ(back.best_epochs, r.checkpoint.best_epochs);
    EXPECT_EQ(trainer::to_json(back.config), trainer::to_json(r.checkpoint.config));
    ASSERT_EQ(back.folds.size(), r.checkpoint.folds.size());
    for (std::size_t f = 0; f < back.folds.size(); ++f) {
        EXPECT_EQ(back.folds[f].names(), r.checkpoint.folds[f].names());
        for (std::size_t i = 0; i < back.folds[f].size(); ++i) EXPECT_EQ(back.folds[f].at(i), r.checkpoint.folds[f].at(i));
    }
    EXPECT_EQ(trainer::evaluate(back, d, 2).to_json(), r.test_metrics.to_json());
    EXPECT_THROW(trainer::evaluate(back, d, 3), ValidationError);
    auto wrong = d;
    wrong.manifest.d_post = 9;
    EXPECT_THROW(trainer::evaluate(back, wrong, 2), ValidationError);
}

TEST(Checkpoint, RejectsGarbage) {
    const auto dir = scratch_dir("ckpt_bad");
    std::ofstream(dir / "x.bin") << "not a checkpoint";
    EXPECT_THROW(trainer::load_checkpoint(dir / "x.bin"), ValidationError);
}

TEST(GradCheck, AllTensorsBelowTolerance) {
    TrainConfig c;
    c.hidden_width = 16;
    const auto report = trainer::gradient_check(c);
    EXPECT_EQ(report.tensors.size(), trainer::init_parameters(trainer::ModelDims::from(c, 8), 0).size());
    for (const auto& t : report.tensors) EXPECT_LT(t.max_relative_error, 1e-4) << t.name;
}

TEST(GradCheck, SabotagedGradientFlagged) {
    TrainConfig c;
    c.hidden_width = 6;
    c.heads = 2;
    trainer::GradCheckOptions o;
    o.sabotage_factor = 2.0;
    EXPECT_GT(trainer::gradient_check(c, o).max_relative_error(), 0.3);
}

TEST(GradCheck, StepSizeSweepAgrees) {
    TrainConfig c;
    c.hidden_width = 16;
    trainer::GradCheckOptions a, b;
    a.epsilon = 1e-4;
    b.epsilon = 1e-5;
    const auto ra = trainer::gradient_check(c, a), rb = trainer::gradient_check(c, b);
    const double ea = std::max(ra.max_relative_error(), 1e-12), eb = std::max(rb.max_relative_error(), 1e-12);
    EXPECT_LT(ea, 1e-4);
    EXPECT_LE(std::abs(std::log10(ea) - std::log10(eb)), 1.0) << ea << " vs " << eb;
}

TEST(Ablate, FlagParsing) {
    const auto combos = trainer::parse_flag_list("disable_contrastive,disable_prompt_features+disable_behavior_features");
    ASSERT_EQ(combos.size(), 2u);
    EXPECT_EQ(combos[1].size(), 2u);
    EXPECT_THROW(trainer::parse_flag_list("disable_everything"), ValidationError);
    EXPECT_TRUE(trainer::parse_flag_list("").empty());
}

TEST(Ablate, EmptyFlagListEqualsPlainTraining) {
    const auto d = tiny_data(8);
    auto c = tiny_config();
    c.epochs = 3;
    const auto rows = trainer::ablate(d, c, {});
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_EQ(rows[0].metrics.to_json(), trainer::train(d, c).test_metrics.to_json());
    std::ostringstream csv;
    trainer::write_ablation_csv(rows, csv);
    EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')), "variant,label,precision,recall,f1,accuracy");
}

TEST(Ablate, DisableContrastiveDropsTerm) {
    const auto d = tiny_data();
    auto c = tiny_config();
    c.epochs = 2;
    c.disable_contrastive = true;
    std::ostringstream log;
    trainer::train(d, c, &log);
    std::istringstream in(log.str());
    for (std::string line; std::getline(in, line);) {
        const auto j = nlohmann::json::parse(line);
        EXPECT_TRUE(j.at("loss_cl").is_null());
        EXPECT_EQ(j.at("alpha_cl"), 0.0);
        EXPECT_NEAR(j.at("loss_total").get<double>(), j.at("loss_sub").get<double>() + c.l2_coeff * j.at("l2").get<double>(), 1e-12);
    }
}

TEST(Ablate, DisableDualAttentionUsesUniformWeights) {
    const auto d = tiny_data();
    auto c = tiny_config();
    c.dropout = 0;
    c.disable_dual_attention = true;
    const trainer::ModelContext ctx(datasets::build_hetero_graph(d, trainer::graph_options(c)));
    const auto p = trainer::init_parameters(trainer::ModelDims::from(c, 8), 2);
    ad::Tape t;
    trainer::ForwardOptions fo;
    fo.keep_trace = true;
    const auto r = trainer::forward(t, ctx, BoundParameters(t, p), c, {}, fo);
    const auto& idx = ctx.graph_index;
    for (const auto& tr : r.positive.trace)
        for (std::size_t k = 0; k < idx.src.size(); ++k)
            EXPECT_DOUBLE_EQ(tr.node_weights(static_cast<Index>(k)), 1.0 / static_cast<double>(idx.degree[static_cast<std::size_t>(idx.src[k])]));
}

TEST(Ablate, DisableSubgraphAttentionUsesMean) {
    const auto d = tiny_data();
    auto c = tiny_config();
    c.dropout = 0;
    c.disable_subgraph_attention = true;
    const trainer::ModelContext ctx(datasets::build_hetero_graph(d, trainer::graph_options(c)));
    const auto p = trainer::init_parameters(trainer::ModelDims::from(c, 8), 2);
    ad::Tape t;
    const auto r = trainer::forward(t, ctx, BoundParameters(t, p), c, {});
    const Matrix& x = r.positive.nodes.value();
    for (std::size_t u = 0; u < ctx.graph.user_count(); ++u) {
        const auto own = owned_nodes(ctx.graph, u);
        Eigen::RowVectorXd m = Eigen::RowVectorXd::Zero(x.cols());
        for (auto v : own) m += x.row(static_cast<Index>(v)) / static_cast<double>(own.size());
        EXPECT_LT((r.positive.sg.value().row(static_cast<Index>(u)) - m).cwiseAbs().maxCoeff(), 1e-12);
    }
}

TEST(Ablate, FeatureFlagsDropNodeTypes) {
    auto c = tiny_config();
    c.disable_prompt_features = true;
    c.disable_semantic_features = true;
    c.disable_behavior_features = true;
    const auto g = datasets::build_hetero_graph(tiny_data(), trainer::graph_options(c));
    for (auto t : {NodeType::Topic, NodeType::Entity, NodeType::Symptom, NodeType::Behavior}) EXPECT_FALSE(g.has_type(t));
    EXPECT_EQ(g.node_count(), 20u);
}

TEST(Embed, OneRowPerUserWithWidthQ) {
    const auto d = tiny_data(3, 10);
    auto c = tiny_config();
    c.epochs = 2;
    const auto r = trainer::train(d, c);
    const auto dump = trainer::compute_embeddings(r.checkpoint, d, 1);
    std::ostringstream tsv, disc;
    trainer::write_embeddings_tsv(dump, tsv);
    trainer::write_discriminator_jsonl(dump, disc);
    std::istringstream in(tsv.str());
    std::vector<std::string> lines;
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    ASSERT_EQ(lines.size(), 11u);
    for (const auto& l : lines) EXPECT_EQ(std::count(l.begin(), l.end(), '\t'), 1 + 8);
    EXPECT_EQ(lines[0].substr(0, 14), "user_id\tlabel\t");
    std::istringstream dj(disc.str());
    std::size_t n = 0;
    for (std::string l; std::getline(dj, l); ++n) {
        const auto j = nlohmann::json::parse(l);
        EXPECT_GT(j.at("d_positive").get<double>(), 0.0);
        EXPECT_LT(j.at("d_positive").get<double>(), 1.0);
    }
    EXPECT_EQ(n, 10u);
    EXPECT_THROW(trainer::compute_embeddings(r.checkpoint, d, 2), ValidationError);
}
