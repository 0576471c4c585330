// Command-line front end. Exit codes: 0 success, 2 validation error,
// 3 numerical failure.

#include "hsnpl/hsnpl.hpp"

#include "CLI11.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace hsnpl;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;

std::ofstream open_out(const fs::path& p) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + p.string());
    return out;
}

trainer::TrainConfig config_or_default(const std::string& path) {
    return path.empty() ? trainer::TrainConfig{} : trainer::load_config(path);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Heterogeneous subgraph network with prompt learning for depression detection"};
    app.require_subcommand(1);

    // generate
    datasets::SynthConfig synth;
    std::uint64_t gen_seed = 0;
    std::string gen_out;
    auto* gen = app.add_subcommand("generate", "write a synthetic dataset");
    gen->add_option("--users", synth.n_users, "number of users")->required();
    gen->add_option("--signal", synth.signal, "planted class signal in [0, 1]")->required();
    gen->add_option("--seed", gen_seed, "random seed")->required();
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--d-post", synth.d_post, "post embedding width");
    gen->add_option("--topics", synth.n_topics, "number of topics");
    gen->add_option("--entities", synth.n_entities, "number of entities");
    gen->add_option("--balance", synth.balance, "fraction of positive users");
    gen->add_option("--noise", synth.noise_scale, "noise scale");
    gen->add_option("--folds", synth.n_folds, "fold count the dataset must support");

    // train
    std::string data_dir, config_path, ckpt_path, log_path, metrics_path;
    auto* tr = app.add_subcommand("train", "k-fold training; writes a checkpoint and a JSONL log");
    tr->add_option("--data", data_dir, "dataset directory")->required();
    tr->add_option("--config", config_path, "JSON config (TrainConfig fields)");
    tr->add_option("--out", ckpt_path, "checkpoint path")->required();
    tr->add_option("--log", log_path, "training log (default <out>.log.jsonl)");
    tr->add_option("--metrics", metrics_path, "write test metrics JSON here");

    // eval
    std::size_t eval_folds = 5;
    std::string eval_out;
    auto* ev = app.add_subcommand("eval", "score a checkpoint on its test folds");
    ev->add_option("--ckpt", ckpt_path, "checkpoint")->required();
    ev->add_option("--data", data_dir, "dataset directory")->required();
    ev->add_option("--folds", eval_folds, "number of folds");
    ev->add_option("--out", eval_out, "write metrics JSON here as well as stdout");

    // gradcheck
    trainer::GradCheckOptions gc_opts;
    std::size_t gc_width = 16;
    auto* gc = app.add_subcommand("gradcheck", "finite-difference check of every parameter gradient");
    gc->add_option("--epsilon", gc_opts.epsilon, "central difference step");
    gc->add_option("--width", gc_width, "hidden width q");
    gc->add_option("--config", config_path, "JSON config");

    // ablate
    std::string flags, csv_out;
    auto* ab = app.add_subcommand("ablate", "train/evaluate the full model and each ablation");
    ab->add_option("--data", data_dir, "dataset directory")->required();
    ab->add_option("--config", config_path, "JSON config");
    ab->add_option("--flags", flags, "comma-separated flags; join with '+' to combine");
    ab->add_option("--out", csv_out, "CSV output")->required();

    // embed
    std::string tsv_out, disc_out;
    std::size_t embed_fold = 0;
    auto* em = app.add_subcommand("embed", "dump per-user subgraph embeddings");
    em->add_option("--ckpt", ckpt_path, "checkpoint")->required();
    em->add_option("--data", data_dir, "dataset directory")->required();
    em->add_option("--out", tsv_out, "TSV output")->required();
    em->add_option("--fold", embed_fold, "which fold's parameters to use");
    em->add_option("--disc-out", disc_out, "also write discriminator outputs (JSONL)");

    // sds-map
    std::string backend = "mock", audit_out, scale_path;
    std::uint64_t backend_seed = 0;
    auto* sm = app.add_subcommand("sds-map", "map users onto the SDS scale and write the audit log");
    sm->add_option("--data", data_dir, "dataset directory")->required();
    sm->add_option("--backend", backend, "answer backend (mock)");
    sm->add_option("--out", audit_out, "audit JSONL")->required();
    sm->add_option("--seed", backend_seed, "backend seed");
    sm->add_option("--scale", scale_path, "scale JSON (default: built-in)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            const auto d = datasets::generate_synthetic(synth, gen_seed);
            datasets::save_dataset(d, gen_out);
            std::cout << "wrote " << d.records.size() << " users to " << gen_out << '\n';
        } else if (*tr) {
            const auto cfg = config_or_default(config_path);
            const auto d = datasets::load_dataset(data_dir);
            if (log_path.empty()) log_path = ckpt_path + ".log.jsonl";
            auto log = open_out(log_path);
            trainer::TrainResult r;
            try {
                r = trainer::train(d, cfg, &log);
            } catch (const trainer::TrainingDiverged& e) {
                trainer::Checkpoint last;
                last.config = cfg;
                last.dims = trainer::ModelDims::from(cfg, d.manifest.d_post);
                last.folds.push_back(e.last_good());
                last.best_epochs.push_back(e.epoch() - 1);
                trainer::save_checkpoint(last, ckpt_path + ".last_good");
                throw;
            }
            if (ckpt_path.find('/') != std::string::npos) fs::create_directories(fs::path(ckpt_path).parent_path());
            trainer::save_checkpoint(r.checkpoint, ckpt_path);
            const auto metrics = r.test_metrics.to_json().dump(2);
            if (!metrics_path.empty()) open_out(metrics_path) << metrics << '\n';
            std::cout << metrics << '\n';
        } else if (*ev) {
            const auto ck = trainer::load_checkpoint(ckpt_path);
            const auto d = datasets::load_dataset(data_dir);
            const auto report = trainer::evaluate(ck, d, eval_folds).to_json().dump(2);
            if (!eval_out.empty()) open_out(eval_out) << report << '\n';
            std::cout << report << '\n';
        } else if (*gc) {
            auto cfg = config_or_default(config_path);
            cfg.hidden_width = gc_width;
            const auto t0 = std::chrono::steady_clock::now();
            const auto report = trainer::gradient_check(cfg, gc_opts);
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            for (const auto& t : report.tensors)
                std::printf("%-32s entries=%-6zu max_rel_err=%.3e max_|g|=%.3e\n", t.name.c_str(), t.entries, t.max_relative_error,
                            t.max_abs_gradient);
            std::printf("max relative error %.3e over %zu tensors in %.1f s\n", report.max_relative_error(), report.tensors.size(), secs);
            return report.max_relative_error() < 1e-4 ? 0 : kExitNumerical;
        } else if (*ab) {
            const auto cfg = config_or_default(config_path);
            const auto d = datasets::load_dataset(data_dir);
            const auto rows = trainer::ablate(d, cfg, trainer::parse_flag_list(flags));
            auto out = open_out(csv_out);
            trainer::write_ablation_csv(rows, out);
            trainer::write_ablation_csv(rows, std::cout);
        } else if (*em) {
            const auto ck = trainer::load_checkpoint(ckpt_path);
            const auto d = datasets::load_dataset(data_dir);
            const auto dump = trainer::compute_embeddings(ck, d, embed_fold);
            auto out = open_out(tsv_out);
            trainer::write_embeddings_tsv(dump, out);
            if (!disc_out.empty()) {
                auto dj = open_out(disc_out);
                trainer::write_discriminator_jsonl(dump, dj);
            }
        } else if (*sm) {
            if (backend != "mock") throw ValidationError("backend \"" + backend + "\" is not available in this build (use mock)");
            const auto d = datasets::load_dataset(data_dir);
            const auto scale = scale_path.empty() ? sds::SdsScale::standard() : sds::SdsScale::load(scale_path);
            const sds::DeterministicMock mock(backend_seed);
            auto records = d.records;
            std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) { return a.user_id < b.user_id; });
            auto out = open_out(audit_out);
            for (const auto& r : records) {
                const auto m = sds::map_user(r.post_text, r.post_embedding, scale, mock);
                for (const auto& e : m.audit) out << sds::audit_line(r.user_id, e).dump() << '\n';
            }
        }
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const ValidationError& e) {
        std::cerr << "validation error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
