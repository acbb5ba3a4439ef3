#include "dbmef/cli.hpp"

#include <filesystem>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "dbmef/checkpoint.hpp"
#include "dbmef/config.hpp"
#include "dbmef/dataset.hpp"
#include "dbmef/error.hpp"
#include "dbmef/pipeline.hpp"
#include "dbmef/trainer.hpp"

namespace dbmef {
namespace {

enum class Split { train, test };

struct Options {
    std::string config_path;
    std::string out_path;
    std::optional<std::uint64_t> seed;
    std::string images_path;
    std::string labels_path;
    std::string checkpoint_path;
    std::string grid;
    std::optional<int> workers;
};

RunConfig load_run_config(const Options& o) {
    RunConfig cfg = o.config_path.empty() ? parse_config_text("{}") : parse_config(o.config_path);
    if (o.seed) cfg.set_seed(*o.seed);
    if (o.workers) {
        if (*o.workers < 1) throw ValidationError("--workers must be >= 1");
        cfg.workers = *o.workers;
    }
    return cfg;
}

std::vector<std::vector<float>> synthetic_means(const RunConfig& cfg) {
    return symmetric_class_means(cfg.synthetic.num_classes, static_cast<std::size_t>(cfg.synthetic.dim),
                                 cfg.synthetic.offset);
}

Dataset load_data(const Options& o, const RunConfig& cfg, Split split) {
    if (!o.images_path.empty() || !o.labels_path.empty()) {
        if (o.images_path.empty() || o.labels_path.empty()) {
            throw ValidationError("--data-images and --data-labels must be given together");
        }
        return load_idx(o.images_path, o.labels_path);
    }
    const auto& s = cfg.synthetic;
    return split == Split::train
               ? generate_gaussian_dataset_shuffled(synthetic_means(cfg), s.sigma, s.n_train_per_class,
                                                    derive_seed(cfg.seed, 0x7A1))
               : generate_gaussian_dataset_shuffled(synthetic_means(cfg), s.sigma, s.n_test_per_class,
                                                    derive_seed(cfg.seed, 0x7E5));
}

const std::string& require_checkpoint(const Options& o) {
    if (o.checkpoint_path.empty()) throw ValidationError("--checkpoint is required for this command");
    return o.checkpoint_path;
}

Checkpoint load_or_new(const std::string& path) {
    if (std::filesystem::exists(path)) return load_checkpoint(path);
    return {};
}

NoiseSchedule schedule_for(const RunConfig& cfg) {
    return make_linear_schedule(cfg.t_max, cfg.beta_start, cfg.beta_end);
}

Denoiser build_denoiser(const RunConfig& cfg, const Checkpoint& ckpt) {
    if (cfg.denoiser.backend == DenoiserBackendKind::analytic) {
        return Denoiser(gaussian_params(synthetic_means(cfg), cfg.synthetic.sigma), schedule_for(cfg));
    }
    if (ckpt.meta.contains("schedule")) {
        const auto& s = ckpt.meta["schedule"];
        if (s.value("t_max", cfg.t_max) != cfg.t_max) {
            throw ValidationError("config t_max differs from the schedule the denoiser was trained with");
        }
    }
    return Denoiser(restore_denoiser(ckpt), schedule_for(cfg));
}

void emit(const Options& o, std::ostream& out, const std::string& text) {
    if (o.out_path.empty()) out << text;
    else write_file_atomic(o.out_path, text);
}

void cmd_train_base(const Options& o, std::ostream& out) {
    const RunConfig cfg = load_run_config(o);
    const Dataset data = load_data(o, cfg, Split::train);
    const auto& path = require_checkpoint(o);
    Checkpoint ckpt = load_or_new(path);
    auto init = init_classifier(static_cast<int>(data.dim), cfg.base_hidden, data.num_classes, cfg.seed);
    auto result = train_base_classifier(data, std::move(init), cfg.train_base);
    store_classifier(ckpt, result.params);
    ckpt.meta["seed"] = cfg.seed;
    save_checkpoint(path, ckpt);

    nlohmann::ordered_json summary;
    summary["checkpoint"] = path;
    summary["accuracy_curve"] = result.accuracy_curve;
    emit(o, out, summary.dump(2) + "\n");
}

void cmd_train_diffusion(const Options& o, std::ostream& out) {
    const RunConfig cfg = load_run_config(o);
    const Dataset data = load_data(o, cfg, Split::train);
    const auto& path = require_checkpoint(o);
    Checkpoint ckpt = load_or_new(path);
    const NoiseSchedule schedule = schedule_for(cfg);
    auto init = init_params(static_cast<int>(data.dim), cfg.denoiser.hidden, cfg.denoiser.time_embed_dim,
                            cfg.denoiser.class_embed_dim, data.num_classes, cfg.seed);
    auto result = train_denoiser(data, std::move(init), schedule, cfg.train_diffusion);
    store_denoiser(ckpt, result.params);
    ckpt.meta["schedule"] = {{"t_max", cfg.t_max}, {"beta_start", cfg.beta_start}, {"beta_end", cfg.beta_end}};
    ckpt.meta["train_diffusion"] = nlohmann::json::parse(config_to_json(cfg))["train_diffusion"];
    ckpt.meta["seed"] = cfg.seed;
    save_checkpoint(path, ckpt);

    nlohmann::ordered_json summary;
    summary["checkpoint"] = path;
    summary["parameter_count"] = result.params.parameter_count();
    summary["loss_curve"] = result.loss_curve;
    emit(o, out, summary.dump(2) + "\n");
}

void cmd_calibrate(const Options& o, std::ostream& out) {
    const RunConfig cfg = load_run_config(o);
    const Dataset data = load_data(o, cfg, Split::train);
    const auto& path = require_checkpoint(o);
    Checkpoint ckpt = load_checkpoint(path);
    const ClassifierParams classifier = restore_classifier(ckpt);
    const auto dist = score_distribution(classifier, data);
    std::vector<double> correct, wrong;
    for (std::size_t i = 0; i < dist.scores.size(); ++i) (dist.correct[i] ? correct : wrong).push_back(dist.scores[i]);
    if (correct.empty()) throw CalibrationError("no correctly classified training samples to calibrate from");
    store_correct_scores(ckpt, correct);
    save_checkpoint(path, ckpt);

    const auto cal = calibrate_threshold(restore_correct_scores(ckpt), cfg.prot, cfg.threshold_mode);
    nlohmann::ordered_json summary;
    summary["n_train"] = data.size();
    summary["n_correct"] = correct.size();
    summary["n_misclassified"] = wrong.size();
    summary["prot"] = cal.prot;
    summary["threshold_mode"] = to_string(cal.mode);
    summary["threshold_kind"] = cal.kind == ThresholdKind::value ? "value" : cal.kind == ThresholdKind::always ? "always" : "never";
    summary["threshold"] = cal.threshold;
    if (!wrong.empty()) {
        const auto test = mann_whitney(correct, wrong);
        summary["mann_whitney"] = {{"u", test.u_statistic}, {"p_value", test.p_value}, {"cohens_d", test.cohens_d},
                                   {"exact", test.exact}};
    }
    emit(o, out, summary.dump(2) + "\n");
}

struct LoadedModel {
    ClassifierParams classifier;
    std::vector<double> correct_scores;
    Denoiser denoiser;
};

LoadedModel load_model(const Options& o, const RunConfig& cfg) {
    const Checkpoint ckpt = load_checkpoint(require_checkpoint(o));
    LoadedModel m{restore_classifier(ckpt), {}, build_denoiser(cfg, ckpt)};
    if (has_correct_scores(ckpt)) m.correct_scores = restore_correct_scores(ckpt);
    else if (cfg.threshold_mode == ThresholdMode::quantile && cfg.prot > 0.0 && cfg.prot < 1.0) {
        throw CalibrationError("quantile mode needs calibration scores; run 'calibrate' on '" + o.checkpoint_path + "'");
    }
    return m;
}

void cmd_evaluate(const Options& o, std::ostream& out) {
    const RunConfig cfg = load_run_config(o);
    const Dataset test = load_data(o, cfg, Split::test);
    const LoadedModel m = load_model(o, cfg);
    const auto report = evaluate(test, m.classifier, m.correct_scores, m.denoiser, cfg.run_settings(), cfg.workers);
    emit(o, out, report_to_json(report));
}

void cmd_ablate(const Options& o, std::ostream& out) {
    if (o.grid.empty()) throw ValidationError("ablate needs --grid name=v1,v2,...");
    const RunConfig cfg = load_run_config(o);
    const AblationGrid grid = parse_grid(o.grid);
    const Dataset test = load_data(o, cfg, Split::test);
    const LoadedModel m = load_model(o, cfg);
    const auto rows = ablate(test, m.classifier, m.correct_scores, m.denoiser, cfg.run_settings(), grid, cfg.workers);
    emit(o, out, ablation_csv(rows));
}

void cmd_export_scores(const Options& o, std::ostream& out) {
    const RunConfig cfg = load_run_config(o);
    const Dataset data = load_data(o, cfg, Split::test);
    const Checkpoint ckpt = load_checkpoint(require_checkpoint(o));
    emit(o, out, score_distribution_csv(score_distribution(restore_classifier(ckpt), data)));
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Confidence-gated diffusion re-ranking of classifier predictions", "dbmef"};
    app.require_subcommand(1);

    Options o;
    auto add_common = [&o](CLI::App* sub) {
        sub->add_option("--config", o.config_path, "JSON run configuration");
        sub->add_option("--out", o.out_path, "Output file (written atomically); stdout if omitted");
        sub->add_option("--seed", o.seed, "Overrides every seed in the configuration");
        sub->add_option("--data-images", o.images_path, "IDX image file");
        sub->add_option("--data-labels", o.labels_path, "IDX label file");
        sub->add_option("--checkpoint", o.checkpoint_path, "Model checkpoint (read, and updated by train/calibrate)");
        sub->add_option("--workers", o.workers, "Worker threads for evaluation");
    };

    struct Command {
        const char* name;
        const char* help;
        void (*run)(const Options&, std::ostream&);
    };
    const Command commands[] = {
        {"train-base", "Train the base classifier into the checkpoint", cmd_train_base},
        {"train-diffusion", "Train the conditional denoiser into the checkpoint", cmd_train_diffusion},
        {"calibrate", "Record correct-sample confidence scores in the checkpoint", cmd_calibrate},
        {"evaluate", "Run the gated pipeline and write an evaluation report (JSON)", cmd_evaluate},
        {"ablate", "Sweep one hyperparameter and write a comparison table (CSV)", cmd_ablate},
        {"export-scores", "Write per-example confidence scores as CSV", cmd_export_scores},
    };
    std::vector<std::pair<CLI::App*, const Command*>> subs;
    for (const auto& c : commands) {
        auto* sub = app.add_subcommand(c.name, c.help);
        add_common(sub);
        if (std::string(c.name) == "ablate") sub->add_option("--grid", o.grid, "name=v1,v2,... (lambda|prot|t_eval|voters|K|mode)");
        subs.emplace_back(sub, &c);
    }

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "dbmef: " << e.what() << "\n";
        return 2;
    }

    for (const auto& [sub, cmd] : subs) {
        if (!sub->parsed()) continue;
        try {
            cmd->run(o, out);
            return 0;
        } catch (const std::exception& e) {
            err << "dbmef " << cmd->name << ": " << e.what() << "\n";
            return 1;
        }
    }
    return 2;
}

int run_cli(int argc, const char* const* argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run_cli(args, std::cout, std::cerr);
}

}  // namespace dbmef
