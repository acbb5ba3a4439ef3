#include <pybind11/operators.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "dbmef/checkpoint.hpp"
#include "dbmef/cli.hpp"
#include "dbmef/config.hpp"
#include "dbmef/confidence_protector.hpp"
#include "dbmef/dataset.hpp"
#include "dbmef/diffusion_classifier.hpp"
#include "dbmef/error.hpp"
#include "dbmef/pipeline.hpp"
#include "dbmef/trainer.hpp"

namespace py = pybind11;
using namespace pybind11::literals;
using namespace dbmef;

namespace {

void declare_errors(py::module_& m) {
    auto& base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
#define DBMEF_PY_ERROR(Name) py::register_exception<Name>(m, #Name, base.ptr())
    DBMEF_PY_ERROR(ParameterError);
    DBMEF_PY_ERROR(ShapeError);
    DBMEF_PY_ERROR(IndexError);
    DBMEF_PY_ERROR(ConditionError);
    DBMEF_PY_ERROR(NumericError);
    DBMEF_PY_ERROR(ContractError);
    DBMEF_PY_ERROR(CalibrationError);
    DBMEF_PY_ERROR(DataError);
    DBMEF_PY_ERROR(FormatError);
    DBMEF_PY_ERROR(UnsupportedVersionError);
    DBMEF_PY_ERROR(IoError);
    DBMEF_PY_ERROR(ParseError);
    DBMEF_PY_ERROR(ValidationError);
#undef DBMEF_PY_ERROR
}

void declare_core(py::module_& m) {
    py::class_<NoiseSchedule>(m, "NoiseSchedule")
        .def_readonly("t_max", &NoiseSchedule::t_max)
        .def_readonly("betas", &NoiseSchedule::betas)
        .def_readonly("alpha_bars", &NoiseSchedule::alpha_bars);

    m.def("make_linear_schedule", &make_linear_schedule, "t_max"_a = kDefaultTMax,
          "beta_start"_a = kDefaultBetaStart, "beta_end"_a = kDefaultBetaEnd);
    m.def("alpha_bar", &alpha_bar, "schedule"_a, "t"_a);
    m.def(
        "forward_diffuse",
        [](const std::vector<float>& x0, int t, const std::vector<float>& eps, const NoiseSchedule& s) {
            return forward_diffuse(x0, t, eps, s);
        },
        "x0"_a, "t"_a, "eps"_a, "schedule"_a);
    m.def(
        "simple_loss", [](const std::vector<float>& a, const std::vector<float>& b) { return simple_loss(a, b); },
        "eps_true"_a, "eps_pred"_a);

    py::enum_<ConditionKind>(m, "ConditionKind")
        .value("positive", ConditionKind::positive)
        .value("negative", ConditionKind::negative);
    py::class_<Condition>(m, "Condition")
        .def_static("positive", &Condition::positive, "cls"_a)
        .def_static("negative", &Condition::negative, "classes"_a)
        .def_readonly("kind", &Condition::kind)
        .def_readonly("classes", &Condition::classes)
        .def(py::self == py::self);

    py::class_<GaussianParams>(m, "GaussianParams")
        .def(py::init([](std::vector<std::vector<float>> means, double sigma) {
                 GaussianParams p{std::move(means), sigma};
                 validate_gaussian_params(p);
                 return p;
             }),
             "class_means"_a, "sigma"_a)
        .def_readonly("class_means", &GaussianParams::class_means)
        .def_readonly("sigma", &GaussianParams::sigma);
    m.def(
        "analytic_gaussian_predict",
        [](const GaussianParams& p, const std::vector<float>& x_t, int t, const Condition& c, const NoiseSchedule& s) {
            return analytic_gaussian_predict(p, x_t, t, c, s);
        },
        "params"_a, "x_t"_a, "t"_a, "cond"_a, "schedule"_a);
}

void declare_models(py::module_& m) {
    py::class_<NetParams>(m, "NetParams")
        .def_readonly("data_dim", &NetParams::data_dim)
        .def_readonly("hidden_dim", &NetParams::hidden_dim)
        .def_readonly("num_classes", &NetParams::num_classes)
        .def("parameter_count", &NetParams::parameter_count);
    m.def("init_params", &init_params, "data_dim"_a, "hidden_dim"_a, "time_embed_dim"_a, "class_embed_dim"_a,
          "num_classes"_a, "seed"_a);
    m.def("sinusoidal_time_embedding", &sinusoidal_time_embedding, "t"_a, "dim"_a, "t_max"_a);

    py::class_<Denoiser>(m, "Denoiser")
        .def(py::init<NetParams, NoiseSchedule>(), "net"_a, "schedule"_a)
        .def(py::init<GaussianParams, NoiseSchedule>(), "gaussian"_a, "schedule"_a)
        .def(
            "predict",
            [](const Denoiser& d, const std::vector<float>& x_t, int t, const Condition& c) { return d.predict(x_t, t, c); },
            "x_t"_a, "t"_a, "cond"_a)
        .def_property_readonly("invocations", &Denoiser::invocations)
        .def("reset_invocations", &Denoiser::reset_invocations)
        .def_property_readonly("num_classes", &Denoiser::num_classes)
        .def_property_readonly("data_dim", &Denoiser::data_dim);

    py::class_<ClassifierParams>(m, "ClassifierParams")
        .def_readonly("input_dim", &ClassifierParams::input_dim)
        .def_readonly("hidden_dim", &ClassifierParams::hidden_dim)
        .def_readonly("num_classes", &ClassifierParams::num_classes)
        .def(py::self == py::self);
    m.def("init_classifier", &init_classifier, "input_dim"_a, "hidden_dim"_a, "num_classes"_a, "seed"_a);
    m.def(
        "logits", [](const ClassifierParams& p, const std::vector<float>& x) { return logits(p, x); }, "params"_a, "x"_a);
    m.def(
        "softmax", [](const std::vector<double>& v) { return softmax(v); }, "v"_a);
    m.def(
        "confidence_score", [](const ClassifierParams& p, const std::vector<float>& x) { return confidence_score(p, x); },
        "params"_a, "x"_a);

    py::class_<CandidateSet>(m, "CandidateSet")
        .def_readonly("labels", &CandidateSet::labels)
        .def_readonly("probs", &CandidateSet::probs)
        .def_readonly("s_value", &CandidateSet::s_value);
    m.def(
        "topk_candidates",
        [](const ClassifierParams& p, const std::vector<float>& x, int k) { return topk_candidates(p, x, k); },
        "params"_a, "x"_a, "k"_a = kDefaultTopK);
}

void declare_data(py::module_& m) {
    py::class_<Dataset>(m, "Dataset")
        .def_readonly("dim", &Dataset::dim)
        .def_readonly("examples", &Dataset::examples)
        .def_readonly("labels", &Dataset::labels)
        .def_readonly("num_classes", &Dataset::num_classes)
        .def("__len__", &Dataset::size)
        .def("row", [](const Dataset& d, std::size_t i) {
            if (i >= d.size()) throw IndexError("row index out of range");
            const auto r = d.row(i);
            return std::vector<float>(r.begin(), r.end());
        })
        .def("subset", &Dataset::subset, "begin"_a, "end"_a);
    m.def("load_idx", &load_idx, "images_path"_a, "labels_path"_a);
    m.def("generate_gaussian_dataset", &generate_gaussian_dataset, "class_means"_a, "sigma"_a, "n_per_class"_a, "seed"_a);
    m.def("generate_gaussian_dataset_shuffled", &generate_gaussian_dataset_shuffled, "class_means"_a, "sigma"_a,
          "n_per_class"_a, "seed"_a);
    m.def("symmetric_class_means", &symmetric_class_means, "num_classes"_a, "dim"_a, "offset"_a);
    m.def("gaussian_params", &gaussian_params, "class_means"_a, "sigma"_a);

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("epochs", &TrainConfig::epochs)
        .def_readwrite("batch_size", &TrainConfig::batch_size)
        .def_readwrite("learning_rate", &TrainConfig::learning_rate)
        .def_readwrite("adam_beta1", &TrainConfig::adam_beta1)
        .def_readwrite("adam_beta2", &TrainConfig::adam_beta2)
        .def_readwrite("adam_epsilon", &TrainConfig::adam_epsilon)
        .def_readwrite("seed", &TrainConfig::seed)
        .def_readwrite("t_max", &TrainConfig::t_max);
    m.def(
        "train_denoiser",
        [](const Dataset& d, NetParams p, const NoiseSchedule& s, const TrainConfig& c) {
            auto r = train_denoiser(d, std::move(p), s, c);
            return py::make_tuple(std::move(r.params), std::move(r.loss_curve));
        },
        "data"_a, "params"_a, "schedule"_a, "config"_a);
    m.def(
        "train_base_classifier",
        [](const Dataset& d, ClassifierParams p, const TrainConfig& c) {
            auto r = train_base_classifier(d, std::move(p), c);
            return py::make_tuple(std::move(r.params), std::move(r.accuracy_curve));
        },
        "data"_a, "params"_a, "config"_a);
}

void declare_protector(py::module_& m) {
    py::enum_<ThresholdMode>(m, "ThresholdMode")
        .value("absolute", ThresholdMode::absolute)
        .value("quantile", ThresholdMode::quantile);
    py::enum_<ThresholdKind>(m, "ThresholdKind")
        .value("value", ThresholdKind::value)
        .value("always", ThresholdKind::always)
        .value("never", ThresholdKind::never);
    py::class_<ProtectorCalibration>(m, "ProtectorCalibration")
        .def_readonly("prot", &ProtectorCalibration::prot)
        .def_readonly("mode", &ProtectorCalibration::mode)
        .def_readonly("kind", &ProtectorCalibration::kind)
        .def_readonly("threshold", &ProtectorCalibration::threshold);
    m.def("collect_correct_scores", &collect_correct_scores, "classifier"_a, "train"_a);
    m.def(
        "calibrate_threshold",
        [](const std::vector<double>& scores, double prot, ThresholdMode mode) {
            return calibrate_threshold(scores, prot, mode);
        },
        "scores"_a, "prot"_a, "mode"_a = ThresholdMode::absolute);
    m.def("should_reclassify", &should_reclassify, "s_value"_a, "calibration"_a);

    py::enum_<RankTestMethod>(m, "RankTestMethod")
        .value("automatic", RankTestMethod::automatic)
        .value("exact", RankTestMethod::exact)
        .value("normal", RankTestMethod::normal);
    py::class_<RankTestResult>(m, "RankTestResult")
        .def_readonly("u_statistic", &RankTestResult::u_statistic)
        .def_readonly("p_value", &RankTestResult::p_value)
        .def_readonly("cohens_d", &RankTestResult::cohens_d)
        .def_readonly("exact", &RankTestResult::exact);
    m.def(
        "mann_whitney",
        [](const std::vector<double>& a, const std::vector<double>& b, RankTestMethod method) {
            return mann_whitney(a, b, method);
        },
        "sample_a"_a, "sample_b"_a, "method"_a = RankTestMethod::automatic);
}

void declare_scoring(py::module_& m) {
    py::enum_<ScoringMode>(m, "ScoringMode")
        .value("positive", ScoringMode::positive)
        .value("negative", ScoringMode::negative)
        .value("combined", ScoringMode::combined);
    py::class_<ScoringConfig>(m, "ScoringConfig")
        .def(py::init<>())
        .def_readwrite("t_eval", &ScoringConfig::t_eval)
        .def_readwrite("lambda_", &ScoringConfig::lambda)
        .def_readwrite("mode", &ScoringConfig::mode)
        .def_readwrite("k", &ScoringConfig::k)
        .def("validate", &ScoringConfig::validate);
    py::class_<ScoreTrace>(m, "ScoreTrace")
        .def_readonly("timesteps", &ScoreTrace::timesteps)
        .def_readonly("errors", &ScoreTrace::errors)
        .def_readonly("mean_errors", &ScoreTrace::mean_errors);

    m.def("choose_timesteps", &choose_timesteps, "t_eval"_a, "t_max"_a);
    m.def("build_condition_pair", &build_condition_pair, "candidates"_a, "i"_a);
    m.def(
        "combine_noise",
        [](const std::vector<float>& pos, const std::vector<float>& neg, double lambda) {
            return combine_noise(pos, neg, lambda);
        },
        "eps_pos"_a, "eps_neg"_a, "lam"_a);
    m.def(
        "score_candidates",
        [](const std::vector<float>& x, const CandidateSet& c, const Denoiser& d, const ScoringConfig& cfg,
           std::uint64_t seed) {
            Rng rng(seed);
            return score_candidates(x, c, d, cfg, rng);
        },
        "x"_a, "candidates"_a, "model"_a, "config"_a, "seed"_a);
    m.def("select_label", &select_label, "trace"_a, "candidates"_a, "mode"_a);
}

void declare_pipeline(py::module_& m) {
    py::enum_<VoteRule>(m, "VoteRule")
        .value("plurality", VoteRule::plurality)
        .value("summed_error", VoteRule::summed_error);
    py::class_<PipelineConfig>(m, "PipelineConfig")
        .def(py::init<>())
        .def_readwrite("scoring", &PipelineConfig::scoring)
        .def_readwrite("voters", &PipelineConfig::voters)
        .def_readwrite("vote_rule", &PipelineConfig::vote_rule)
        .def_readwrite("seed", &PipelineConfig::seed);
    py::class_<RunSettings>(m, "RunSettings")
        .def(py::init<>())
        .def_readwrite("prot", &RunSettings::prot)
        .def_readwrite("threshold_mode", &RunSettings::threshold_mode)
        .def_readwrite("pipeline", &RunSettings::pipeline);

    py::class_<PredictionOutcome>(m, "PredictionOutcome")
        .def_readonly("final_label", &PredictionOutcome::final_label)
        .def_readonly("is_protected", &PredictionOutcome::is_protected)
        .def_readonly("base_top1", &PredictionOutcome::base_top1)
        .def_readonly("voter_labels", &PredictionOutcome::voter_labels)
        .def_readonly("s_value", &PredictionOutcome::s_value);
    m.def("voter_seed", &voter_seed, "base_seed"_a, "example"_a, "voter"_a);
    m.def(
        "classify_one",
        [](const std::vector<float>& x, const ClassifierParams& clf, const ProtectorCalibration& cal, const Denoiser& d,
           const PipelineConfig& cfg, const std::vector<std::uint64_t>& seeds) {
            return classify_one(x, clf, cal, d, cfg, seeds);
        },
        "x"_a, "classifier"_a, "calibration"_a, "model"_a, "config"_a, "voter_seeds"_a);

    py::class_<EvaluationReport>(m, "EvaluationReport")
        .def_readonly("n_total", &EvaluationReport::n_total)
        .def_readonly("n_protected", &EvaluationReport::n_protected)
        .def_readonly("n_reclassified", &EvaluationReport::n_reclassified)
        .def_readonly("t_t", &EvaluationReport::t_t)
        .def_readonly("t_f", &EvaluationReport::t_f)
        .def_readonly("f_t", &EvaluationReport::f_t)
        .def_readonly("f_f", &EvaluationReport::f_f)
        .def_readonly("base_accuracy", &EvaluationReport::base_accuracy)
        .def_readonly("final_accuracy", &EvaluationReport::final_accuracy)
        .def_readonly("delta", &EvaluationReport::delta)
        .def("check_invariants", &EvaluationReport::check_invariants)
        .def("to_json", &report_to_json);

    m.def("accuracy_delta_percent", &accuracy_delta_percent, "t_f"_a, "f_t"_a, "n_total"_a);
    m.def(
        "evaluate",
        [](const Dataset& test, const ClassifierParams& clf, const std::vector<double>& scores, const Denoiser& d,
           const RunSettings& settings, int workers) {
            py::gil_scoped_release release;
            return evaluate(test, clf, scores, d, settings, workers);
        },
        "test"_a, "classifier"_a, "correct_scores"_a, "model"_a, "settings"_a, "workers"_a = 1);
    m.def(
        "ablate",
        [](const Dataset& test, const ClassifierParams& clf, const std::vector<double>& scores, const Denoiser& d,
           const RunSettings& settings, const std::string& grid, int workers) {
            py::gil_scoped_release release;
            return ablation_csv(ablate(test, clf, scores, d, settings, parse_grid(grid), workers));
        },
        "test"_a, "classifier"_a, "correct_scores"_a, "model"_a, "settings"_a, "grid"_a, "workers"_a = 1);
}

void declare_io(py::module_& m) {
    m.def(
        "save_models",
        [](const std::string& path, const ClassifierParams* clf, const NetParams* net) {
            Checkpoint ckpt;
            if (clf) store_classifier(ckpt, *clf);
            if (net) store_denoiser(ckpt, *net);
            save_checkpoint(path, ckpt);
        },
        "path"_a, "classifier"_a = nullptr, "denoiser"_a = nullptr);
    m.def(
        "load_classifier", [](const std::string& path) { return restore_classifier(load_checkpoint(path)); }, "path"_a);
    m.def(
        "load_denoiser", [](const std::string& path) { return restore_denoiser(load_checkpoint(path)); }, "path"_a);
    m.def(
        "parse_config_text", [](const std::string& text) { return config_to_json(parse_config_text(text)); }, "text"_a,
        "Validated configuration, normalized to JSON text.");
    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::ostringstream out, err;
            const int code = run_cli(args, out, err);
            return py::make_tuple(code, out.str(), err.str());
        },
        "args"_a, "Runs the command-line tool in-process; returns (exit_code, stdout, stderr).");
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Confidence-gated diffusion re-ranking of classifier predictions";
    declare_errors(m);
    declare_core(m);
    declare_models(m);
    declare_data(m);
    declare_protector(m);
    declare_scoring(m);
    declare_pipeline(m);
    declare_io(m);
}
