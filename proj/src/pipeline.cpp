#include "dbmef/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "dbmef/error.hpp"
#include "dbmef/rng.hpp"

namespace dbmef {
namespace {

bool better_error(double candidate, double incumbent, ScoringMode mode) {
    return mode == ScoringMode::negative ? candidate > incumbent : candidate < incumbent;
}

std::vector<double> summed_errors(std::span<const ScoreTrace> traces, std::size_t k) {
    std::vector<double> sums(k, 0.0);
    for (const auto& tr : traces) {
        if (tr.mean_errors.size() != k) throw ShapeError("vote: trace does not match candidate set");
        for (std::size_t j = 0; j < k; ++j) sums[j] += tr.mean_errors[j];
    }
    return sums;
}

ConfigEcho make_echo(const ProtectorCalibration& cal, const PipelineConfig& config) {
    ConfigEcho echo;
    echo.prot = cal.prot;
    echo.threshold_mode = cal.mode;
    echo.threshold = cal.threshold;
    echo.threshold_kind = cal.kind == ThresholdKind::value ? "value" : cal.kind == ThresholdKind::always ? "always" : "never";
    echo.lambda = config.scoring.lambda;
    echo.scoring = config.scoring.mode;
    echo.t_eval = config.scoring.t_eval;
    echo.voters = config.voters;
    echo.k = config.scoring.k;
    echo.vote_rule = config.vote_rule;
    echo.seed = config.seed;
    return echo;
}

}  // namespace

void PipelineConfig::validate() const {
    scoring.validate();
    if (voters < 1) throw ParameterError("voters must be >= 1");
}

std::uint64_t voter_seed(std::uint64_t base_seed, std::uint64_t example, std::uint64_t voter) {
    return derive_seed(base_seed, example, voter);
}

int vote(std::span<const int> voter_labels, std::span<const ScoreTrace> traces, const CandidateSet& candidates,
         ScoringMode mode, VoteRule rule) {
    const std::size_t k = candidates.labels.size();
    if (voter_labels.empty() && rule == VoteRule::plurality) throw ParameterError("vote needs at least one voter");
    if (traces.empty() && rule == VoteRule::summed_error) throw ParameterError("vote needs at least one trace");
    const auto sums = summed_errors(traces, k);

    std::vector<std::size_t> eligible;
    if (rule == VoteRule::plurality) {
        std::vector<std::size_t> counts(k, 0);
        for (int label : voter_labels) {
            const auto it = std::find(candidates.labels.begin(), candidates.labels.end(), label);
            if (it == candidates.labels.end()) throw ParameterError("voter label is not a candidate");
            ++counts[it - candidates.labels.begin()];
        }
        const std::size_t top = *std::max_element(counts.begin(), counts.end());
        for (std::size_t j = 0; j < k; ++j) {
            if (counts[j] == top) eligible.push_back(j);
        }
    } else {
        for (std::size_t j = 0; j < k; ++j) eligible.push_back(j);
    }
    if (eligible.size() == 1) return candidates.labels[eligible.front()];

    // eligible is in base-rank order, so strict improvement keeps the lower rank on ties
    std::size_t best = eligible.front();
    if (!traces.empty()) {
        for (std::size_t j : eligible) {
            if (better_error(sums[j], sums[best], mode)) best = j;
        }
    }
    return candidates.labels[best];
}

PredictionOutcome classify_one(std::span<const float> x, const ClassifierParams& classifier,
                               const ProtectorCalibration& calibration, const Denoiser& model,
                               const PipelineConfig& config, std::span<const std::uint64_t> voter_seeds) {
    if (voter_seeds.empty()) throw ParameterError("classify_one needs at least one voter seed");
    const auto z = logits(classifier, x);
    const auto probs = softmax(z);

    PredictionOutcome out;
    out.base_top1 = static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
    out.s_value = *std::max_element(probs.begin(), probs.end());
    if (!should_reclassify(out.s_value, calibration)) {
        out.is_protected = true;
        out.final_label = out.base_top1;
        return out;
    }

    ScoringConfig scoring = config.scoring;
    scoring.k = std::min(scoring.k, classifier.num_classes);
    const CandidateSet candidates = topk_candidates(classifier, x, scoring.k);

    std::vector<ScoreTrace> traces;
    traces.reserve(voter_seeds.size());
    for (std::uint64_t seed : voter_seeds) {
        Rng rng(seed);
        traces.push_back(score_candidates(x, candidates, model, scoring, rng));
        out.voter_labels.push_back(select_label(traces.back(), candidates, scoring.mode));
    }
    out.final_label = vote(out.voter_labels, traces, candidates, scoring.mode, config.vote_rule);
    return out;
}

void EvaluationReport::check_invariants() const {
    if (n_reclassified != t_t + t_f + f_t + f_f) throw ContractError("n_reclassified != T_T + T_F + F_T + F_F");
    if (n_total != n_protected + n_reclassified) throw ContractError("n_total != n_protected + n_reclassified");
    if (final_correct + t_f != base_correct + f_t) throw ContractError("final correct count != base + F_T - T_F");
    const double expected = base_accuracy + (static_cast<double>(f_t) - static_cast<double>(t_f)) / static_cast<double>(n_total);
    if (std::abs(final_accuracy - expected) > 1e-9) throw ContractError("final accuracy disagrees with quadrant tallies");
}

double accuracy_delta_percent(std::size_t t_f, std::size_t f_t, std::size_t n_total) {
    if (n_total == 0) throw DataError("accuracy delta over an empty set");
    return 100.0 * (static_cast<double>(f_t) - static_cast<double>(t_f)) / static_cast<double>(n_total);
}

EvaluationReport tally(std::span<const PredictionOutcome> outcomes, std::span<const int> labels, ConfigEcho echo) {
    if (outcomes.empty()) throw DataError("cannot evaluate an empty test set");
    if (outcomes.size() != labels.size()) throw ShapeError("outcome and label counts differ");
    EvaluationReport r;
    r.config = std::move(echo);
    r.n_total = outcomes.size();
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        const auto& o = outcomes[i];
        const bool base_ok = o.base_top1 == labels[i];
        const bool final_ok = o.final_label == labels[i];
        r.base_correct += base_ok;
        r.final_correct += final_ok;
        if (o.is_protected) {
            ++r.n_protected;
            continue;
        }
        ++r.n_reclassified;
        if (base_ok && final_ok) ++r.t_t;
        else if (base_ok) ++r.t_f;
        else if (final_ok) ++r.f_t;
        else ++r.f_f;
    }
    const double n = static_cast<double>(r.n_total);
    r.base_accuracy = static_cast<double>(r.base_correct) / n;
    r.final_accuracy = static_cast<double>(r.final_correct) / n;
    r.delta = accuracy_delta_percent(r.t_f, r.f_t, r.n_total);
    r.check_invariants();
    return r;
}

EvaluationReport evaluate(const Dataset& test, const ClassifierParams& classifier,
                          const ProtectorCalibration& calibration, const Denoiser& model,
                          const PipelineConfig& config, int workers) {
    if (test.size() == 0) throw DataError("cannot evaluate an empty test set");
    test.validate();
    config.validate();
    if (static_cast<int>(test.dim) != classifier.input_dim || test.dim != model.data_dim()) {
        throw ShapeError("test data dimension does not match the classifier or denoiser");
    }

    const std::size_t n = test.size();
    std::vector<PredictionOutcome> outcomes(n);
    auto run_one = [&](std::size_t i) {
        std::vector<std::uint64_t> seeds(config.voters);
        for (int v = 0; v < config.voters; ++v) seeds[v] = voter_seed(config.seed, i, static_cast<std::uint64_t>(v));
        outcomes[i] = classify_one(test.row(i), classifier, calibration, model, config, seeds);
    };

    const int threads = std::max(1, std::min<int>(workers, static_cast<int>(n)));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) run_one(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::exception_ptr failure;
        std::mutex failure_mutex;
        std::vector<std::thread> pool;
        for (int w = 0; w < threads; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
                    try {
                        run_one(i);
                    } catch (...) {
                        std::lock_guard lock(failure_mutex);
                        if (!failure) failure = std::current_exception();
                        next.store(n);
                    }
                }
            });
        }
        for (auto& t : pool) t.join();
        if (failure) std::rethrow_exception(failure);
    }
    return tally(outcomes, test.labels, make_echo(calibration, config));
}

EvaluationReport evaluate(const Dataset& test, const ClassifierParams& classifier,
                          std::span<const double> correct_scores, const Denoiser& model, const RunSettings& settings,
                          int workers) {
    const auto cal = calibrate_threshold(correct_scores, settings.prot, settings.threshold_mode);
    return evaluate(test, classifier, cal, model, settings.pipeline, workers);
}

std::string report_to_json(const EvaluationReport& r) {
    const auto& c = r.config;
    nlohmann::ordered_json j;
    j["n_total"] = r.n_total;
    j["n_protected"] = r.n_protected;
    j["n_reclassified"] = r.n_reclassified;
    j["t_t"] = r.t_t;
    j["t_f"] = r.t_f;
    j["f_t"] = r.f_t;
    j["f_f"] = r.f_f;
    j["base_correct"] = r.base_correct;
    j["final_correct"] = r.final_correct;
    j["base_accuracy"] = r.base_accuracy;
    j["final_accuracy"] = r.final_accuracy;
    j["delta"] = r.delta;
    j["config"] = {
        {"prot", c.prot},
        {"threshold_mode", to_string(c.threshold_mode)},
        {"threshold", c.threshold},
        {"threshold_kind", c.threshold_kind},
        {"mode", to_string(c.scoring)},
        {"lambda", c.lambda},
        {"t_eval", c.t_eval},
        {"voters", c.voters},
        {"K", c.k},
        {"vote", to_string(c.vote_rule)},
        {"seed", c.seed},
    };
    return j.dump(2) + "\n";
}

AblationGrid parse_grid(const std::string& text) {
    const auto eq = text.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == text.size()) {
        throw ParameterError("grid must look like name=v1,v2,..., got '" + text + "'");
    }
    AblationGrid grid;
    grid.parameter = text.substr(0, eq);
    std::stringstream rest(text.substr(eq + 1));
    std::string item;
    while (std::getline(rest, item, ',')) {
        if (item.empty()) throw ParameterError("grid '" + text + "' has an empty value");
        grid.values.push_back(item);
    }
    return grid;
}

namespace {

double parse_number(const std::string& name, const std::string& v) {
    std::size_t used = 0;
    double out = 0.0;
    try {
        out = std::stod(v, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != v.size()) throw ParameterError("grid value '" + v + "' for " + name + " is not a number");
    return out;
}

int parse_int(const std::string& name, const std::string& v) {
    const double d = parse_number(name, v);
    if (d != static_cast<double>(static_cast<int>(d))) throw ParameterError("grid value '" + v + "' for " + name + " is not an integer");
    return static_cast<int>(d);
}

}  // namespace

std::vector<AblationRow> ablate(const Dataset& test, const ClassifierParams& classifier,
                                std::span<const double> correct_scores, const Denoiser& model,
                                const RunSettings& base, const AblationGrid& grid, int workers) {
    static const std::vector<std::string> known = {"lambda", "prot", "t_eval", "voters", "K", "mode"};
    if (std::find(known.begin(), known.end(), grid.parameter) == known.end()) {
        throw ParameterError("unknown ablation parameter '" + grid.parameter +
                             "' (expected lambda, prot, t_eval, voters, K or mode)");
    }
    if (grid.values.empty()) throw ParameterError("ablation grid has no values");

    // resolve every grid point before running any so a bad value fails fast
    std::vector<RunSettings> points;
    for (const auto& v : grid.values) {
        RunSettings s = base;
        const auto& p = grid.parameter;
        if (p == "lambda") s.pipeline.scoring.lambda = parse_number(p, v);
        else if (p == "prot") s.prot = parse_number(p, v);
        else if (p == "t_eval") s.pipeline.scoring.t_eval = parse_int(p, v);
        else if (p == "voters") s.pipeline.voters = parse_int(p, v);
        else if (p == "K") s.pipeline.scoring.k = parse_int(p, v);
        else s.pipeline.scoring.mode = scoring_mode_from_string(v);
        s.pipeline.validate();
        if (!(s.prot >= 0.0 && s.prot <= 1.0)) throw ParameterError("prot grid value outside [0, 1]");
        points.push_back(s);
    }

    std::vector<AblationRow> rows;
    for (std::size_t i = 0; i < points.size(); ++i) {
        rows.push_back({grid.parameter, grid.values[i], evaluate(test, classifier, correct_scores, model, points[i], workers)});
    }
    return rows;
}

std::string ablation_csv(std::span<const AblationRow> rows) {
    std::ostringstream os;
    os.precision(17);
    os << "parameter,value,n_total,n_protected,n_reclassified,t_t,t_f,f_t,f_f,base_accuracy,final_accuracy,delta\n";
    for (const auto& row : rows) {
        const auto& r = row.report;
        os << row.parameter << ',' << row.value << ',' << r.n_total << ',' << r.n_protected << ',' << r.n_reclassified
           << ',' << r.t_t << ',' << r.t_f << ',' << r.f_t << ',' << r.f_f << ',' << r.base_accuracy << ','
           << r.final_accuracy << ',' << r.delta << '\n';
    }
    return os.str();
}

const char* to_string(VoteRule rule) { return rule == VoteRule::plurality ? "plurality" : "summed_error"; }

VoteRule vote_rule_from_string(const std::string& s) {
    if (s == "plurality") return VoteRule::plurality;
    if (s == "summed_error") return VoteRule::summed_error;
    throw ValidationError("vote rule must be 'plurality' or 'summed_error', got '" + s + "'");
}

}  // namespace dbmef
