#include "dbmef/diffusion_classifier.hpp"

#include <map>
#include <sstream>

#include "dbmef/error.hpp"

namespace dbmef {

void ScoringConfig::validate() const {
    if (t_eval < 1) throw ParameterError("t_eval must be >= 1");
    if (k < 1) throw ParameterError("K must be >= 1");
    if (!(lambda >= 0.0)) throw ParameterError("lambda must be >= 0");
    if (mode == ScoringMode::combined && lambda < 1.0) {
        throw ParameterError("combined scoring requires lambda >= 1, got " + std::to_string(lambda));
    }
}

std::vector<int> choose_timesteps(int t_eval, int t_max) {
    if (t_max < 1) throw ParameterError("t_max must be >= 1");
    if (t_eval < 1 || t_eval > t_max) {
        throw ParameterError("t_eval must be in [1, " + std::to_string(t_max) + "], got " + std::to_string(t_eval));
    }
    std::vector<int> out(t_eval);
    const std::int64_t num = t_max, den = 2 * static_cast<std::int64_t>(t_eval);
    for (int i = 0; i < t_eval; ++i) {
        // ceil((2i + 1) * t_max / (2 t_eval)) in exact integer arithmetic
        const std::int64_t a = (2 * static_cast<std::int64_t>(i) + 1) * num;
        out[i] = static_cast<int>(std::clamp<std::int64_t>((a + den - 1) / den, 1, t_max));
    }
    return out;
}

std::pair<Condition, Condition> build_condition_pair(const CandidateSet& candidates, int i) {
    const int k = candidates.k();
    if (i < 0 || i >= k) throw IndexError("candidate index " + std::to_string(i) + " outside [0, " + std::to_string(k) + ")");
    if (k < 2) throw ConditionError("a negative condition needs at least two candidates");
    std::vector<int> others;
    others.reserve(k - 1);
    for (int j = 0; j < k; ++j) {
        if (j != i) others.push_back(candidates.labels[j]);
    }
    return {Condition::positive(candidates.labels[i]), Condition::negative(std::move(others))};
}

std::vector<float> combine_noise(std::span<const float> eps_pos, std::span<const float> eps_neg, double lambda) {
    if (eps_pos.size() != eps_neg.size()) throw ShapeError("combine_noise: positive and negative predictions differ in size");
    std::vector<float> out(eps_pos.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = static_cast<float>(eps_neg[i] + lambda * (static_cast<double>(eps_pos[i]) - eps_neg[i]));
    }
    return out;
}

ScoreTrace score_candidates(std::span<const float> x, const CandidateSet& candidates, const Denoiser& model,
                            const ScoringConfig& config, Rng& rng) {
    config.validate();
    const int k = candidates.k();
    if (k < 1) throw ConditionError("no candidates to score");
    if (config.mode != ScoringMode::positive && k < 2) {
        throw ConditionError("negative and combined scoring need K >= 2");
    }
    const NoiseSchedule& schedule = model.schedule();

    ScoreTrace trace;
    trace.timesteps = choose_timesteps(config.t_eval, schedule.t_max);
    trace.errors.assign(k, std::vector<double>(trace.timesteps.size(), 0.0));

    std::vector<std::pair<Condition, Condition>> conds;
    conds.reserve(k);
    for (int j = 0; j < k; ++j) {
        if (config.mode == ScoringMode::positive) conds.emplace_back(Condition::positive(candidates.labels[j]), Condition{});
        else conds.push_back(build_condition_pair(candidates, j));
    }

    std::vector<float> eps(x.size());
    // keyed by class list; a singleton negative set shares the prediction of
    // the positive condition on the same class
    std::map<std::vector<int>, std::vector<float>> cache;
    for (std::size_t ti = 0; ti < trace.timesteps.size(); ++ti) {
        const int t = trace.timesteps[ti];
        for (float& e : eps) e = static_cast<float>(rng.normal());
        const auto x_t = forward_diffuse(x, t, eps, schedule);
        cache.clear();
        auto predict = [&](const Condition& c) -> const std::vector<float>& {
            auto it = cache.find(c.classes);
            if (it == cache.end()) it = cache.emplace(c.classes, model.predict(x_t, t, c)).first;
            return it->second;
        };
        for (int j = 0; j < k; ++j) {
            const auto& [pos, neg] = conds[j];
            double err = 0.0;
            switch (config.mode) {
                case ScoringMode::positive: err = simple_loss(eps, predict(pos)); break;
                case ScoringMode::negative: err = simple_loss(eps, predict(neg)); break;
                case ScoringMode::combined: {
                    const auto& p = predict(pos);
                    const auto& n = predict(neg);
                    err = simple_loss(eps, combine_noise(p, n, config.lambda));
                    break;
                }
            }
            trace.errors[j][ti] = err;
        }
    }
    trace.mean_errors.resize(k);
    for (int j = 0; j < k; ++j) {
        double sum = 0.0;
        for (double e : trace.errors[j]) sum += e;
        trace.mean_errors[j] = sum / static_cast<double>(trace.timesteps.size());
    }
    return trace;
}

int select_index(const ScoreTrace& trace, ScoringMode mode) {
    if (trace.mean_errors.empty()) throw ParameterError("empty score trace");
    int best = 0;
    for (int j = 1; j < static_cast<int>(trace.mean_errors.size()); ++j) {
        const double e = trace.mean_errors[j];
        const bool better = mode == ScoringMode::negative ? e > trace.mean_errors[best] : e < trace.mean_errors[best];
        if (better) best = j;
    }
    return best;
}

int select_label(const ScoreTrace& trace, const CandidateSet& candidates, ScoringMode mode) {
    if (trace.mean_errors.size() != candidates.labels.size()) {
        throw ShapeError("score trace does not match the candidate set");
    }
    return candidates.labels[select_index(trace, mode)];
}

std::string score_trace_csv(const ScoreTrace& trace, const CandidateSet& candidates) {
    std::ostringstream os;
    os.precision(17);
    os << "candidate,timestep,error\n";
    for (std::size_t j = 0; j < trace.errors.size(); ++j) {
        for (std::size_t i = 0; i < trace.timesteps.size(); ++i) {
            os << candidates.labels[j] << ',' << trace.timesteps[i] << ',' << trace.errors[j][i] << '\n';
        }
    }
    return os.str();
}

const char* to_string(ScoringMode mode) {
    switch (mode) {
        case ScoringMode::positive: return "positive";
        case ScoringMode::negative: return "negative";
        case ScoringMode::combined: return "combined";
    }
    return "combined";
}

ScoringMode scoring_mode_from_string(const std::string& s) {
    if (s == "positive") return ScoringMode::positive;
    if (s == "negative") return ScoringMode::negative;
    if (s == "combined") return ScoringMode::combined;
    throw ValidationError("scoring mode must be positive, negative or combined, got '" + s + "'");
}

}  // namespace dbmef
