#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dbmef/base_classifier.hpp"
#include "dbmef/denoiser.hpp"
#include "dbmef/rng.hpp"

namespace dbmef {

/// Which noise prediction each candidate is scored with.
///   positive: eps(x_t, t, {C_j}); lowest error wins
///   negative: eps(x_t, t, others); highest error wins
///   combined: eps_neg + lambda * (eps_pos - eps_neg); lowest error wins
enum class ScoringMode { positive, negative, combined };

inline constexpr int kDefaultEvalTimesteps = 30;
inline constexpr double kDefaultLambda = 1.1;

struct ScoringConfig {
    int t_eval = kDefaultEvalTimesteps;
    double lambda = kDefaultLambda;
    ScoringMode mode = ScoringMode::combined;
    int k = kDefaultTopK;

    void validate() const;
};

/// errors[j][i]: simple loss of candidate j at timesteps[i].
struct ScoreTrace {
    std::vector<int> timesteps;
    std::vector<std::vector<double>> errors;
    std::vector<double> mean_errors;
};

/// Mid-point stratified plan: t_i = ceil((i + 1/2) * t_max / t_eval).
std::vector<int> choose_timesteps(int t_eval, int t_max);

/// pos = {C_i}; neg = every other candidate in base-rank order.
std::pair<Condition, Condition> build_condition_pair(const CandidateSet& candidates, int i);

/// eps_neg + lambda * (eps_pos - eps_neg).
std::vector<float> combine_noise(std::span<const float> eps_pos, std::span<const float> eps_neg, double lambda);

/// One noise draw and one noised input per timestep, shared by every
/// candidate. Distinct conditions are evaluated once per timestep.
ScoreTrace score_candidates(std::span<const float> x, const CandidateSet& candidates, const Denoiser& model,
                            const ScoringConfig& config, Rng& rng);

/// Index into candidates.labels of the winning candidate. Ties go to the
/// lower base rank.
int select_index(const ScoreTrace& trace, ScoringMode mode);
int select_label(const ScoreTrace& trace, const CandidateSet& candidates, ScoringMode mode);

/// "candidate,timestep,error" rows.
std::string score_trace_csv(const ScoreTrace& trace, const CandidateSet& candidates);

const char* to_string(ScoringMode mode);
ScoringMode scoring_mode_from_string(const std::string& s);

}  // namespace dbmef
