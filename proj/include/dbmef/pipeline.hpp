#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dbmef/base_classifier.hpp"
#include "dbmef/confidence_protector.hpp"
#include "dbmef/dataset.hpp"
#include "dbmef/denoiser.hpp"
#include "dbmef/diffusion_classifier.hpp"

namespace dbmef {

/// plurality: most common voter label; ties by best summed mean error, then base rank.
/// summed_error: one selection over mean errors summed across voters.
enum class VoteRule { plurality, summed_error };

inline constexpr int kDefaultVoters = 5;

struct PipelineConfig {
    ScoringConfig scoring;
    int voters = kDefaultVoters;
    VoteRule vote_rule = VoteRule::plurality;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Everything needed to build a calibration plus run the pipeline.
struct RunSettings {
    double prot = kDefaultProt;
    ThresholdMode threshold_mode = ThresholdMode::absolute;
    PipelineConfig pipeline;
};

struct PredictionOutcome {
    int final_label = -1;
    bool is_protected = false;
    int base_top1 = -1;
    std::vector<int> voter_labels;  // empty when protected
    double s_value = 0.0;
};

/// Seed of voter `voter` for example `example`, derived from the run seed only.
std::uint64_t voter_seed(std::uint64_t base_seed, std::uint64_t example, std::uint64_t voter);

PredictionOutcome classify_one(std::span<const float> x, const ClassifierParams& classifier,
                               const ProtectorCalibration& calibration, const Denoiser& model,
                               const PipelineConfig& config, std::span<const std::uint64_t> voter_seeds);

int vote(std::span<const int> voter_labels, std::span<const ScoreTrace> traces, const CandidateSet& candidates,
         ScoringMode mode = ScoringMode::combined, VoteRule rule = VoteRule::plurality);

struct ConfigEcho {
    double prot = kDefaultProt;
    ThresholdMode threshold_mode = ThresholdMode::absolute;
    double threshold = kDefaultProt;
    std::string threshold_kind = "value";
    double lambda = kDefaultLambda;
    ScoringMode scoring = ScoringMode::combined;
    int t_eval = kDefaultEvalTimesteps;
    int voters = kDefaultVoters;
    int k = kDefaultTopK;
    VoteRule vote_rule = VoteRule::plurality;
    std::uint64_t seed = 0;
};

struct EvaluationReport {
    std::size_t n_total = 0;
    std::size_t n_protected = 0;
    std::size_t n_reclassified = 0;
    std::size_t t_t = 0, t_f = 0, f_t = 0, f_f = 0;
    std::size_t base_correct = 0;
    std::size_t final_correct = 0;
    double base_accuracy = 0.0;
    double final_accuracy = 0.0;
    double delta = 0.0;  // percentage points
    ConfigEcho config;

    /// Throws ContractError if any accounting identity fails.
    void check_invariants() const;
};

/// 100 * (f_t - t_f) / n.
double accuracy_delta_percent(std::size_t t_f, std::size_t f_t, std::size_t n_total);

/// Tally a report from per-example outcomes; order of outcomes is irrelevant.
EvaluationReport tally(std::span<const PredictionOutcome> outcomes, std::span<const int> labels, ConfigEcho echo);

/// Runs the pipeline over every example. Results do not depend on `workers`.
EvaluationReport evaluate(const Dataset& test, const ClassifierParams& classifier,
                          const ProtectorCalibration& calibration, const Denoiser& model,
                          const PipelineConfig& config, int workers = 1);

EvaluationReport evaluate(const Dataset& test, const ClassifierParams& classifier,
                          std::span<const double> correct_scores, const Denoiser& model, const RunSettings& settings,
                          int workers = 1);

std::string report_to_json(const EvaluationReport& report);

struct AblationGrid {
    std::string parameter;  // lambda | prot | t_eval | voters | K | mode
    std::vector<std::string> values;
};

/// "name=v1,v2,..." as given on the command line.
AblationGrid parse_grid(const std::string& text);

struct AblationRow {
    std::string parameter;
    std::string value;
    EvaluationReport report;
};

std::vector<AblationRow> ablate(const Dataset& test, const ClassifierParams& classifier,
                                std::span<const double> correct_scores, const Denoiser& model,
                                const RunSettings& base, const AblationGrid& grid, int workers = 1);

std::string ablation_csv(std::span<const AblationRow> rows);

const char* to_string(VoteRule rule);
VoteRule vote_rule_from_string(const std::string& s);

}  // namespace dbmef
