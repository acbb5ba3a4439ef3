#pragma once

#include <cstdint>
#include <string>

#include "dbmef/confidence_protector.hpp"
#include "dbmef/diffusion_classifier.hpp"
#include "dbmef/pipeline.hpp"
#include "dbmef/trainer.hpp"

namespace dbmef {

enum class DenoiserBackendKind { network, analytic };

struct DenoiserArch {
    DenoiserBackendKind backend = DenoiserBackendKind::network;
    int hidden = 256;
    int time_embed_dim = 32;
    int class_embed_dim = 16;
};

/// Synthetic Gaussian task used when no IDX files are given. Class means are
/// symmetric_class_means(num_classes, dim, offset).
struct SyntheticConfig {
    int num_classes = 2;
    int dim = 16;
    double sigma = 1.2;
    double offset = 0.4;
    int n_train_per_class = 2000;
    int n_test_per_class = 1000;
};

struct RunConfig {
    double prot = kDefaultProt;
    ThresholdMode threshold_mode = ThresholdMode::absolute;
    ScoringMode mode = ScoringMode::combined;
    int t_eval = kDefaultEvalTimesteps;
    double lambda = kDefaultLambda;
    int voters = kDefaultVoters;
    int k = kDefaultTopK;
    VoteRule vote = VoteRule::plurality;
    int t_max = kDefaultTMax;
    double beta_start = kDefaultBetaStart;
    double beta_end = kDefaultBetaEnd;
    std::uint64_t seed = 0;
    int workers = 1;

    DenoiserArch denoiser;
    TrainConfig train_diffusion;
    TrainConfig train_base{.epochs = 5};
    int base_hidden = 0;
    SyntheticConfig synthetic;

    RunSettings run_settings() const;
    /// Re-seeds every seeded component.
    void set_seed(std::uint64_t s);
};

/// Parses a JSON object; absent keys keep their defaults, unknown keys and
/// out-of-range values are rejected. Never returns a partially applied config.
RunConfig parse_config_text(const std::string& text);
RunConfig parse_config(const std::string& path);

/// Normalized JSON echo of a configuration.
std::string config_to_json(const RunConfig& config);

}  // namespace dbmef
