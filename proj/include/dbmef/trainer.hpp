#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dbmef/base_classifier.hpp"
#include "dbmef/dataset.hpp"
#include "dbmef/denoiser_net.hpp"
#include "dbmef/diffusion_core.hpp"

namespace dbmef {

struct TrainConfig {
    int epochs = 30;
    int batch_size = 128;
    double learning_rate = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    std::uint64_t seed = 0;
    int t_max = kDefaultTMax;

    void validate() const;
};

struct OptimizerState {
    std::uint64_t step = 0;
    std::vector<std::vector<float>> first_moment;
    std::vector<std::vector<float>> second_moment;
};

/// Bias-corrected Adam step over a list of parameter arrays. Moments are
/// lazily sized on the first call and must shape-match afterwards.
void adam_update(std::span<const std::span<float>> params, std::span<const std::span<const float>> grads,
                 OptimizerState& state, const TrainConfig& config);

void adam_update(NetParams& params, const GradientBundle& grads, OptimizerState& state, const TrainConfig& config);
void adam_update(ClassifierParams& params, const ClassifierParams& grads, OptimizerState& state,
                 const TrainConfig& config);

struct DenoiserTrainResult {
    NetParams params;
    std::vector<double> loss_curve;  // mean simple loss per epoch
};

/// Noise-prediction training conditioned on each example's true class.
DenoiserTrainResult train_denoiser(const Dataset& data, NetParams params, const NoiseSchedule& schedule,
                                   const TrainConfig& config);

struct ClassifierTrainResult {
    ClassifierParams params;
    std::vector<double> accuracy_curve;  // training accuracy after each epoch
};

/// Softmax cross-entropy training of the base classifier.
ClassifierTrainResult train_base_classifier(const Dataset& data, ClassifierParams params, const TrainConfig& config);

/// Cross-entropy loss of one example and its gradient accumulated (scaled)
/// into `grads`, which must be shape-matched to `params`.
double classifier_backward_accumulate(const ClassifierParams& params, std::span<const float> x, int label,
                                      ClassifierParams& grads, double scale);

double training_accuracy(const ClassifierParams& params, const Dataset& data);

}  // namespace dbmef
