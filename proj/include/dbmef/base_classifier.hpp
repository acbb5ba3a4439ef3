#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "dbmef/tensor.hpp"

namespace dbmef {

/// Single-hidden-layer perceptron f(x) -> logits. hidden_dim == 0 gives a
/// plain linear softmax classifier (w_out is then num_classes x input_dim).
struct ClassifierParams {
    int input_dim = 0;
    int hidden_dim = 0;
    int num_classes = 0;
    Tensor w_hidden;  // h x d (empty when linear)
    Tensor b_hidden;  // h
    Tensor w_out;     // C x (h or d)
    Tensor b_out;     // C

    static constexpr std::array<std::pair<const char*, Tensor ClassifierParams::*>, 4> fields{{
        {"w_hidden", &ClassifierParams::w_hidden},
        {"b_hidden", &ClassifierParams::b_hidden},
        {"w_out", &ClassifierParams::w_out},
        {"b_out", &ClassifierParams::b_out},
    }};

    void check_shapes() const;
    friend bool operator==(const ClassifierParams&, const ClassifierParams&) = default;
};

ClassifierParams init_classifier(int input_dim, int hidden_dim, int num_classes, std::uint64_t seed);

std::vector<double> logits(const ClassifierParams& params, std::span<const float> x);

/// Max-subtracted softmax. Throws NumericError on non-finite input.
std::vector<double> softmax(std::span<const double> v);

/// S(x): the largest softmax probability.
double confidence_score(const ClassifierParams& params, std::span<const float> x);

inline constexpr int kDefaultTopK = 5;

/// Top-K labels of one input, in descending base probability.
struct CandidateSet {
    std::vector<int> labels;
    std::vector<double> probs;
    double s_value = 0.0;

    int k() const { return static_cast<int>(labels.size()); }
};

/// Ties are broken by ascending class index.
CandidateSet topk_candidates(const ClassifierParams& params, std::span<const float> x, int k);
CandidateSet topk_from_probs(std::span<const double> probs, int k);

int predict_top1(const ClassifierParams& params, std::span<const float> x);

}  // namespace dbmef
