#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "dbmef/diffusion_core.hpp"
#include "dbmef/tensor.hpp"

namespace dbmef {

// Conditional noise predictor:
//   z  = [x_t ; time_embedding(t) ; mean(class_embed[cond.classes])]
//   h1 = act(W_in z + b_in)
//   h2 = act(W_hidden h1 + b_hidden)
//   y  = W_out h2 + b_out

enum class Activation {
    silu,      // x * sigmoid(x)
    identity,  // linearity probes in tests only
};

struct NetTensors {
    Tensor class_embed;  // num_classes x e_c
    Tensor w_in;         // h x (d + e_t + e_c)
    Tensor b_in;         // h
    Tensor w_hidden;     // h x h
    Tensor b_hidden;     // h
    Tensor w_out;        // d x h
    Tensor b_out;        // d

    static constexpr std::array<std::pair<const char*, Tensor NetTensors::*>, 7> fields{{
        {"class_embed", &NetTensors::class_embed},
        {"w_in", &NetTensors::w_in},
        {"b_in", &NetTensors::b_in},
        {"w_hidden", &NetTensors::w_hidden},
        {"b_hidden", &NetTensors::b_hidden},
        {"w_out", &NetTensors::w_out},
        {"b_out", &NetTensors::b_out},
    }};

    template <class F>
    void for_each(F&& f) {
        for (const auto& [name, member] : fields) f(name, this->*member);
    }
    template <class F>
    void for_each(F&& f) const {
        for (const auto& [name, member] : fields) f(name, this->*member);
    }

    /// Same shapes, all zeros.
    NetTensors zeros_like() const;

    friend bool operator==(const NetTensors&, const NetTensors&) = default;
};

using GradientBundle = NetTensors;

struct NetParams : NetTensors {
    int data_dim = 0;
    int hidden_dim = 0;
    int time_embed_dim = 0;
    int class_embed_dim = 0;
    int num_classes = 0;
    Activation activation = Activation::silu;
    // Bumped by every in-place mutation so forward caches can detect staleness.
    std::uint64_t revision = 0;

    int input_dim() const { return data_dim + time_embed_dim + class_embed_dim; }
    std::size_t parameter_count() const;
    /// Throws ShapeError if any tensor disagrees with the declared dims.
    void check_shapes() const;
};

NetParams init_params(int data_dim, int hidden_dim, int time_embed_dim, int class_embed_dim,
                      int num_classes, std::uint64_t seed);

std::vector<float> sinusoidal_time_embedding(int t, int dim, int t_max);

std::vector<float> class_set_embedding(const NetParams& params, const Condition& cond);

struct NetCache {
    const NetParams* owner = nullptr;
    std::uint64_t revision = 0;
    std::vector<int> classes;
    std::vector<float> input;  // z
    std::vector<float> pre1, act1, pre2, act2;
    std::vector<float> prediction;
};

struct NetForward {
    std::vector<float> prediction;
    NetCache cache;
};

NetForward net_forward(const NetParams& params, std::span<const float> x_t, int t, const Condition& cond,
                       const NoiseSchedule& schedule);

/// Prediction only; skips building a cache.
std::vector<float> net_predict(const NetParams& params, std::span<const float> x_t, int t,
                               const Condition& cond, const NoiseSchedule& schedule);

struct NetBackward {
    double loss = 0.0;
    GradientBundle grads;
};

NetBackward net_backward(const NetParams& params, const NetCache& cache, std::span<const float> eps_true);

/// Adds scale * dLoss/dParams into `grads` and returns the loss. Used by the
/// trainer to sum a batch without reallocating.
double net_backward_accumulate(const NetParams& params, const NetCache& cache,
                               std::span<const float> eps_true, GradientBundle& grads, double scale);

}  // namespace dbmef
