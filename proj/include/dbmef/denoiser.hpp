#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <span>
#include <variant>
#include <vector>

#include "dbmef/denoiser_net.hpp"
#include "dbmef/diffusion_core.hpp"

namespace dbmef {

/// A conditional noise predictor eps_theta(x_t, t, condition) bound to the
/// schedule it was built for. Two interchangeable backends: the trainable
/// network and the closed-form Gaussian oracle.
class Denoiser {
public:
    using Backend = std::variant<NetParams, GaussianParams>;

    Denoiser(NetParams net, NoiseSchedule schedule);
    Denoiser(GaussianParams gaussian, NoiseSchedule schedule);

    std::vector<float> predict(std::span<const float> x_t, int t, const Condition& cond) const;

    const Backend& backend() const { return backend_; }
    const NoiseSchedule& schedule() const { return schedule_; }
    int num_classes() const;
    std::size_t data_dim() const;

    /// Number of predict() calls so far, across all copies sharing this counter.
    std::uint64_t invocations() const { return calls_->load(std::memory_order_relaxed); }
    void reset_invocations() const { calls_->store(0, std::memory_order_relaxed); }

private:
    Backend backend_;
    NoiseSchedule schedule_;
    std::shared_ptr<std::atomic<std::uint64_t>> calls_ = std::make_shared<std::atomic<std::uint64_t>>(0);
};

inline std::vector<float> predict_noise(const Denoiser& model, std::span<const float> x_t, int t,
                                        const Condition& cond) {
    return model.predict(x_t, t, cond);
}

}  // namespace dbmef
