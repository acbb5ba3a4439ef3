#include "dbmef/denoiser.hpp"

#include <string>

#include "dbmef/error.hpp"

namespace dbmef {

Denoiser::Denoiser(NetParams net, NoiseSchedule schedule)
    : backend_(std::move(net)), schedule_(std::move(schedule)) {
    std::get<NetParams>(backend_).check_shapes();
}

Denoiser::Denoiser(GaussianParams gaussian, NoiseSchedule schedule)
    : backend_(std::move(gaussian)), schedule_(std::move(schedule)) {
    validate_gaussian_params(std::get<GaussianParams>(backend_));
}

int Denoiser::num_classes() const {
    return std::visit(
        [](const auto& b) {
            if constexpr (std::is_same_v<std::decay_t<decltype(b)>, NetParams>) return b.num_classes;
            else return b.num_classes();
        },
        backend_);
}

std::size_t Denoiser::data_dim() const {
    return std::visit(
        [](const auto& b) -> std::size_t {
            if constexpr (std::is_same_v<std::decay_t<decltype(b)>, NetParams>) return b.data_dim;
            else return b.dim();
        },
        backend_);
}

std::vector<float> Denoiser::predict(std::span<const float> x_t, int t, const Condition& cond) const {
    if (t < 0 || t > schedule_.t_max) {
        throw IndexError("denoiser timestep " + std::to_string(t) + " outside [0, " +
                         std::to_string(schedule_.t_max) + "]");
    }
    validate_condition(cond, num_classes());
    calls_->fetch_add(1, std::memory_order_relaxed);
    if (const auto* net = std::get_if<NetParams>(&backend_)) {
        return net_predict(*net, x_t, t, cond, schedule_);
    }
    return analytic_gaussian_predict(std::get<GaussianParams>(backend_), x_t, t, cond, schedule_);
}

}  // namespace dbmef
