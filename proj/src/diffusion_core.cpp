#include "dbmef/diffusion_core.hpp"

#include <cmath>
#include <string>

#include "dbmef/error.hpp"

namespace dbmef {

NoiseSchedule make_linear_schedule(int t_max, double beta_start, double beta_end) {
    if (t_max < 1) throw ParameterError("schedule needs t_max >= 1, got " + std::to_string(t_max));
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
        throw ParameterError("schedule needs 0 < beta_start <= beta_end < 1, got [" +
                             std::to_string(beta_start) + ", " + std::to_string(beta_end) + "]");
    }
    NoiseSchedule s;
    s.t_max = t_max;
    s.betas.resize(t_max);
    s.alpha_bars.resize(t_max);
    double running = 1.0;
    for (int i = 0; i < t_max; ++i) {
        const double frac = t_max == 1 ? 0.0 : static_cast<double>(i) / (t_max - 1);
        s.betas[i] = beta_start + (beta_end - beta_start) * frac;
        running *= 1.0 - s.betas[i];
        s.alpha_bars[i] = running;
    }
    return s;
}

double alpha_bar(const NoiseSchedule& schedule, int t) {
    if (t < 0 || t > schedule.t_max) {
        throw IndexError("timestep " + std::to_string(t) + " outside [0, " +
                         std::to_string(schedule.t_max) + "]");
    }
    return t == 0 ? 1.0 : schedule.alpha_bars[t - 1];
}

std::vector<float> forward_diffuse(std::span<const float> x0, int t, std::span<const float> eps,
                                   const NoiseSchedule& schedule) {
    if (x0.size() != eps.size()) {
        throw ShapeError("forward_diffuse: x0 has " + std::to_string(x0.size()) + " elements, eps has " +
                         std::to_string(eps.size()));
    }
    if (t < 1 || t > schedule.t_max) {
        throw IndexError("forward_diffuse: timestep " + std::to_string(t) + " outside [1, " +
                         std::to_string(schedule.t_max) + "]");
    }
    const double ab = schedule.alpha_bars[t - 1];
    const double signal = std::sqrt(ab);
    const double noise = std::sqrt(1.0 - ab);
    std::vector<float> out(x0.size());
    for (std::size_t i = 0; i < x0.size(); ++i) {
        out[i] = static_cast<float>(signal * x0[i] + noise * eps[i]);
    }
    return out;
}

double simple_loss(std::span<const float> eps_true, std::span<const float> eps_pred) {
    if (eps_true.size() != eps_pred.size()) {
        throw ShapeError("simple_loss: sizes " + std::to_string(eps_true.size()) + " and " +
                         std::to_string(eps_pred.size()) + " differ");
    }
    if (eps_true.empty()) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < eps_true.size(); ++i) {
        const double diff = static_cast<double>(eps_true[i]) - eps_pred[i];
        acc += diff * diff;
    }
    return acc / static_cast<double>(eps_true.size());
}

void validate_condition(const Condition& cond, int num_classes) {
    if (cond.classes.empty()) throw ConditionError("condition has no classes");
    if (cond.kind == ConditionKind::positive && cond.classes.size() != 1) {
        throw ConditionError("positive condition must name exactly one class, got " +
                             std::to_string(cond.classes.size()));
    }
    for (int c : cond.classes) {
        if (c < 0 || c >= num_classes) {
            throw ConditionError("condition class " + std::to_string(c) + " outside [0, " +
                                 std::to_string(num_classes) + ")");
        }
    }
}

void validate_gaussian_params(const GaussianParams& params) {
    if (!(params.sigma > 0.0)) throw ParameterError("gaussian sigma must be > 0");
    if (params.class_means.empty()) throw ParameterError("gaussian params need at least one class mean");
    const std::size_t d = params.class_means.front().size();
    for (const auto& mu : params.class_means) {
        if (mu.size() != d) throw ShapeError("gaussian class means have inconsistent dimensions");
    }
}

std::vector<float> analytic_gaussian_predict(const GaussianParams& params, std::span<const float> x_t,
                                             int t, const Condition& cond,
                                             const NoiseSchedule& schedule) {
    validate_condition(cond, params.num_classes());
    const std::size_t d = params.dim();
    if (x_t.size() != d) {
        throw ShapeError("analytic predictor expects " + std::to_string(d) + " elements, got " +
                         std::to_string(x_t.size()));
    }
    const double ab = alpha_bar(schedule, t);
    const double var = params.sigma * params.sigma;
    const double gain = std::sqrt(1.0 - ab) / (ab * var + 1.0 - ab);
    const double shrink = std::sqrt(ab);
    const double inv_k = 1.0 / static_cast<double>(cond.classes.size());

    std::vector<float> out(d);
    for (std::size_t i = 0; i < d; ++i) {
        double mean = 0.0;
        for (int c : cond.classes) mean += params.class_means[c][i];
        mean *= inv_k;
        out[i] = static_cast<float>(gain * (x_t[i] - shrink * mean));
    }
    return out;
}

}  // namespace dbmef
