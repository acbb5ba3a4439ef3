#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace dbmef {

/// Linear-in-t variance schedule and its cumulative products.
/// Timesteps are 1-based: betas[t - 1] is beta_t.
struct NoiseSchedule {
    int t_max = 0;
    std::vector<double> betas;
    std::vector<double> alpha_bars;
};

inline constexpr int kDefaultTMax = 1000;
inline constexpr double kDefaultBetaStart = 1e-4;
inline constexpr double kDefaultBetaEnd = 0.02;

NoiseSchedule make_linear_schedule(int t_max = kDefaultTMax, double beta_start = kDefaultBetaStart,
                                   double beta_end = kDefaultBetaEnd);

/// Cumulative product up to t; alpha_bar(s, 0) == 1.
double alpha_bar(const NoiseSchedule& schedule, int t);

/// sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps.
std::vector<float> forward_diffuse(std::span<const float> x0, int t, std::span<const float> eps,
                                   const NoiseSchedule& schedule);

/// Mean squared difference, accumulated in double.
double simple_loss(std::span<const float> eps_true, std::span<const float> eps_pred);

enum class ConditionKind { positive, negative };

/// Class-set conditioning. Positive conditions name one class; negative
/// conditions name every other candidate, kept in base-rank order.
struct Condition {
    ConditionKind kind = ConditionKind::positive;
    std::vector<int> classes;

    static Condition positive(int cls) { return {ConditionKind::positive, {cls}}; }
    static Condition negative(std::vector<int> classes) {
        return {ConditionKind::negative, std::move(classes)};
    }

    friend bool operator==(const Condition&, const Condition&) = default;
};

/// Throws ConditionError when the condition is malformed for num_classes.
void validate_condition(const Condition& cond, int num_classes);

/// Class-conditional isotropic Gaussians x0 ~ N(mu_c, sigma^2 I).
struct GaussianParams {
    std::vector<std::vector<float>> class_means;
    double sigma = 1.0;

    int num_classes() const { return static_cast<int>(class_means.size()); }
    std::size_t dim() const { return class_means.empty() ? 0 : class_means.front().size(); }
};

void validate_gaussian_params(const GaussianParams& params);

/// Minimum-MSE noise estimate E[eps | x_t, class] under GaussianParams. For a
/// multi-class condition the class means are averaged first.
std::vector<float> analytic_gaussian_predict(const GaussianParams& params, std::span<const float> x_t,
                                             int t, const Condition& cond,
                                             const NoiseSchedule& schedule);

}  // namespace dbmef
