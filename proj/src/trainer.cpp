#include "dbmef/trainer.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "dbmef/error.hpp"
#include "dbmef/rng.hpp"

namespace dbmef {
namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(epoch), 1));
    for (std::size_t i = n; i > 1; --i) {
        const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
        std::swap(order[i - 1], order[j]);
    }
    return order;
}

void check_dataset(const Dataset& data, int num_classes) {
    if (data.size() == 0) throw DataError("training set is empty");
    data.validate();
    if (data.num_classes > num_classes) {
        throw DataError("dataset has " + std::to_string(data.num_classes) + " classes, model supports " +
                        std::to_string(num_classes));
    }
}

ClassifierParams classifier_zeros_like(const ClassifierParams& p) {
    ClassifierParams g = p;
    for (const auto& [name, member] : ClassifierParams::fields) std::fill((g.*member).data.begin(), (g.*member).data.end(), 0.0f);
    return g;
}

}  // namespace

void TrainConfig::validate() const {
    if (epochs < 0) throw ParameterError("epochs must be >= 0");
    if (batch_size < 1) throw ParameterError("batch_size must be >= 1");
    auto in_unit = [](double v) { return v > 0.0 && v < 1.0; };
    if (!in_unit(learning_rate)) throw ParameterError("learning_rate must be in (0, 1)");
    if (!in_unit(adam_beta1) || !in_unit(adam_beta2)) throw ParameterError("adam betas must be in (0, 1)");
    if (!(adam_epsilon > 0.0)) throw ParameterError("adam_epsilon must be > 0");
    if (t_max < 1) throw ParameterError("t_max must be >= 1");
}

void adam_update(std::span<const std::span<float>> params, std::span<const std::span<const float>> grads,
                 OptimizerState& state, const TrainConfig& config) {
    if (params.size() != grads.size()) throw ShapeError("adam_update: parameter/gradient list lengths differ");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].size() != grads[i].size()) {
            throw ShapeError("adam_update: gradient shape mismatch in parameter array " + std::to_string(i));
        }
    }
    if (state.first_moment.empty() && state.step == 0) {
        for (const auto& p : params) {
            state.first_moment.emplace_back(p.size(), 0.0f);
            state.second_moment.emplace_back(p.size(), 0.0f);
        }
    }
    if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
        throw ShapeError("adam_update: optimizer state does not match parameter list");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (state.first_moment[i].size() != params[i].size() ||
            state.second_moment[i].size() != params[i].size()) {
            throw ShapeError("adam_update: shape mismatch in parameter array " + std::to_string(i));
        }
    }

    ++state.step;
    const double b1 = config.adam_beta1, b2 = config.adam_beta2;
    const double correction1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double correction2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& m = state.first_moment[i];
        auto& v = state.second_moment[i];
        for (std::size_t j = 0; j < params[i].size(); ++j) {
            const double g = grads[i][j];
            const double mj = b1 * m[j] + (1.0 - b1) * g;
            const double vj = b2 * v[j] + (1.0 - b2) * g * g;
            m[j] = static_cast<float>(mj);
            v[j] = static_cast<float>(vj);
            const double m_hat = mj / correction1;
            const double v_hat = vj / correction2;
            params[i][j] = static_cast<float>(params[i][j] - config.learning_rate * m_hat / (std::sqrt(v_hat) + config.adam_epsilon));
        }
    }
}

void adam_update(NetParams& params, const GradientBundle& grads, OptimizerState& state, const TrainConfig& config) {
    std::vector<std::span<float>> p;
    std::vector<std::span<const float>> g;
    for (const auto& [name, member] : NetTensors::fields) {
        if (!(params.*member).same_shape(grads.*member)) {
            throw ShapeError(std::string("adam_update: gradient for '") + name + "' has the wrong shape");
        }
        p.emplace_back((params.*member).data);
        g.emplace_back((grads.*member).data);
    }
    adam_update(p, g, state, config);
    ++params.revision;
}

void adam_update(ClassifierParams& params, const ClassifierParams& grads, OptimizerState& state,
                 const TrainConfig& config) {
    std::vector<std::span<float>> p;
    std::vector<std::span<const float>> g;
    for (const auto& [name, member] : ClassifierParams::fields) {
        if (!(params.*member).same_shape(grads.*member)) {
            throw ShapeError(std::string("adam_update: gradient for '") + name + "' has the wrong shape");
        }
        p.emplace_back((params.*member).data);
        g.emplace_back((grads.*member).data);
    }
    adam_update(p, g, state, config);
}

DenoiserTrainResult train_denoiser(const Dataset& data, NetParams params, const NoiseSchedule& schedule,
                                   const TrainConfig& config) {
    config.validate();
    check_dataset(data, params.num_classes);
    params.check_shapes();
    if (static_cast<int>(data.dim) != params.data_dim) {
        throw ShapeError("dataset dimension " + std::to_string(data.dim) + " does not match denoiser input " +
                         std::to_string(params.data_dim));
    }
    if (schedule.t_max != config.t_max) {
        throw ParameterError("training config t_max " + std::to_string(config.t_max) +
                             " does not match schedule t_max " + std::to_string(schedule.t_max));
    }

    DenoiserTrainResult result;
    OptimizerState state;
    GradientBundle grads = params.zeros_like();
    std::vector<float> eps(data.dim);
    const std::size_t n = data.size();

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const auto order = epoch_order(n, config.seed, epoch);
        Rng noise(derive_seed(config.seed, static_cast<std::uint64_t>(epoch), 2));
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const std::size_t stop = std::min(n, start + static_cast<std::size_t>(config.batch_size));
            const double scale = 1.0 / static_cast<double>(stop - start);
            grads.for_each([](const char*, Tensor& t) { std::fill(t.data.begin(), t.data.end(), 0.0f); });
            for (std::size_t b = start; b < stop; ++b) {
                const std::size_t idx = order[b];
                const int t = static_cast<int>(noise.uniform_int(1, schedule.t_max));
                for (float& e : eps) e = static_cast<float>(noise.normal());
                const auto x_t = forward_diffuse(data.row(idx), t, eps, schedule);
                const auto fwd = net_forward(params, x_t, t, Condition::positive(data.labels[idx]), schedule);
                epoch_loss += net_backward_accumulate(params, fwd.cache, eps, grads, scale);
            }
            adam_update(params, grads, state, config);
        }
        result.loss_curve.push_back(epoch_loss / static_cast<double>(n));
    }
    result.params = std::move(params);
    return result;
}

double classifier_backward_accumulate(const ClassifierParams& params, std::span<const float> x, int label,
                                      ClassifierParams& grads, double scale) {
    if (static_cast<int>(x.size()) != params.input_dim) throw ShapeError("classifier input dimension mismatch");
    if (label < 0 || label >= params.num_classes) throw DataError("label outside classifier range");

    const int h = params.hidden_dim;
    std::vector<double> pre(h), act(h);
    for (int r = 0; r < h; ++r) {
        const auto w = params.w_hidden.row(r);
        double acc = params.b_hidden.data[r];
        for (std::size_t c = 0; c < x.size(); ++c) acc += static_cast<double>(w[c]) * x[c];
        pre[r] = acc;
        act[r] = static_cast<float>(acc / (1.0 + std::exp(-acc)));
    }
    const auto z = logits(params, x);
    const auto p = softmax(z);
    const double loss = -std::log(std::max(p[label], 1e-300));

    const std::size_t feat = h > 0 ? static_cast<std::size_t>(h) : x.size();
    std::vector<double> dfeat(feat, 0.0);
    for (int k = 0; k < params.num_classes; ++k) {
        const double dz = scale * (p[k] - (k == label ? 1.0 : 0.0));
        grads.b_out.data[k] += static_cast<float>(dz);
        auto gw = grads.w_out.row(k);
        const auto w = params.w_out.row(k);
        for (std::size_t c = 0; c < feat; ++c) {
            const double f = h > 0 ? act[c] : x[c];
            gw[c] += static_cast<float>(dz * f);
            dfeat[c] += dz * w[c];
        }
    }
    for (int r = 0; r < h; ++r) {
        const double s = sigmoid(pre[r]);
        const double dpre = dfeat[r] * s * (1.0 + pre[r] * (1.0 - s));
        grads.b_hidden.data[r] += static_cast<float>(dpre);
        auto gw = grads.w_hidden.row(r);
        for (std::size_t c = 0; c < x.size(); ++c) gw[c] += static_cast<float>(dpre * x[c]);
    }
    return loss;
}

double training_accuracy(const ClassifierParams& params, const Dataset& data) {
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (predict_top1(params, data.row(i)) == data.labels[i]) ++correct;
    }
    return data.size() == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(data.size());
}

ClassifierTrainResult train_base_classifier(const Dataset& data, ClassifierParams params, const TrainConfig& config) {
    config.validate();
    check_dataset(data, params.num_classes);
    params.check_shapes();
    if (static_cast<int>(data.dim) != params.input_dim) throw ShapeError("dataset dimension does not match classifier");

    ClassifierTrainResult result;
    OptimizerState state;
    ClassifierParams grads = classifier_zeros_like(params);
    const std::size_t n = data.size();
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const auto order = epoch_order(n, config.seed, epoch);
        for (std::size_t start = 0; start < n; start += config.batch_size) {
            const std::size_t stop = std::min(n, start + static_cast<std::size_t>(config.batch_size));
            const double scale = 1.0 / static_cast<double>(stop - start);
            grads = classifier_zeros_like(params);
            for (std::size_t b = start; b < stop; ++b) {
                classifier_backward_accumulate(params, data.row(order[b]), data.labels[order[b]], grads, scale);
            }
            adam_update(params, grads, state, config);
        }
        result.accuracy_curve.push_back(training_accuracy(params, data));
    }
    result.params = std::move(params);
    return result;
}

}  // namespace dbmef
