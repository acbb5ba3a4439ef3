#include "dbmef/base_classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "dbmef/error.hpp"
#include "dbmef/rng.hpp"

namespace dbmef {
namespace {

inline float silu(double x) { return static_cast<float>(x / (1.0 + std::exp(-x))); }

}  // namespace

void ClassifierParams::check_shapes() const {
    using u32 = std::uint32_t;
    if (input_dim < 1 || num_classes < 1 || hidden_dim < 0) throw ShapeError("classifier dimensions invalid");
    const u32 d = input_dim, h = hidden_dim, c = num_classes;
    const bool ok = hidden_dim == 0
                        ? (w_hidden.data.empty() && b_hidden.data.empty() && w_out.shape == std::vector<u32>{c, d})
                        : (w_hidden.shape == std::vector<u32>{h, d} && b_hidden.shape == std::vector<u32>{h} &&
                           w_out.shape == std::vector<u32>{c, h});
    if (!ok || b_out.shape != std::vector<u32>{c} || w_out.data.size() != Tensor::element_count(w_out.shape)) {
        throw ShapeError("classifier tensors do not match declared dimensions");
    }
}

ClassifierParams init_classifier(int input_dim, int hidden_dim, int num_classes, std::uint64_t seed) {
    if (input_dim < 1 || hidden_dim < 0 || num_classes < 2) {
        throw ParameterError("classifier needs input_dim >= 1, hidden_dim >= 0, num_classes >= 2");
    }
    using u32 = std::uint32_t;
    ClassifierParams p;
    p.input_dim = input_dim;
    p.hidden_dim = hidden_dim;
    p.num_classes = num_classes;
    const u32 d = input_dim, h = hidden_dim, c = num_classes;
    if (hidden_dim > 0) {
        p.w_hidden = Tensor({h, d});
        p.b_hidden = Tensor({h});
    } else {
        p.w_hidden = Tensor({0});
        p.b_hidden = Tensor({0});
    }
    p.w_out = Tensor({c, hidden_dim > 0 ? h : d});
    p.b_out = Tensor({c});

    Rng rng(derive_seed(seed, 0xC1A55));
    auto fan_in_uniform = [&](Tensor& w) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(w.cols()));
        for (float& v : w.data) v = static_cast<float>(rng.uniform(-bound, bound));
    };
    fan_in_uniform(p.w_hidden);
    fan_in_uniform(p.w_out);
    return p;
}

std::vector<double> logits(const ClassifierParams& params, std::span<const float> x) {
    if (static_cast<int>(x.size()) != params.input_dim) {
        throw ShapeError("classifier expects " + std::to_string(params.input_dim) + " inputs, got " +
                         std::to_string(x.size()));
    }
    std::vector<float> hidden;
    std::span<const float> features = x;
    if (params.hidden_dim > 0) {
        hidden.resize(params.hidden_dim);
        for (int r = 0; r < params.hidden_dim; ++r) {
            const auto w = params.w_hidden.row(r);
            double acc = params.b_hidden.data[r];
            for (std::size_t c = 0; c < x.size(); ++c) acc += static_cast<double>(w[c]) * x[c];
            hidden[r] = silu(acc);
        }
        features = hidden;
    }
    std::vector<double> out(params.num_classes);
    for (int r = 0; r < params.num_classes; ++r) {
        const auto w = params.w_out.row(r);
        double acc = params.b_out.data[r];
        for (std::size_t c = 0; c < features.size(); ++c) acc += static_cast<double>(w[c]) * features[c];
        out[r] = acc;
    }
    return out;
}

std::vector<double> softmax(std::span<const double> v) {
    if (v.empty()) throw ShapeError("softmax of an empty vector");
    for (double x : v) {
        if (!std::isfinite(x)) throw NumericError("softmax input contains a non-finite value");
    }
    const double top = *std::max_element(v.begin(), v.end());
    std::vector<double> out(v.size());
    double total = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = std::exp(v[i] - top);
        total += out[i];
    }
    for (double& p : out) p /= total;
    return out;
}

double confidence_score(const ClassifierParams& params, std::span<const float> x) {
    const auto p = softmax(logits(params, x));
    return *std::max_element(p.begin(), p.end());
}

namespace {

// Orders by `key` (descending, ties to the lower index) and reports `probs`.
CandidateSet topk_by(std::span<const double> key, std::span<const double> probs, int k) {
    const int n = static_cast<int>(probs.size());
    if (k < 1 || k > n) {
        throw ParameterError("K must be in [1, " + std::to_string(n) + "], got " + std::to_string(k));
    }
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return key[a] > key[b]; });
    CandidateSet out;
    out.labels.assign(order.begin(), order.begin() + k);
    for (int label : out.labels) out.probs.push_back(probs[label]);
    out.s_value = *std::max_element(probs.begin(), probs.end());
    return out;
}

}  // namespace

CandidateSet topk_from_probs(std::span<const double> probs, int k) { return topk_by(probs, probs, k); }

CandidateSet topk_candidates(const ClassifierParams& params, std::span<const float> x, int k) {
    const auto z = logits(params, x);
    return topk_by(z, softmax(z), k);
}

int predict_top1(const ClassifierParams& params, std::span<const float> x) {
    const auto z = logits(params, x);
    return static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
}

}  // namespace dbmef
