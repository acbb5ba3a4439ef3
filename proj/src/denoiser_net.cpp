#include "dbmef/denoiser_net.hpp"

#include <cmath>
#include <string>

#include "dbmef/error.hpp"
#include "dbmef/rng.hpp"

namespace dbmef {
namespace {

using u32 = std::uint32_t;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline float activate(Activation a, float x) {
    if (a == Activation::identity) return x;
    return static_cast<float>(x * sigmoid(x));
}

inline double activate_grad(Activation a, float x) {
    if (a == Activation::identity) return 1.0;
    const double s = sigmoid(x);
    return s * (1.0 + x * (1.0 - s));
}

// out[r] = b[r] + sum_c w(r, c) * in[c]
void affine(const Tensor& w, const Tensor& b, std::span<const float> in, std::vector<float>& out) {
    const std::size_t rows = w.rows();
    const std::size_t cols = w.cols();
    out.resize(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const float* wr = w.data.data() + r * cols;
        double acc = b.data[r];
        for (std::size_t c = 0; c < cols; ++c) acc += static_cast<double>(wr[c]) * in[c];
        out[r] = static_cast<float>(acc);
    }
}

// grad_w += scale * delta (outer) in ; grad_b += scale * delta
void accumulate_outer(Tensor& grad_w, Tensor& grad_b, std::span<const double> delta, std::span<const float> in,
                      double scale) {
    const std::size_t cols = grad_w.cols();
    for (std::size_t r = 0; r < delta.size(); ++r) {
        const double g = scale * delta[r];
        grad_b.data[r] += static_cast<float>(g);
        if (g == 0.0) continue;
        float* gw = grad_w.data.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) gw[c] += static_cast<float>(g * in[c]);
    }
}

// out[c] = sum_r w(r, c) * delta[r]
std::vector<double> transpose_apply(const Tensor& w, std::span<const double> delta) {
    const std::size_t cols = w.cols();
    std::vector<double> out(cols, 0.0);
    for (std::size_t r = 0; r < delta.size(); ++r) {
        const double g = delta[r];
        if (g == 0.0) continue;
        const float* wr = w.data.data() + r * cols;
        for (std::size_t c = 0; c < cols; ++c) out[c] += g * wr[c];
    }
    return out;
}

void fill_input(const NetParams& params, std::span<const float> x_t, int t, const Condition& cond,
                const NoiseSchedule& schedule, std::vector<float>& z) {
    if (static_cast<int>(x_t.size()) != params.data_dim) {
        throw ShapeError("denoiser expects " + std::to_string(params.data_dim) + " inputs, got " +
                         std::to_string(x_t.size()));
    }
    const auto temb = sinusoidal_time_embedding(t, params.time_embed_dim, schedule.t_max);
    const auto cemb = class_set_embedding(params, cond);
    z.clear();
    z.reserve(params.input_dim());
    z.insert(z.end(), x_t.begin(), x_t.end());
    z.insert(z.end(), temb.begin(), temb.end());
    z.insert(z.end(), cemb.begin(), cemb.end());
}

}  // namespace

NetTensors NetTensors::zeros_like() const {
    NetTensors out;
    for (const auto& [name, member] : fields) out.*member = Tensor((this->*member).shape);
    return out;
}

std::size_t NetParams::parameter_count() const {
    std::size_t n = 0;
    for_each([&](const char*, const Tensor& t) { n += t.size(); });
    return n;
}

void NetParams::check_shapes() const {
    const u32 d = data_dim, h = hidden_dim, ec = class_embed_dim, k = num_classes, in = input_dim();
    auto expect = [](const Tensor& t, std::vector<u32> shape, const char* name) {
        if (t.shape != shape || t.data.size() != Tensor::element_count(shape)) {
            throw ShapeError(std::string("denoiser tensor '") + name + "' has the wrong shape");
        }
    };
    expect(class_embed, {k, ec}, "class_embed");
    expect(w_in, {h, in}, "w_in");
    expect(b_in, {h}, "b_in");
    expect(w_hidden, {h, h}, "w_hidden");
    expect(b_hidden, {h}, "b_hidden");
    expect(w_out, {d, h}, "w_out");
    expect(b_out, {d}, "b_out");
    if (time_embed_dim % 2 != 0) throw ShapeError("time embedding dimension must be even");
}

NetParams init_params(int data_dim, int hidden_dim, int time_embed_dim, int class_embed_dim,
                      int num_classes, std::uint64_t seed) {
    if (data_dim < 1 || hidden_dim < 1 || time_embed_dim < 1 || class_embed_dim < 1 || num_classes < 1) {
        throw ParameterError("denoiser dimensions must all be positive");
    }
    if (time_embed_dim % 2 != 0) {
        throw ParameterError("time embedding dimension must be even, got " + std::to_string(time_embed_dim));
    }
    NetParams p;
    p.data_dim = data_dim;
    p.hidden_dim = hidden_dim;
    p.time_embed_dim = time_embed_dim;
    p.class_embed_dim = class_embed_dim;
    p.num_classes = num_classes;

    const u32 d = data_dim, h = hidden_dim, ec = class_embed_dim, k = num_classes;
    const u32 in = p.input_dim();
    p.class_embed = Tensor({k, ec});
    p.w_in = Tensor({h, in});
    p.b_in = Tensor({h});
    p.w_hidden = Tensor({h, h});
    p.b_hidden = Tensor({h});
    p.w_out = Tensor({d, h});
    p.b_out = Tensor({d});

    Rng rng(derive_seed(seed, 0xD3A01));
    for (float& v : p.class_embed.data) v = static_cast<float>(rng.normal());
    auto fan_in_uniform = [&](Tensor& w) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(w.cols()));
        for (float& v : w.data) v = static_cast<float>(rng.uniform(-bound, bound));
    };
    fan_in_uniform(p.w_in);
    fan_in_uniform(p.w_hidden);
    return p;
}

std::vector<float> sinusoidal_time_embedding(int t, int dim, int t_max) {
    if (dim < 2 || dim % 2 != 0) {
        throw ParameterError("time embedding dimension must be even and positive, got " + std::to_string(dim));
    }
    if (t < 0 || t > t_max) {
        throw IndexError("timestep " + std::to_string(t) + " outside [0, " + std::to_string(t_max) + "]");
    }
    std::vector<float> out(dim);
    for (int k = 0; k < dim / 2; ++k) {
        const double freq = std::pow(10000.0, 2.0 * k / dim);
        const double arg = static_cast<double>(t) / freq;
        out[2 * k] = static_cast<float>(std::sin(arg));
        out[2 * k + 1] = static_cast<float>(std::cos(arg));
    }
    return out;
}

std::vector<float> class_set_embedding(const NetParams& params, const Condition& cond) {
    validate_condition(cond, params.num_classes);
    const std::size_t ec = params.class_embed_dim;
    std::vector<double> acc(ec, 0.0);
    for (int c : cond.classes) {
        const auto row = params.class_embed.row(c);
        for (std::size_t i = 0; i < ec; ++i) acc[i] += row[i];
    }
    const double inv = 1.0 / static_cast<double>(cond.classes.size());
    std::vector<float> out(ec);
    for (std::size_t i = 0; i < ec; ++i) out[i] = static_cast<float>(acc[i] * inv);
    return out;
}

NetForward net_forward(const NetParams& params, std::span<const float> x_t, int t, const Condition& cond,
                       const NoiseSchedule& schedule) {
    NetForward fwd;
    NetCache& c = fwd.cache;
    fill_input(params, x_t, t, cond, schedule, c.input);
    affine(params.w_in, params.b_in, c.input, c.pre1);
    c.act1.resize(c.pre1.size());
    for (std::size_t i = 0; i < c.pre1.size(); ++i) c.act1[i] = activate(params.activation, c.pre1[i]);
    affine(params.w_hidden, params.b_hidden, c.act1, c.pre2);
    c.act2.resize(c.pre2.size());
    for (std::size_t i = 0; i < c.pre2.size(); ++i) c.act2[i] = activate(params.activation, c.pre2[i]);
    affine(params.w_out, params.b_out, c.act2, c.prediction);

    c.owner = &params;
    c.revision = params.revision;
    c.classes = cond.classes;
    fwd.prediction = c.prediction;
    return fwd;
}

std::vector<float> net_predict(const NetParams& params, std::span<const float> x_t, int t,
                               const Condition& cond, const NoiseSchedule& schedule) {
    std::vector<float> z, h1, h2, y;
    fill_input(params, x_t, t, cond, schedule, z);
    affine(params.w_in, params.b_in, z, h1);
    for (float& v : h1) v = activate(params.activation, v);
    affine(params.w_hidden, params.b_hidden, h1, h2);
    for (float& v : h2) v = activate(params.activation, v);
    affine(params.w_out, params.b_out, h2, y);
    return y;
}

double net_backward_accumulate(const NetParams& params, const NetCache& cache,
                               std::span<const float> eps_true, GradientBundle& grads, double scale) {
    if (cache.owner != &params || cache.revision != params.revision) {
        throw ContractError("net_backward called with a cache from different or modified parameters");
    }
    const std::size_t d = params.data_dim;
    if (eps_true.size() != d || cache.prediction.size() != d) {
        throw ShapeError("net_backward: target has " + std::to_string(eps_true.size()) + " elements, expected " +
                         std::to_string(d));
    }

    const double loss = simple_loss(eps_true, cache.prediction);

    std::vector<double> delta_out(d);
    for (std::size_t i = 0; i < d; ++i) {
        delta_out[i] = 2.0 * (static_cast<double>(cache.prediction[i]) - eps_true[i]) / static_cast<double>(d);
    }
    accumulate_outer(grads.w_out, grads.b_out, delta_out, cache.act2, scale);

    std::vector<double> delta2 = transpose_apply(params.w_out, delta_out);
    for (std::size_t i = 0; i < delta2.size(); ++i) delta2[i] *= activate_grad(params.activation, cache.pre2[i]);
    accumulate_outer(grads.w_hidden, grads.b_hidden, delta2, cache.act1, scale);

    std::vector<double> delta1 = transpose_apply(params.w_hidden, delta2);
    for (std::size_t i = 0; i < delta1.size(); ++i) delta1[i] *= activate_grad(params.activation, cache.pre1[i]);
    accumulate_outer(grads.w_in, grads.b_in, delta1, cache.input, scale);

    const std::vector<double> dz = transpose_apply(params.w_in, delta1);
    const std::size_t offset = params.data_dim + params.time_embed_dim;
    const double share = scale / static_cast<double>(cache.classes.size());
    for (int cls : cache.classes) {
        auto row = grads.class_embed.row(cls);
        for (std::size_t i = 0; i < row.size(); ++i) row[i] += static_cast<float>(share * dz[offset + i]);
    }
    return loss;
}

NetBackward net_backward(const NetParams& params, const NetCache& cache, std::span<const float> eps_true) {
    NetBackward out;
    out.grads = params.zeros_like();
    out.loss = net_backward_accumulate(params, cache, eps_true, out.grads, 1.0);
    return out;
}

}  // namespace dbmef
