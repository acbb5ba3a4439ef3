#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <vector>

namespace dbmef {

/// Dense row-major float32 array with an explicit shape.
struct Tensor {
    std::vector<std::uint32_t> shape;
    std::vector<float> data;

    Tensor() = default;
    explicit Tensor(std::vector<std::uint32_t> dims, float fill = 0.0f)
        : shape(std::move(dims)), data(element_count(shape), fill) {}

    static std::size_t element_count(const std::vector<std::uint32_t>& dims) {
        return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                               [](std::size_t a, std::uint32_t b) { return a * b; });
    }

    std::size_t size() const { return data.size(); }
    std::uint32_t rows() const { return shape.empty() ? 0 : shape.front(); }
    std::uint32_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

    std::span<float> row(std::size_t r) { return {data.data() + r * cols(), cols()}; }
    std::span<const float> row(std::size_t r) const { return {data.data() + r * cols(), cols()}; }

    float& operator()(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
    float operator()(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

}  // namespace dbmef
