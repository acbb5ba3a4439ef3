#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dbmef/diffusion_core.hpp"

namespace dbmef {

enum class Provenance { idx, synthetic };

/// n x dim float32 examples with integer labels. `scale` and `offset` record
/// how raw values were mapped: stored = raw * scale + offset.
struct Dataset {
    std::size_t dim = 0;
    std::vector<float> examples;
    std::vector<int> labels;
    int num_classes = 0;
    Provenance provenance = Provenance::synthetic;
    double scale = 1.0;
    double offset = 0.0;

    std::size_t size() const { return labels.size(); }
    std::span<const float> row(std::size_t i) const { return {examples.data() + i * dim, dim}; }

    /// Throws DataError if labels, shapes or counts are inconsistent.
    void validate() const;
    Dataset subset(std::size_t begin, std::size_t end) const;
};

/// Reads an IDX3 image file and an IDX1 label file (big-endian headers),
/// mapping pixels [0, 255] to [-1, 1].
Dataset load_idx(const std::string& images_path, const std::string& labels_path);

/// n_per_class draws from N(mu_c, sigma^2 I) for every class, grouped by class.
Dataset generate_gaussian_dataset(const std::vector<std::vector<float>>& class_means, double sigma,
                                  std::size_t n_per_class, std::uint64_t seed);

/// Same as above but with examples shuffled into a seed-determined order.
Dataset generate_gaussian_dataset_shuffled(const std::vector<std::vector<float>>& class_means, double sigma,
                                           std::size_t n_per_class, std::uint64_t seed);

/// GaussianParams matching a synthetic dataset recipe.
GaussianParams gaussian_params(const std::vector<std::vector<float>>& class_means, double sigma);

/// +/- `offset` on every coordinate for class 0 / class 1 (and further
/// classes spread along alternating sign patterns).
std::vector<std::vector<float>> symmetric_class_means(int num_classes, std::size_t dim, double offset);

}  // namespace dbmef
