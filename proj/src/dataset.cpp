#include "dbmef/dataset.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <numeric>

#include "dbmef/error.hpp"
#include "dbmef/rng.hpp"

namespace dbmef {
namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t offset, const std::string& path) {
    if (offset + 4 > buf.size()) throw IoError("'" + path + "' is truncated in its header");
    return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
           (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

}  // namespace

void Dataset::validate() const {
    if (labels.empty()) throw DataError("dataset is empty");
    if (dim == 0) throw DataError("dataset has zero-dimensional examples");
    if (examples.size() != labels.size() * dim) throw DataError("dataset example buffer does not match n x dim");
    for (int y : labels) {
        if (y < 0 || y >= num_classes) {
            throw DataError("label " + std::to_string(y) + " outside [0, " + std::to_string(num_classes) + ")");
        }
    }
}

Dataset Dataset::subset(std::size_t begin, std::size_t end) const {
    if (begin > end || end > size()) throw DataError("dataset subset range out of bounds");
    Dataset out = *this;
    out.examples.assign(examples.begin() + begin * dim, examples.begin() + end * dim);
    out.labels.assign(labels.begin() + begin, labels.begin() + end);
    return out;
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    const auto img = read_file(images_path);
    const auto lab = read_file(labels_path);

    const std::uint32_t img_magic = read_be32(img, 0, images_path);
    if (img_magic != kIdxImagesMagic) {
        throw FormatError("'" + images_path + "' is not an IDX image file (magic " + std::to_string(img_magic) + ")");
    }
    const std::uint32_t lab_magic = read_be32(lab, 0, labels_path);
    if (lab_magic != kIdxLabelsMagic) {
        throw FormatError("'" + labels_path + "' is not an IDX label file (magic " + std::to_string(lab_magic) + ")");
    }
    const std::uint32_t n = read_be32(img, 4, images_path);
    const std::uint32_t rows = read_be32(img, 8, images_path);
    const std::uint32_t cols = read_be32(img, 12, images_path);
    const std::uint32_t n_labels = read_be32(lab, 4, labels_path);
    if (n != n_labels) {
        throw FormatError("image count " + std::to_string(n) + " does not match label count " +
                          std::to_string(n_labels));
    }
    const std::size_t dim = std::size_t{rows} * cols;
    if (img.size() < 16 + std::size_t{n} * dim) throw IoError("'" + images_path + "' is truncated");
    if (lab.size() < 8 + std::size_t{n}) throw IoError("'" + labels_path + "' is truncated");
    if (n == 0 || dim == 0) throw DataError("IDX files contain no examples");

    Dataset ds;
    ds.dim = dim;
    ds.provenance = Provenance::idx;
    ds.scale = 1.0 / 127.5;
    ds.offset = -1.0;
    ds.examples.resize(std::size_t{n} * dim);
    for (std::size_t i = 0; i < ds.examples.size(); ++i) {
        ds.examples[i] = static_cast<float>(img[16 + i] / 127.5 - 1.0);
    }
    ds.labels.resize(n);
    int max_label = 0;
    for (std::uint32_t i = 0; i < n; ++i) {
        ds.labels[i] = lab[8 + i];
        max_label = std::max(max_label, ds.labels[i]);
    }
    ds.num_classes = max_label + 1;
    return ds;
}

Dataset generate_gaussian_dataset(const std::vector<std::vector<float>>& class_means, double sigma,
                                  std::size_t n_per_class, std::uint64_t seed) {
    if (!(sigma > 0.0)) throw ParameterError("sigma must be > 0");
    if (class_means.size() < 2) throw ParameterError("need at least two classes");
    if (n_per_class == 0) throw ParameterError("n_per_class must be positive");
    const std::size_t dim = class_means.front().size();
    if (dim == 0) throw ParameterError("class means must be non-empty");
    for (const auto& mu : class_means) {
        if (mu.size() != dim) throw ShapeError("class means have inconsistent dimensions");
    }

    Dataset ds;
    ds.dim = dim;
    ds.num_classes = static_cast<int>(class_means.size());
    ds.provenance = Provenance::synthetic;
    ds.examples.reserve(class_means.size() * n_per_class * dim);
    for (std::size_t c = 0; c < class_means.size(); ++c) {
        Rng rng(derive_seed(seed, c));
        for (std::size_t i = 0; i < n_per_class; ++i) {
            for (std::size_t j = 0; j < dim; ++j) {
                ds.examples.push_back(static_cast<float>(class_means[c][j] + sigma * rng.normal()));
            }
            ds.labels.push_back(static_cast<int>(c));
        }
    }
    return ds;
}

Dataset generate_gaussian_dataset_shuffled(const std::vector<std::vector<float>>& class_means, double sigma,
                                           std::size_t n_per_class, std::uint64_t seed) {
    const Dataset grouped = generate_gaussian_dataset(class_means, sigma, n_per_class, seed);
    std::vector<std::size_t> order(grouped.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, 0x5AFF1E));
    for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
    }
    Dataset out = grouped;
    for (std::size_t i = 0; i < order.size(); ++i) {
        const auto src = grouped.row(order[i]);
        std::copy(src.begin(), src.end(), out.examples.begin() + i * grouped.dim);
        out.labels[i] = grouped.labels[order[i]];
    }
    return out;
}

GaussianParams gaussian_params(const std::vector<std::vector<float>>& class_means, double sigma) {
    GaussianParams p{class_means, sigma};
    validate_gaussian_params(p);
    return p;
}

std::vector<std::vector<float>> symmetric_class_means(int num_classes, std::size_t dim, double offset) {
    std::vector<std::vector<float>> means(num_classes, std::vector<float>(dim));
    for (int c = 0; c < num_classes; ++c) {
        const unsigned pattern = static_cast<unsigned>(c / 2);
        for (std::size_t i = 0; i < dim; ++i) {
            int sign = (std::popcount(pattern & static_cast<unsigned>(i)) % 2 == 0) ? 1 : -1;
            if (c % 2 == 1) sign = -sign;
            means[c][i] = static_cast<float>(sign * offset);
        }
    }
    return means;
}

}  // namespace dbmef
