#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "dbmef/base_classifier.hpp"
#include "dbmef/denoiser_net.hpp"
#include "dbmef/tensor.hpp"

namespace dbmef {

// Binary layout (all integers little-endian):
//   "DBMF" | u32 version | u32 section count
//   per section: u16 name length | name (UTF-8) | u8 dtype | u8 rank | u32 dims[rank] | payload
// dtype 0 is float32. The metadata section "__meta__" has dtype 1 (UTF-8
// JSON text, rank 1, dims = byte length).

inline constexpr char kCheckpointMagic[4] = {'D', 'B', 'M', 'F'};
inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::string_view kMetaSection = "__meta__";

struct Checkpoint {
    std::vector<std::pair<std::string, Tensor>> tensors;
    nlohmann::json meta = nlohmann::json::object();

    const Tensor* find(std::string_view name) const;
    /// Inserts or replaces, keeping first-insertion order.
    void put(std::string name, Tensor tensor);
    /// Drops every tensor whose name starts with `prefix`.
    void erase_prefix(std::string_view prefix);
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(std::string_view bytes, const std::string& origin = "<memory>");

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

/// Writes to a temporary sibling and renames over `path`.
void write_file_atomic(const std::string& path, std::string_view contents);

// Named-section mapping for the model components. Dimensions go in meta.
void store_denoiser(Checkpoint& ckpt, const NetParams& params);
NetParams restore_denoiser(const Checkpoint& ckpt);
bool has_denoiser(const Checkpoint& ckpt);

void store_classifier(Checkpoint& ckpt, const ClassifierParams& params);
ClassifierParams restore_classifier(const Checkpoint& ckpt);
bool has_classifier(const Checkpoint& ckpt);

void store_correct_scores(Checkpoint& ckpt, const std::vector<double>& scores);
std::vector<double> restore_correct_scores(const Checkpoint& ckpt);
bool has_correct_scores(const Checkpoint& ckpt);

}  // namespace dbmef
