#include "dbmef/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <unistd.h>

#include "dbmef/error.hpp"

namespace dbmef {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");
static_assert(sizeof(float) == 4);

constexpr std::uint8_t kDtypeF32 = 0;
constexpr std::uint8_t kDtypeUtf8 = 1;

constexpr std::string_view kDenoiserPrefix = "denoiser.";
constexpr std::string_view kClassifierPrefix = "classifier.";
constexpr std::string_view kScoresSection = "calibration.correct_scores";

template <class T>
void put_le(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

class Reader {
public:
    Reader(std::string_view bytes, const std::string& origin) : bytes_(bytes), origin_(origin) {}

    template <class T>
    T get() {
        need(sizeof(T));
        T v;
        std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }

    std::string_view take(std::size_t n) {
        need(n);
        auto s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw IoError("checkpoint '" + origin_ + "' is truncated");
    }

    std::string_view bytes_;
    const std::string& origin_;
    std::size_t pos_ = 0;
};

void put_section_header(std::string& out, std::string_view name, std::uint8_t dtype,
                        const std::vector<std::uint32_t>& dims) {
    if (name.size() > UINT16_MAX) throw ParameterError("checkpoint section name too long");
    if (dims.size() > UINT8_MAX) throw ParameterError("checkpoint tensor rank too large");
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out.append(name);
    put_le<std::uint8_t>(out, dtype);
    put_le<std::uint8_t>(out, static_cast<std::uint8_t>(dims.size()));
    for (auto d : dims) put_le<std::uint32_t>(out, d);
}

int meta_int(const nlohmann::json& meta, const char* group, const char* key) {
    if (!meta.contains(group) || !meta[group].contains(key)) {
        throw FormatError(std::string("checkpoint metadata lacks ") + group + "." + key);
    }
    return meta[group][key].get<int>();
}

Tensor take_tensor(const Checkpoint& ckpt, std::string_view prefix, const char* name) {
    const std::string full = std::string(prefix) + name;
    const Tensor* t = ckpt.find(full);
    if (!t) throw FormatError("checkpoint lacks section '" + full + "'");
    return *t;
}

}  // namespace

const Tensor* Checkpoint::find(std::string_view name) const {
    for (const auto& [n, t] : tensors) {
        if (n == name) return &t;
    }
    return nullptr;
}

void Checkpoint::put(std::string name, Tensor tensor) {
    for (auto& [n, t] : tensors) {
        if (n == name) {
            t = std::move(tensor);
            return;
        }
    }
    tensors.emplace_back(std::move(name), std::move(tensor));
}

void Checkpoint::erase_prefix(std::string_view prefix) {
    std::erase_if(tensors, [&](const auto& entry) { return entry.first.starts_with(prefix); });
}

std::string serialize_checkpoint(const Checkpoint& ckpt) {
    std::string out;
    out.append(kCheckpointMagic, 4);
    put_le<std::uint32_t>(out, kCheckpointVersion);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size() + 1));
    for (const auto& [name, t] : ckpt.tensors) {
        if (name == kMetaSection) throw ParameterError("tensor name '__meta__' is reserved");
        if (t.data.size() != Tensor::element_count(t.shape)) {
            throw ShapeError("tensor '" + name + "' data does not match its shape");
        }
        put_section_header(out, name, kDtypeF32, t.shape);
        out.append(reinterpret_cast<const char*>(t.data.data()), t.data.size() * sizeof(float));
    }
    const std::string meta = ckpt.meta.dump();
    put_section_header(out, kMetaSection, kDtypeUtf8, {static_cast<std::uint32_t>(meta.size())});
    out.append(meta);
    return out;
}

Checkpoint deserialize_checkpoint(std::string_view bytes, const std::string& origin) {
    Reader in(bytes, origin);
    const auto magic = in.take(4);
    if (magic != std::string_view(kCheckpointMagic, 4)) throw FormatError("'" + origin + "' is not a DBMF checkpoint");
    const auto version = in.get<std::uint32_t>();
    if (version != kCheckpointVersion) {
        throw UnsupportedVersionError("checkpoint '" + origin + "' has unsupported format version " +
                                      std::to_string(version) + " (this build reads version " +
                                      std::to_string(kCheckpointVersion) + ")");
    }
    const auto count = in.get<std::uint32_t>();
    Checkpoint ckpt;
    bool saw_meta = false;
    for (std::uint32_t s = 0; s < count; ++s) {
        const auto name_len = in.get<std::uint16_t>();
        std::string name(in.take(name_len));
        const auto dtype = in.get<std::uint8_t>();
        const auto rank = in.get<std::uint8_t>();
        std::vector<std::uint32_t> dims(rank);
        for (auto& d : dims) d = in.get<std::uint32_t>();
        const std::size_t elements = Tensor::element_count(dims);
        if (dtype == kDtypeF32) {
            Tensor t;
            t.shape = dims;
            t.data.resize(elements);
            const auto payload = in.take(elements * sizeof(float));
            std::memcpy(t.data.data(), payload.data(), payload.size());
            ckpt.tensors.emplace_back(std::move(name), std::move(t));
        } else if (dtype == kDtypeUtf8 && name == kMetaSection && rank == 1) {
            const auto text = in.take(elements);
            try {
                ckpt.meta = nlohmann::json::parse(text);
            } catch (const nlohmann::json::exception& e) {
                throw FormatError("checkpoint '" + origin + "' has malformed metadata: " + e.what());
            }
            saw_meta = true;
        } else {
            throw FormatError("checkpoint '" + origin + "' section '" + name + "' has unknown dtype " +
                              std::to_string(dtype));
        }
    }
    if (!saw_meta) throw FormatError("checkpoint '" + origin + "' has no metadata section");
    if (!in.done()) throw FormatError("checkpoint '" + origin + "' has trailing bytes");
    return ckpt;
}

void write_file_atomic(const std::string& path, std::string_view contents) {
    namespace fs = std::filesystem;
    const fs::path target(path);
    const fs::path tmp = target.string() + ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write '" + tmp.string() + "'");
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        out.flush();
        if (!out) {
            std::error_code ignored;
            fs::remove(tmp, ignored);
            throw IoError("failed while writing '" + tmp.string() + "'");
        }
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw IoError("cannot move output into place at '" + path + "'");
    }
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    write_file_atomic(path, serialize_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint '" + path + "'");
    const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    return deserialize_checkpoint(bytes, path);
}

void store_denoiser(Checkpoint& ckpt, const NetParams& params) {
    params.check_shapes();
    ckpt.erase_prefix(kDenoiserPrefix);
    params.for_each([&](const char* name, const Tensor& t) { ckpt.put(std::string(kDenoiserPrefix) + name, t); });
    ckpt.meta["denoiser"] = {
        {"data_dim", params.data_dim},
        {"hidden_dim", params.hidden_dim},
        {"time_embed_dim", params.time_embed_dim},
        {"class_embed_dim", params.class_embed_dim},
        {"num_classes", params.num_classes},
        {"activation", params.activation == Activation::silu ? "silu" : "identity"},
    };
}

bool has_denoiser(const Checkpoint& ckpt) { return ckpt.meta.contains("denoiser"); }

NetParams restore_denoiser(const Checkpoint& ckpt) {
    if (!has_denoiser(ckpt)) throw FormatError("checkpoint holds no denoiser");
    NetParams p;
    p.data_dim = meta_int(ckpt.meta, "denoiser", "data_dim");
    p.hidden_dim = meta_int(ckpt.meta, "denoiser", "hidden_dim");
    p.time_embed_dim = meta_int(ckpt.meta, "denoiser", "time_embed_dim");
    p.class_embed_dim = meta_int(ckpt.meta, "denoiser", "class_embed_dim");
    p.num_classes = meta_int(ckpt.meta, "denoiser", "num_classes");
    p.activation = ckpt.meta["denoiser"].value("activation", "silu") == "identity" ? Activation::identity
                                                                                    : Activation::silu;
    for (const auto& [name, member] : NetTensors::fields) p.*member = take_tensor(ckpt, kDenoiserPrefix, name);
    try {
        p.check_shapes();
    } catch (const ShapeError& e) {
        throw FormatError(std::string("checkpoint denoiser is inconsistent: ") + e.what());
    }
    return p;
}

void store_classifier(Checkpoint& ckpt, const ClassifierParams& params) {
    params.check_shapes();
    ckpt.erase_prefix(kClassifierPrefix);
    for (const auto& [name, member] : ClassifierParams::fields) {
        ckpt.put(std::string(kClassifierPrefix) + name, params.*member);
    }
    ckpt.meta["classifier"] = {
        {"input_dim", params.input_dim},
        {"hidden_dim", params.hidden_dim},
        {"num_classes", params.num_classes},
    };
}

bool has_classifier(const Checkpoint& ckpt) { return ckpt.meta.contains("classifier"); }

ClassifierParams restore_classifier(const Checkpoint& ckpt) {
    if (!has_classifier(ckpt)) throw FormatError("checkpoint holds no base classifier");
    ClassifierParams p;
    p.input_dim = meta_int(ckpt.meta, "classifier", "input_dim");
    p.hidden_dim = meta_int(ckpt.meta, "classifier", "hidden_dim");
    p.num_classes = meta_int(ckpt.meta, "classifier", "num_classes");
    for (const auto& [name, member] : ClassifierParams::fields) p.*member = take_tensor(ckpt, kClassifierPrefix, name);
    try {
        p.check_shapes();
    } catch (const ShapeError& e) {
        throw FormatError(std::string("checkpoint classifier is inconsistent: ") + e.what());
    }
    return p;
}

void store_correct_scores(Checkpoint& ckpt, const std::vector<double>& scores) {
    Tensor t({static_cast<std::uint32_t>(scores.size())});
    std::transform(scores.begin(), scores.end(), t.data.begin(), [](double s) { return static_cast<float>(s); });
    ckpt.put(std::string(kScoresSection), std::move(t));
}

bool has_correct_scores(const Checkpoint& ckpt) { return ckpt.find(kScoresSection) != nullptr; }

std::vector<double> restore_correct_scores(const Checkpoint& ckpt) {
    const Tensor* t = ckpt.find(kScoresSection);
    if (!t) throw FormatError("checkpoint holds no calibration scores (run 'calibrate' first)");
    return {t->data.begin(), t->data.end()};
}

}  // namespace dbmef
