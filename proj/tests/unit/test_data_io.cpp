#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "dbmef/checkpoint.hpp"
#include "dbmef/config.hpp"
#include "dbmef/dataset.hpp"
#include "dbmef/error.hpp"
#include "dbmef/rng.hpp"

using namespace dbmef;
namespace fs = std::filesystem;

namespace {

fs::path scratch() {
    const char* env = std::getenv("DBMEF_TEST_TMP");
    fs::path dir = env ? fs::path(env) : fs::temp_directory_path() / "dbmef_data_io";
    fs::create_directories(dir);
    return dir;
}

using Bytes = std::vector<unsigned char>;

void put_be32(Bytes& b, std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<unsigned char>(v >> s));
}

Bytes idx_images(std::uint32_t n, std::uint32_t rows, std::uint32_t cols, const Bytes& pixels,
                 std::uint32_t magic = 0x803) {
    Bytes b;
    put_be32(b, magic);
    put_be32(b, n);
    put_be32(b, rows);
    put_be32(b, cols);
    b.insert(b.end(), pixels.begin(), pixels.end());
    return b;
}

Bytes idx_labels(const Bytes& labels, std::uint32_t magic = 0x801) {
    Bytes b;
    put_be32(b, magic);
    put_be32(b, static_cast<std::uint32_t>(labels.size()));
    b.insert(b.end(), labels.begin(), labels.end());
    return b;
}

std::string write(const std::string& name, const Bytes& bytes) {
    const auto path = (scratch() / name).string();
    std::ofstream(path, std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()),
                                                static_cast<std::streamsize>(bytes.size()));
    return path;
}

// Minimal independent reader: header fields by explicit byte arithmetic.
struct RefIdx {
    std::size_t n = 0, dim = 0;
    std::vector<float> pixels;
    std::vector<int> labels;
};

RefIdx ref_parse(const Bytes& img, const Bytes& lab) {
    auto be = [](const Bytes& b, std::size_t o) {
        return static_cast<std::size_t>(b[o]) * 16777216u + b[o + 1] * 65536u + b[o + 2] * 256u + b[o + 3];
    };
    RefIdx r;
    r.n = be(img, 4);
    r.dim = be(img, 8) * be(img, 12);
    for (std::size_t i = 0; i < r.n * r.dim; ++i) r.pixels.push_back(static_cast<float>(img[16 + i] / 127.5 - 1.0));
    for (std::size_t i = 0; i < r.n; ++i) r.labels.push_back(lab[8 + i]);
    return r;
}

NetParams random_net(std::uint64_t seed) {
    auto p = init_params(5, 7, 4, 3, 4, seed);
    Rng rng(seed);
    p.for_each([&](const char*, Tensor& t) {
        for (float& v : t.data) v = static_cast<float>(rng.normal() * 1e3 * rng.uniform());
    });
    return p;
}

}  // namespace

TEST_CASE("load_idx") {
    SUBCASE("hand-built pair") {
        const auto img = write("a-img", idx_images(2, 2, 2, {0, 255, 51, 204, 128, 0, 0, 255}));
        const auto lab = write("a-lab", idx_labels({3, 7}));
        const auto d = load_idx(img, lab);
        CHECK(d.size() == 2);
        CHECK(d.dim == 4);
        CHECK(d.labels == std::vector<int>{3, 7});
        CHECK(d.num_classes == 8);
        CHECK(d.provenance == Provenance::idx);
        CHECK(d.examples[0] == -1.0f);
        CHECK(d.examples[1] == 1.0f);
        CHECK(d.examples[2] == doctest::Approx(51 / 127.5 - 1));
        CHECK(d.examples[4] == doctest::Approx(128 / 127.5 - 1));
        CHECK(d.scale == doctest::Approx(1 / 127.5));
        CHECK(d.offset == -1.0);
    }

    SUBCASE("malformed files") {
        const Bytes px(8, 1);
        const auto good_img = write("b-img", idx_images(2, 2, 2, px));
        const auto good_lab = write("b-lab", idx_labels({0, 1}));
        CHECK_THROWS_AS(load_idx(good_lab, good_lab), FormatError);
        CHECK_THROWS_AS(load_idx(good_img, good_img), FormatError);
        CHECK_THROWS_AS(load_idx(good_img, write("b-lab3", idx_labels({0, 1, 1}))), FormatError);
        auto cut = idx_images(2, 2, 2, px);
        cut.resize(cut.size() - 3);
        CHECK_THROWS_AS(load_idx(write("b-cut", cut), good_lab), IoError);
        auto cut_lab = idx_labels({0, 1});
        cut_lab.pop_back();
        CHECK_THROWS_AS(load_idx(good_img, write("b-cutlab", cut_lab)), IoError);
        CHECK_THROWS_AS(load_idx(write("b-hdr", Bytes{0, 0, 8}), good_lab), IoError);
        CHECK_THROWS_AS(load_idx((scratch() / "missing").string(), good_lab), IoError);
    }

    SUBCASE("matches the reference reader on random files") {
        Rng rng(123);
        for (int trial = 0; trial < 100; ++trial) {
            const auto n = static_cast<std::uint32_t>(rng.uniform_int(1, 20));
            const auto rows = static_cast<std::uint32_t>(rng.uniform_int(1, 6));
            const auto cols = static_cast<std::uint32_t>(rng.uniform_int(1, 6));
            Bytes px(n * rows * cols), labels(n);
            for (auto& p : px) p = static_cast<unsigned char>(rng.uniform_int(0, 255));
            for (auto& l : labels) l = static_cast<unsigned char>(rng.uniform_int(0, 9));
            const auto img = idx_images(n, rows, cols, px);
            const auto lab = idx_labels(labels);
            const auto d = load_idx(write("r-img", img), write("r-lab", lab));
            const auto ref = ref_parse(img, lab);
            CHECK(d.size() == ref.n);
            CHECK(d.dim == ref.dim);
            CHECK(d.labels == ref.labels);
            CHECK(d.examples == ref.pixels);
        }
    }
}

TEST_CASE("generate_gaussian_dataset") {
    const auto means = symmetric_class_means(2, 3, 1.5);
    CHECK(means[0] == std::vector<float>(3, 1.5f));
    CHECK(means[1] == std::vector<float>(3, -1.5f));

    const auto small = generate_gaussian_dataset(means, 0.5, 5, 1);
    CHECK(small.size() == 10);
    CHECK(small.labels == std::vector<int>{0, 0, 0, 0, 0, 1, 1, 1, 1, 1});
    CHECK(small.provenance == Provenance::synthetic);
    CHECK_NOTHROW(small.validate());

    CHECK(generate_gaussian_dataset(means, 0.5, 50, 7).examples == generate_gaussian_dataset(means, 0.5, 50, 7).examples);
    CHECK(generate_gaussian_dataset(means, 0.5, 50, 7).examples != generate_gaussian_dataset(means, 0.5, 50, 8).examples);

    const double sigma = 0.7;
    const std::size_t n = 10000;
    const auto big = generate_gaussian_dataset(means, sigma, n, 3);
    for (int c = 0; c < 2; ++c) {
        for (std::size_t i = 0; i < 3; ++i) {
            double sum = 0.0;
            for (std::size_t r = 0; r < big.size(); ++r) {
                if (big.labels[r] == c) sum += big.row(r)[i];
            }
            CHECK(std::abs(sum / n - means[c][i]) < 4.0 * sigma / std::sqrt(static_cast<double>(n)));
        }
    }

    const auto shuffled = generate_gaussian_dataset_shuffled(means, 0.5, 50, 7);
    CHECK(shuffled.size() == 100);
    CHECK(std::count(shuffled.labels.begin(), shuffled.labels.end(), 0) == 50);
    CHECK(shuffled.labels != generate_gaussian_dataset(means, 0.5, 50, 7).labels);

    CHECK_THROWS_AS(generate_gaussian_dataset(means, 0.0, 5, 1), ParameterError);
    CHECK_THROWS_AS(generate_gaussian_dataset(means, -1.0, 5, 1), ParameterError);
    CHECK_THROWS_AS(generate_gaussian_dataset({means[0]}, 1.0, 5, 1), ParameterError);
}

TEST_CASE("checkpoint") {
    SUBCASE("round trip is bitwise") {
        for (std::uint64_t seed = 1; seed <= 5; ++seed) {
            const auto net = random_net(seed);
            auto clf = init_classifier(5, seed % 2 ? 0 : 6, 4, seed);
            Checkpoint ck;
            ck.meta["seed"] = seed;
            store_denoiser(ck, net);
            store_classifier(ck, clf);
            store_correct_scores(ck, {0.5, 0.75, 1.0});
            const auto path = (scratch() / "rt.ckpt").string();
            save_checkpoint(path, ck);
            const auto back = load_checkpoint(path);
            const auto net2 = restore_denoiser(back);
            CHECK(static_cast<const NetTensors&>(net2) == net);
            CHECK(net2.data_dim == net.data_dim);
            CHECK(net2.hidden_dim == net.hidden_dim);
            CHECK(restore_classifier(back) == clf);
            CHECK(restore_correct_scores(back) == std::vector<double>{0.5, 0.75, 1.0});
            CHECK(back.meta["seed"] == seed);
            CHECK(serialize_checkpoint(back) == serialize_checkpoint(ck));
        }
    }

    SUBCASE("byte layout") {
        Checkpoint ck;
        Tensor t({2});
        t.data = {1.0f, -2.0f};
        ck.put("w", t);
        const auto bytes = serialize_checkpoint(ck);
        REQUIRE(bytes.size() > 12);
        CHECK(bytes.substr(0, 4) == "DBMF");
        CHECK(bytes.substr(4, 4) == std::string("\x01\x00\x00\x00", 4));
        CHECK(bytes.substr(8, 4) == std::string("\x02\x00\x00\x00", 4));
        // u16 len | "w" | dtype 0 | rank 1 | dim 2 | 1.0f | -2.0f
        const std::string section("\x01\x00w\x00\x01\x02\x00\x00\x00\x00\x00\x80\x3f\x00\x00\x00\xc0", 17);
        CHECK(bytes.substr(12, 17) == section);
        const auto meta_at = 12 + 17;
        CHECK(bytes.substr(meta_at, 10) == std::string("\x08\x00__meta__", 10));
        CHECK(bytes[meta_at + 10] == '\x01');
    }

    SUBCASE("corruption") {
        Checkpoint ck;
        store_denoiser(ck, random_net(3));
        const auto bytes = serialize_checkpoint(ck);
        auto magic = bytes;
        magic[0] = 'X';
        CHECK_THROWS_AS(deserialize_checkpoint(magic), FormatError);
        auto version = bytes;
        version[4] = static_cast<char>(kCheckpointVersion + 1);
        CHECK_THROWS_AS(deserialize_checkpoint(version), UnsupportedVersionError);
        for (std::size_t cut : {bytes.size() - 1, bytes.size() / 2, std::size_t{14}, std::size_t{3}}) {
            CHECK_THROWS_AS(deserialize_checkpoint(bytes.substr(0, cut)), IoError);
        }
        CHECK_THROWS_AS(deserialize_checkpoint(bytes + "x"), FormatError);
        CHECK_THROWS_AS(load_checkpoint((scratch() / "nope.ckpt").string()), IoError);
        try {
            load_checkpoint((scratch() / "nope.ckpt").string());
        } catch (const IoError& e) {
            CHECK(std::string(e.what()).find("nope.ckpt") != std::string::npos);
        }
        CHECK_FALSE(has_classifier(ck));
        CHECK_THROWS(restore_classifier(ck));
    }

    SUBCASE("atomic write leaves no temporaries") {
        const auto dir = scratch() / "atomic";
        fs::remove_all(dir);
        fs::create_directories(dir);
        write_file_atomic((dir / "out.json").string(), "one");
        write_file_atomic((dir / "out.json").string(), "two");
        std::ifstream in(dir / "out.json");
        std::string text;
        std::getline(in, text);
        CHECK(text == "two");
        CHECK(std::distance(fs::directory_iterator(dir), fs::directory_iterator()) == 1);
    }
}

TEST_CASE("parse_config") {
    SUBCASE("defaults") {
        const auto c = parse_config_text("{}");
        CHECK(c.prot == 0.95);
        CHECK(c.threshold_mode == ThresholdMode::absolute);
        CHECK(c.mode == ScoringMode::combined);
        CHECK(c.t_eval == 30);
        CHECK(c.lambda == 1.1);
        CHECK(c.voters == 5);
        CHECK(c.k == 5);
        CHECK(c.t_max == 1000);
        CHECK(c.vote == VoteRule::plurality);
    }

    SUBCASE("values are applied") {
        const auto c = parse_config_text(R"({"prot": 0.5, "threshold_mode": "quantile", "mode": "positive",
            "lambda": 0.5, "t_eval": 7, "voters": 3, "K": 2, "vote": "summed_error", "seed": 9,
            "denoiser": {"backend": "analytic", "hidden": 32},
            "train_diffusion": {"epochs": 4, "learning_rate": 0.01},
            "train_base": {"hidden": 8}, "synthetic": {"dim": 4, "sigma": 0.5}})");
        CHECK(c.prot == 0.5);
        CHECK(c.threshold_mode == ThresholdMode::quantile);
        CHECK(c.mode == ScoringMode::positive);
        CHECK(c.t_eval == 7);
        CHECK(c.k == 2);
        CHECK(c.vote == VoteRule::summed_error);
        CHECK(c.seed == 9);
        CHECK(c.denoiser.backend == DenoiserBackendKind::analytic);
        CHECK(c.denoiser.hidden == 32);
        CHECK(c.train_diffusion.epochs == 4);
        CHECK(c.train_diffusion.learning_rate == 0.01);
        CHECK(c.base_hidden == 8);
        CHECK(c.synthetic.dim == 4);
        const auto rs = c.run_settings();
        CHECK(rs.pipeline.scoring.t_eval == 7);
        CHECK(rs.pipeline.seed == 9);
        CHECK(parse_config_text(config_to_json(c)).t_eval == 7);
    }

    SUBCASE("rejections") {
        CHECK_THROWS_AS(parse_config_text(R"({"lambda": 0.5, "mode": "combined"})"), ValidationError);
        CHECK_THROWS_AS(parse_config_text(R"({"prot": 1.5})"), ValidationError);
        CHECK_THROWS_AS(parse_config_text(R"({"lamda": 1.1})"), ValidationError);
        CHECK_THROWS_AS(parse_config_text(R"({"denoiser": {"hiden": 3}})"), ValidationError);
        CHECK_THROWS_AS(parse_config_text(R"({"t_eval": "30"})"), ValidationError);
        CHECK_THROWS_AS(parse_config_text(R"({"t_eval": 2000})"), ValidationError);
        CHECK_THROWS_AS(parse_config_text(R"({"voters": 0})"), ValidationError);
        CHECK_THROWS_AS(parse_config_text(R"({"mode": "both"})"), ValidationError);
        CHECK_THROWS_AS(parse_config_text(R"([1, 2])"), ValidationError);
        CHECK_THROWS_AS(parse_config_text(R"({"prot": )"), ParseError);
        CHECK_THROWS_AS(parse_config_text(""), ParseError);
        CHECK_THROWS_AS(parse_config((scratch() / "absent.json").string()), IoError);
    }

    SUBCASE("parsing is total on random mutations") {
        const std::string base = R"({"prot": 0.9, "lambda": 1.2, "t_eval": 10, "denoiser": {"hidden": 16}})";
        Rng rng(5);
        const std::string alphabet = "{}[]\":,.0123456789-eaxtrufnl ";
        for (int trial = 0; trial < 2000; ++trial) {
            std::string s = base;
            const int edits = static_cast<int>(rng.uniform_int(1, 4));
            for (int e = 0; e < edits; ++e) {
                const auto pos = static_cast<std::size_t>(rng.uniform_int(0, s.size() - 1));
                s[pos] = alphabet[rng.uniform_int(0, alphabet.size() - 1)];
            }
            try {
                const auto c = parse_config_text(s);
                CHECK(c.prot >= 0.0);
                CHECK(c.prot <= 1.0);
                CHECK((c.mode != ScoringMode::combined || c.lambda >= 1.0));
            } catch (const ParseError&) {
            } catch (const ValidationError&) {
            }
        }
    }
}
