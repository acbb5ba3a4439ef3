#include "dbmef/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "dbmef/error.hpp"

namespace dbmef {
namespace {

using json = nlohmann::json;
using Setter = std::function<void(const json&)>;

struct WrongType {};

void apply_object(const json& obj, const std::string& where, const std::map<std::string, Setter>& setters) {
    if (!obj.is_object()) throw ValidationError(where + " must be a JSON object");
    for (const auto& [key, value] : obj.items()) {
        const auto it = setters.find(key);
        if (it == setters.end()) {
            const std::string path = where == "config" ? key : where + "." + key;
            throw ValidationError("unknown config key '" + path + "'");
        }
        try {
            it->second(value);
        } catch (const WrongType&) {
            throw ValidationError("config key '" + key + "' has the wrong type");
        } catch (const json::exception&) {
            throw ValidationError("config key '" + key + "' has the wrong type");
        }
    }
}

template <class T>
Setter number(T& target) {
    return [&target](const json& v) {
        if (!v.is_number()) throw WrongType{};
        if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) throw WrongType{};
            if constexpr (std::is_unsigned_v<T>) {
                if (!v.is_number_unsigned()) throw WrongType{};
            }
        }
        target = v.get<T>();
    };
}

Setter text(std::function<void(const std::string&)> f) {
    return [f = std::move(f)](const json& v) {
        if (!v.is_string()) throw WrongType{};
        f(v.get<std::string>());
    };
}

std::map<std::string, Setter> train_setters(TrainConfig& t) {
    return {
        {"epochs", number(t.epochs)},
        {"batch_size", number(t.batch_size)},
        {"learning_rate", number(t.learning_rate)},
        {"adam_beta1", number(t.adam_beta1)},
        {"adam_beta2", number(t.adam_beta2)},
        {"adam_epsilon", number(t.adam_epsilon)},
    };
}

void require(bool ok, const std::string& message) {
    if (!ok) throw ValidationError(message);
}

void validate(const RunConfig& c) {
    require(c.prot >= 0.0 && c.prot <= 1.0, "prot must be in [0, 1]");
    require(c.t_max >= 1, "t_max must be >= 1");
    require(c.beta_start > 0.0 && c.beta_start <= c.beta_end && c.beta_end < 1.0,
            "betas must satisfy 0 < beta_start <= beta_end < 1");
    require(c.t_eval >= 1 && c.t_eval <= c.t_max, "t_eval must be in [1, t_max]");
    require(c.lambda >= 0.0, "lambda must be >= 0");
    require(c.mode != ScoringMode::combined || c.lambda >= 1.0, "combined mode requires lambda >= 1");
    require(c.voters >= 1, "voters must be >= 1");
    require(c.k >= 1, "K must be >= 1");
    require(c.workers >= 1, "workers must be >= 1");
    require(c.denoiser.hidden >= 1 && c.denoiser.class_embed_dim >= 1, "denoiser widths must be positive");
    require(c.denoiser.time_embed_dim >= 2 && c.denoiser.time_embed_dim % 2 == 0,
            "denoiser.time_embed_dim must be even and >= 2");
    require(c.base_hidden >= 0, "train_base.hidden must be >= 0");
    require(c.synthetic.num_classes >= 2, "synthetic.num_classes must be >= 2");
    require(c.synthetic.dim >= 1, "synthetic.dim must be >= 1");
    require(c.synthetic.sigma > 0.0, "synthetic.sigma must be > 0");
    require(c.synthetic.n_train_per_class >= 1 && c.synthetic.n_test_per_class >= 1,
            "synthetic sample counts must be >= 1");
    try {
        c.train_diffusion.validate();
        c.train_base.validate();
    } catch (const ParameterError& e) {
        throw ValidationError(e.what());
    }
}

}  // namespace

RunSettings RunConfig::run_settings() const {
    RunSettings s;
    s.prot = prot;
    s.threshold_mode = threshold_mode;
    s.pipeline.scoring = {t_eval, lambda, mode, k};
    s.pipeline.voters = voters;
    s.pipeline.vote_rule = vote;
    s.pipeline.seed = seed;
    return s;
}

void RunConfig::set_seed(std::uint64_t s) {
    seed = s;
    train_diffusion.seed = s;
    train_base.seed = s;
}

RunConfig parse_config_text(const std::string& content) {
    json root;
    try {
        root = json::parse(content);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("config is not valid JSON: ") + e.what());
    }

    RunConfig c;
    std::map<std::string, Setter> top = {
        {"prot", number(c.prot)},
        {"threshold_mode", text([&](const std::string& s) { c.threshold_mode = threshold_mode_from_string(s); })},
        {"mode", text([&](const std::string& s) { c.mode = scoring_mode_from_string(s); })},
        {"t_eval", number(c.t_eval)},
        {"lambda", number(c.lambda)},
        {"voters", number(c.voters)},
        {"K", number(c.k)},
        {"vote", text([&](const std::string& s) { c.vote = vote_rule_from_string(s); })},
        {"t_max", number(c.t_max)},
        {"beta_start", number(c.beta_start)},
        {"beta_end", number(c.beta_end)},
        {"seed", number(c.seed)},
        {"workers", number(c.workers)},
        {"denoiser", [&](const json& v) {
             apply_object(v, "denoiser",
                          {{"backend", text([&](const std::string& s) {
                                if (s == "network") c.denoiser.backend = DenoiserBackendKind::network;
                                else if (s == "analytic") c.denoiser.backend = DenoiserBackendKind::analytic;
                                else throw ValidationError("denoiser.backend must be 'network' or 'analytic'");
                            })},
                           {"hidden", number(c.denoiser.hidden)},
                           {"time_embed_dim", number(c.denoiser.time_embed_dim)},
                           {"class_embed_dim", number(c.denoiser.class_embed_dim)}});
         }},
        {"train_diffusion", [&](const json& v) { apply_object(v, "train_diffusion", train_setters(c.train_diffusion)); }},
        {"train_base", [&](const json& v) {
             auto setters = train_setters(c.train_base);
             setters.emplace("hidden", number(c.base_hidden));
             apply_object(v, "train_base", setters);
         }},
        {"synthetic", [&](const json& v) {
             apply_object(v, "synthetic",
                          {{"num_classes", number(c.synthetic.num_classes)},
                           {"dim", number(c.synthetic.dim)},
                           {"sigma", number(c.synthetic.sigma)},
                           {"offset", number(c.synthetic.offset)},
                           {"n_train_per_class", number(c.synthetic.n_train_per_class)},
                           {"n_test_per_class", number(c.synthetic.n_test_per_class)}});
         }},
    };
    apply_object(root, "config", top);
    c.set_seed(c.seed);
    c.train_diffusion.t_max = c.t_max;
    c.train_base.t_max = c.t_max;
    validate(c);
    return c;
}

RunConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config_text(buf.str());
}

std::string config_to_json(const RunConfig& c) {
    auto train = [](const TrainConfig& t) {
        return nlohmann::ordered_json{{"epochs", t.epochs},
                                      {"batch_size", t.batch_size},
                                      {"learning_rate", t.learning_rate},
                                      {"adam_beta1", t.adam_beta1},
                                      {"adam_beta2", t.adam_beta2},
                                      {"adam_epsilon", t.adam_epsilon}};
    };
    nlohmann::ordered_json j;
    j["prot"] = c.prot;
    j["threshold_mode"] = to_string(c.threshold_mode);
    j["mode"] = to_string(c.mode);
    j["t_eval"] = c.t_eval;
    j["lambda"] = c.lambda;
    j["voters"] = c.voters;
    j["K"] = c.k;
    j["vote"] = to_string(c.vote);
    j["t_max"] = c.t_max;
    j["beta_start"] = c.beta_start;
    j["beta_end"] = c.beta_end;
    j["seed"] = c.seed;
    j["workers"] = c.workers;
    j["denoiser"] = {{"backend", c.denoiser.backend == DenoiserBackendKind::network ? "network" : "analytic"},
                     {"hidden", c.denoiser.hidden},
                     {"time_embed_dim", c.denoiser.time_embed_dim},
                     {"class_embed_dim", c.denoiser.class_embed_dim}};
    j["train_diffusion"] = train(c.train_diffusion);
    auto base = train(c.train_base);
    base["hidden"] = c.base_hidden;
    j["train_base"] = base;
    j["synthetic"] = {{"num_classes", c.synthetic.num_classes},
                      {"dim", c.synthetic.dim},
                      {"sigma", c.synthetic.sigma},
                      {"offset", c.synthetic.offset},
                      {"n_train_per_class", c.synthetic.n_train_per_class},
                      {"n_test_per_class", c.synthetic.n_test_per_class}};
    return j.dump(2) + "\n";
}

}  // namespace dbmef
