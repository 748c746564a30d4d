#include "prefixforge/eval/run_config.hpp"

#include <fstream>
#include <set>

namespace prefixforge {

void Ablations::enable(const std::string& name) {
    if (name == "rope_off") rope_off = true;
    else if (name == "skip_pretrain") skip_pretrain = true;
    else if (name == "kl_off") kl_off = true;
    else if (name == "retrieval_off") retrieval_off = true;
    else throw std::invalid_argument("unknown ablation '" + name + "' (rope_off, skip_pretrain, kl_off, retrieval_off)");
}

std::vector<std::string> Ablations::names() const {
    std::vector<std::string> out;
    if (rope_off) out.emplace_back("rope_off");
    if (skip_pretrain) out.emplace_back("skip_pretrain");
    if (kl_off) out.emplace_back("kl_off");
    if (retrieval_off) out.emplace_back("retrieval_off");
    return out;
}

void RunConfig::check() const {
    if (width < 2 || width > 64) throw std::invalid_argument("width must be in [2, 64]");
    effective_model().check();
    if (corpus_size == 0) throw std::invalid_argument("corpus_size must be positive");
    if (pretrain_epochs < 0 || batch_size < 1) throw std::invalid_argument("bad pre-training schedule");
    if (holdout_fraction < 0.0 || holdout_fraction >= 1.0) throw std::invalid_argument("holdout_fraction must be in [0, 1)");
    if (iterations < 0 || group_size < 2) throw std::invalid_argument("iterations >= 0 and group_size >= 2 required");
    if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
    if (retrieval_ratio < 0.0 || retrieval_ratio > 1.0) throw std::invalid_argument("retrieval_ratio must be in [0, 1]");
    if (surrogate != "probability" && surrogate != "log_probability")
        throw std::invalid_argument("surrogate must be probability or log_probability");
    reward_mode_from_string(reward_mode);
    for (const auto& name : seed_designs) build_named_design(name, width);
}

ModelConfig RunConfig::effective_model() const {
    ModelConfig m = model;
    m.max_width = std::max(m.max_width, width);  // also covers the 0 default
    if (ablate.rope_off) m.use_rope = false;
    return m;
}

PretrainConfig RunConfig::pretrain_config() const {
    PretrainConfig p;
    p.epochs = pretrain_epochs;
    p.batch_size = batch_size;
    p.adam.learning_rate = pretrain_lr;
    p.holdout_fraction = holdout_fraction;
    p.seed = train_seed;
    p.legal_rate_samples = legal_rate_samples;
    return p;
}

GrpoConfig RunConfig::grpo_config() const {
    GrpoConfig g;
    g.width = width;
    g.group_size = group_size;
    g.temperature = temperature;
    g.gamma = gamma;
    g.beta = ablate.kl_off ? 0.0 : beta;
    g.retrieval_ratio = retrieval_ratio;
    g.retrieval = !ablate.retrieval_off;
    g.surrogate = surrogate == "log_probability" ? Surrogate::LogProbability : Surrogate::Probability;
    g.adam.learning_rate = finetune_lr;
    return g;
}

RewardSettings RunConfig::reward_settings() const {
    RewardSettings s;
    s.mode = reward_mode_from_string(reward_mode);
    if (!synth_command.empty())
        s.hook = HookConfig{synth_command, std::chrono::milliseconds(static_cast<long>(synth_timeout_s * 1000.0))};
    else if (auto env = hook_from_environment()) {
        s.hook = *env;
        s.hook->timeout = std::chrono::milliseconds(static_cast<long>(synth_timeout_s * 1000.0));
    }
    return s;
}

void to_json(nlohmann::json& j, const RunConfig& c) {
    j = {{"width", c.width},
         {"model", c.model},
         {"corpus_size", c.corpus_size},
         {"pretrain_epochs", c.pretrain_epochs},
         {"batch_size", c.batch_size},
         {"pretrain_lr", c.pretrain_lr},
         {"holdout_fraction", c.holdout_fraction},
         {"legal_rate_samples", c.legal_rate_samples},
         {"iterations", c.iterations},
         {"group_size", c.group_size},
         {"temperature", c.temperature},
         {"gamma", c.gamma},
         {"beta", c.beta},
         {"retrieval_ratio", c.retrieval_ratio},
         {"finetune_lr", c.finetune_lr},
         {"surrogate", c.surrogate},
         {"seed_designs", c.seed_designs},
         {"reward_mode", c.reward_mode},
         {"synth_command", c.synth_command},
         {"synth_timeout_s", c.synth_timeout_s},
         {"ablate", c.ablate.names()},
         {"seeds",
          {{"corpus", c.corpus_seed}, {"init", c.init_seed}, {"train", c.train_seed}, {"finetune", c.finetune_seed}}},
         {"out_dir", c.out_dir.string()}};
}

void from_json(const nlohmann::json& j, RunConfig& c) {
    static const std::set<std::string> known = {
        "width",        "model",           "corpus_size", "pretrain_epochs", "batch_size",     "pretrain_lr",
        "holdout_fraction", "legal_rate_samples", "iterations", "group_size", "temperature",   "gamma",
        "beta",         "retrieval_ratio", "finetune_lr", "surrogate",       "seed_designs",   "reward_mode",
        "synth_command", "synth_timeout_s", "ablate",     "seeds",           "out_dir"};
    for (const auto& [key, value] : j.items())
        if (!known.contains(key)) throw std::invalid_argument("unknown config key '" + key + "'");

    auto get = [&j](const char* key, auto& field) {
        if (j.contains(key)) j.at(key).get_to(field);
    };
    get("width", c.width);
    if (j.contains("model")) {
        c.model = j.at("model").get<ModelConfig>();
        if (!j.at("model").contains("max_width")) c.model.max_width = 0;
    }
    get("corpus_size", c.corpus_size);
    get("pretrain_epochs", c.pretrain_epochs);
    get("batch_size", c.batch_size);
    get("pretrain_lr", c.pretrain_lr);
    get("holdout_fraction", c.holdout_fraction);
    get("legal_rate_samples", c.legal_rate_samples);
    get("iterations", c.iterations);
    get("group_size", c.group_size);
    get("temperature", c.temperature);
    get("gamma", c.gamma);
    get("beta", c.beta);
    get("retrieval_ratio", c.retrieval_ratio);
    get("finetune_lr", c.finetune_lr);
    get("surrogate", c.surrogate);
    get("seed_designs", c.seed_designs);
    get("reward_mode", c.reward_mode);
    get("synth_command", c.synth_command);
    get("synth_timeout_s", c.synth_timeout_s);
    if (j.contains("ablate"))
        for (const auto& name : j.at("ablate")) c.ablate.enable(name.get<std::string>());
    if (j.contains("seeds")) {
        const auto& s = j.at("seeds");
        c.corpus_seed = s.value("corpus", c.corpus_seed);
        c.init_seed = s.value("init", c.init_seed);
        c.train_seed = s.value("train", c.train_seed);
        c.finetune_seed = s.value("finetune", c.finetune_seed);
    }
    if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config " + path.string());
    const auto j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw std::runtime_error(path.string() + " is not valid JSON");
    return j.get<RunConfig>();
}

PrefixGraph build_named_design(const std::string& name, int width) {
    if (name == "ripple") return ripple(width);
    if (name == "sklansky") return sklansky(width);
    if (name == "kogge_stone") return kogge_stone(width);
    if (name == "brent_kung") return brent_kung(width);
    throw std::invalid_argument("unknown design '" + name + "' (ripple, sklansky, kogge_stone, brent_kung)");
}

}  // namespace prefixforge
