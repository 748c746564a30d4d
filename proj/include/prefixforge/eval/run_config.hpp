#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prefixforge/model/config.hpp"
#include "prefixforge/training/grpo.hpp"
#include "prefixforge/training/pretrain.hpp"

namespace prefixforge {

struct Ablations {
    bool rope_off = false;
    bool skip_pretrain = false;
    bool kl_off = false;
    bool retrieval_off = false;

    /// Accepts rope_off, skip_pretrain, kl_off, retrieval_off; throws std::invalid_argument otherwise.
    void enable(const std::string& name);
    std::vector<std::string> names() const;
};

/// Everything a pipeline run needs. JSON keys mirror the field names; missing keys keep defaults.
struct RunConfig {
    int width = 16;
    ModelConfig model = [] {
        ModelConfig m;
        m.max_width = 0;  // 0: same as width
        return m;
    }();

    std::size_t corpus_size = 100000;
    int pretrain_epochs = 5;
    int batch_size = 32;
    double pretrain_lr = 1e-4;
    double holdout_fraction = 0.05;
    int legal_rate_samples = 1000;

    int iterations = 200;
    int group_size = 64;
    double temperature = 0.8;
    double gamma = 0.99;
    double beta = 0.001;
    double retrieval_ratio = 0.10;
    double finetune_lr = 1e-3;
    std::string surrogate = "probability";  ///< probability | log_probability
    std::vector<std::string> seed_designs;  ///< constructor names stored before iteration 1

    std::string reward_mode = "proxy";  ///< proxy | external
    std::string synth_command;          ///< empty: take PREFIXFORGE_SYNTH_CMD
    double synth_timeout_s = 300.0;

    Ablations ablate{};

    std::uint64_t corpus_seed = 1;
    std::uint64_t init_seed = 2;
    std::uint64_t train_seed = 3;
    std::uint64_t finetune_seed = 4;

    std::filesystem::path out_dir = "run";

    /// Throws std::invalid_argument on inconsistent values.
    void check() const;

    /// Model config with ablations applied (rope_off); max_width 0 becomes width, smaller values are raised to it.
    ModelConfig effective_model() const;
    PretrainConfig pretrain_config() const;
    GrpoConfig grpo_config() const;
    RewardSettings reward_settings() const;
};

void to_json(nlohmann::json& j, const RunConfig& c);
void from_json(const nlohmann::json& j, RunConfig& c);

/// Reads a JSON config file; unknown keys are rejected so typos do not pass silently.
RunConfig load_run_config(const std::filesystem::path& path);

/// Graph from a constructor name: ripple, sklansky, kogge_stone or brent_kung.
PrefixGraph build_named_design(const std::string& name, int width);

}  // namespace prefixforge
