#pragma once

#include <optional>
#include <string>

#include "prefixforge/hardware.hpp"
#include "prefixforge/training/design_db.hpp"

namespace prefixforge {

enum class RewardMode { Proxy, External };

const char* to_string(RewardMode mode);
RewardMode reward_mode_from_string(const std::string& text);

struct RewardSettings {
    RewardMode mode = RewardMode::Proxy;
    std::optional<HookConfig> hook;  ///< required for External; a missing hook falls back to proxy
};

/// Fills area, delay and reward of `record` and returns the reward. In external mode a
/// hook failure falls back to proxy metrics and sets record.proxy_fallback.
double compute_reward(DesignRecord& record, const RewardSettings& settings);

}  // namespace prefixforge
