#include "prefixforge/training/reward.hpp"

#include <spdlog/spdlog.h>

namespace prefixforge {

const char* to_string(RewardMode mode) { return mode == RewardMode::Proxy ? "proxy" : "external"; }

RewardMode reward_mode_from_string(const std::string& text) {
    if (text == "proxy") return RewardMode::Proxy;
    if (text == "external") return RewardMode::External;
    throw std::invalid_argument("unknown reward mode '" + text + "' (expected proxy or external)");
}

double compute_reward(DesignRecord& record, const RewardSettings& settings) {
    const auto g = sequence_to_graph(record.sequence);
    record.size = size(g);
    record.depth = depth(g);
    record.proxy_fallback = false;
    record.area = record.size;
    record.delay = record.depth;

    if (settings.mode == RewardMode::External) {
        if (!settings.hook) {
            spdlog::warn("external reward requested without a synthesis hook; using proxy metrics");
            record.proxy_fallback = true;
        } else {
            try {
                const auto result = synthesize_external(export_netlist(g, "prefix_adder"), *settings.hook);
                record.area = result.area;
                record.delay = result.delay;
            } catch (const SynthesisError& e) {
                spdlog::warn("synthesis hook failed ({}); using proxy metrics", e.what());
                record.proxy_fallback = true;
            }
        }
    }
    record.reward = -record.area * record.delay;
    return record.reward;
}

}  // namespace prefixforge
