#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

#include "prefixforge/prefix_graph.hpp"

namespace prefixforge {

struct SignalPair {
    bool g = false;  ///< generate
    bool p = false;  ///< propagate
};

struct AddResult {
    std::uint64_t sum = 0;  ///< n-bit sum
    bool carry_out = false;
};

/// Evaluates the graph as an adder: input cells, merge cells in level order, sum XORs.
/// Operands are truncated to the graph width. Throws ValidationError on an invalid graph.
AddResult simulate_add(const PrefixGraph& g, std::uint64_t a, std::uint64_t b);

/// Structural Verilog for the adder. Two leaf modules are emitted ahead of the top module:
///   pfx_input_cell  (a, b -> g = a&b, p = a^b)
///   pfx_merge_cell  (gh, ph, gl, pl -> g = gh | ph&gl, p = ph&pl)
/// The top module `name` has ports a, b, sum, cout. Node l_{j:i} drives wires g_j_i / p_j_i,
/// merge instances are m_j_i, input instances in_i, sum stage s_i (buf for bit 0, xor above).
/// Output depends only on the graph and name.
std::string export_netlist(const PrefixGraph& g, const std::string& name);

struct SynthesisResult {
    double area = 0.0;   ///< library area units
    double delay = 0.0;  ///< ns
    std::string tool_log;
};

class SynthesisError : public std::runtime_error {
public:
    SynthesisError(const std::string& what, std::string tool_log)
        : std::runtime_error(what), tool_log_(std::move(tool_log)) {}
    const std::string& tool_log() const { return tool_log_; }

private:
    std::string tool_log_;
};

/// `<command> <netlist-path>` must print {"area": x, "delay": y} on stdout.
struct HookConfig {
    std::string command;
    std::chrono::milliseconds timeout{std::chrono::seconds(300)};
};

inline constexpr const char* kSynthCommandEnv = "PREFIXFORGE_SYNTH_CMD";

/// Hook configured by PREFIXFORGE_SYNTH_CMD, if set and non-empty.
std::optional<HookConfig> hook_from_environment();

/// Caps the number of hook processes running at once across threads (default 4).
void set_max_concurrent_hooks(int limit);

/// Writes the netlist to a temporary file and runs the hook on it. Throws SynthesisError
/// (carrying stdout/stderr) on spawn failure, nonzero exit, timeout or malformed output.
SynthesisResult synthesize_external(const std::string& netlist, const HookConfig& hook);

}  // namespace prefixforge
