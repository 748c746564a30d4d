#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "prefixforge/prefix_graph.hpp"

namespace prefixforge {

enum class DesignSource { Sampled, Retrieved, Seeded };

const char* to_string(DesignSource source);
DesignSource design_source_from_string(const std::string& text);

/// One scored design. reward = -area * delay; in proxy mode area = size, delay = depth.
struct DesignRecord {
    CoordinateSequence sequence;
    int size = 0;
    int depth = 0;
    double area = 0.0;
    double delay = 0.0;
    double reward = 0.0;
    int iteration = 0;
    DesignSource source = DesignSource::Sampled;
    bool proxy_fallback = false;  ///< external synthesis failed and proxy metrics were used

    double adp() const { return area * delay; }
};

nlohmann::json to_json(const DesignRecord& record);
DesignRecord record_from_json(const nlohmann::json& j);

/// Proxy-scored record for a valid sequence.
DesignRecord proxy_record(const CoordinateSequence& seq, int iteration, DesignSource source);

/// Ordering used by top_k_by_adp: lower ADP, then smaller size, then earlier iteration.
bool better_design(const DesignRecord& a, const DesignRecord& b);

/// Deduplicated design store, optionally mirrored to an append-only JSONL file.
class DesignDatabase {
public:
    DesignDatabase() = default;

    /// Loads existing lines (a torn final line is skipped) and appends new records to `path`.
    static DesignDatabase open(const std::filesystem::path& path);
    /// Read-only load.
    static DesignDatabase load(const std::filesystem::path& path);

    /// Validates the design and stores it unless the same design is already present
    /// (the earliest record wins). Returns true when stored.
    bool insert(const DesignRecord& record);

    /// Inserts each graph as a proxy-scored seeded record at iteration 0. Returns the count stored.
    std::size_t seed(std::span<const PrefixGraph> designs);

    /// k best records (see better_design); equal keys keep insertion order.
    std::vector<DesignRecord> top_k_by_adp(std::size_t k) const;

    bool contains(const CoordinateSequence& seq) const;
    std::size_t count(DesignSource source) const;
    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }
    const std::vector<DesignRecord>& records() const { return records_; }
    std::optional<DesignRecord> best() const;

private:
    std::vector<DesignRecord> records_;
    std::unordered_map<std::string, std::size_t> index_;
    std::optional<std::filesystem::path> path_;
};

}  // namespace prefixforge
