#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prefixforge/training/design_db.hpp"

namespace prefixforge {

struct BaselineRow {
    std::string name;
    int size = 0;
    int depth = 0;
    bool valid = false;
};

/// ripple, sklansky, kogge_stone and brent_kung at `width`, each validated.
std::vector<BaselineRow> baselines(int width);

struct DepthLimitRow {
    int limit = 0;
    std::optional<DesignRecord> design;  ///< smallest design with depth <= limit, if any
};

struct DatabaseEvaluation {
    int width = 0;
    int min_depth = 0;  ///< h = ceil(log2 n) + 1, counting the input level
    std::size_t designs = 0;
    std::vector<DepthLimitRow> limits;
    std::vector<DesignRecord> pareto;  ///< (size, depth) frontier
};

/// Minimum size under each depth limit (default h, h+1, h+2) and the (size, depth) frontier.
/// Ties on size prefer the better ADP record. Records of other widths are ignored.
DatabaseEvaluation evaluate_database(std::span<const DesignRecord> records, int width,
                                     std::vector<int> limits = {});

/// Width shared by every record; throws std::invalid_argument if mixed or empty.
int database_width(std::span<const DesignRecord> records);

nlohmann::json to_json(const DatabaseEvaluation& eval);
/// limit,min_size,depth,adp,iteration (empty fields when no design meets the limit)
void write_limits_csv(const std::filesystem::path& path, const DatabaseEvaluation& eval);
/// size,depth,area,delay,adp,iteration,source
void write_designs_csv(const std::filesystem::path& path, std::span<const DesignRecord> records);

/// Population statistics.
struct Summary {
    std::size_t count = 0;
    double min = 0.0, max = 0.0, mean = 0.0, stddev = 0.0;
};
Summary summarize(std::span<const double> values);

/// One row of a fine-tuning history CSV.
struct HistoryRow {
    int iteration = 0;
    double best_reward = 0.0, mean_reward = 0.0;
    std::size_t unique_designs = 0, samples_total = 0;
};
std::vector<HistoryRow> read_history_csv(const std::filesystem::path& path);

struct ReportInputs {
    std::vector<std::filesystem::path> histories;
    std::vector<std::filesystem::path> databases;
};

/// Writes reward_curves.csv, adp_distribution.csv, pareto.csv and summary.csv into `out_dir`
/// and returns the summary as JSON.
nlohmann::json write_report(const ReportInputs& inputs, const std::filesystem::path& out_dir);

}  // namespace prefixforge
