#include "prefixforge/eval/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "prefixforge/graph_io.hpp"
#include "prefixforge/training/grpo.hpp"

namespace prefixforge {

std::vector<BaselineRow> baselines(int width) {
    const std::pair<const char*, PrefixGraph (*)(int)> builders[] = {
        {"ripple", ripple}, {"sklansky", sklansky}, {"kogge_stone", kogge_stone}, {"brent_kung", brent_kung}};
    std::vector<BaselineRow> rows;
    for (const auto& [name, build] : builders) {
        const auto g = build(width);
        rows.push_back({name, size(g), depth(g), validate(g).valid()});
    }
    return rows;
}

int database_width(std::span<const DesignRecord> records) {
    if (records.empty()) throw std::invalid_argument("database is empty");
    const int width = records.front().sequence.width;
    for (const auto& r : records)
        if (r.sequence.width != width) throw std::invalid_argument("database mixes design widths");
    return width;
}

DatabaseEvaluation evaluate_database(std::span<const DesignRecord> records, int width, std::vector<int> limits) {
    DatabaseEvaluation eval;
    eval.width = width;
    eval.min_depth = minimum_depth(width);
    if (limits.empty()) limits = {eval.min_depth, eval.min_depth + 1, eval.min_depth + 2};

    std::vector<DesignRecord> same;
    for (const auto& r : records)
        if (r.sequence.width == width) same.push_back(r);
    eval.designs = same.size();
    for (int limit : limits) {
        DepthLimitRow row{limit, std::nullopt};
        for (const auto& r : same) {
            if (r.depth > limit) continue;
            if (!row.design || r.size < row.design->size ||
                (r.size == row.design->size && better_design(r, *row.design)))
                row.design = r;
        }
        eval.limits.push_back(std::move(row));
    }
    eval.pareto = pareto_front(same, ParetoAxes::SizeDepth);
    return eval;
}

nlohmann::json to_json(const DatabaseEvaluation& eval) {
    auto limits = nlohmann::json::array();
    for (const auto& row : eval.limits) {
        nlohmann::json j = {{"limit", row.limit}};
        if (row.design) {
            j["min_size"] = row.design->size;
            j["depth"] = row.design->depth;
            j["design"] = sequence_to_json(row.design->sequence);
        } else {
            j["min_size"] = nullptr;
        }
        limits.push_back(std::move(j));
    }
    auto pareto = nlohmann::json::array();
    for (const auto& r : eval.pareto) pareto.push_back({{"size", r.size}, {"depth", r.depth}});
    return {{"width", eval.width},
            {"h", eval.min_depth},
            {"depth_convention", "levels including the input row"},
            {"designs", eval.designs},
            {"empty", eval.designs == 0},
            {"limits", limits},
            {"pareto", pareto}};
}

namespace {

std::ofstream open_csv(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string());
    out.precision(10);
    return out;
}

}  // namespace

void write_limits_csv(const std::filesystem::path& path, const DatabaseEvaluation& eval) {
    auto out = open_csv(path);
    out << "limit,min_size,depth,adp,iteration\n";
    for (const auto& row : eval.limits) {
        out << row.limit << ',';
        if (row.design) out << row.design->size << ',' << row.design->depth << ',' << row.design->adp() << ','
                            << row.design->iteration;
        else out << ",,,";
        out << '\n';
    }
}

void write_designs_csv(const std::filesystem::path& path, std::span<const DesignRecord> records) {
    auto out = open_csv(path);
    out << "size,depth,area,delay,adp,iteration,source\n";
    for (const auto& r : records)
        out << r.size << ',' << r.depth << ',' << r.area << ',' << r.delay << ',' << r.adp() << ',' << r.iteration
            << ',' << to_string(r.source) << '\n';
}

Summary summarize(std::span<const double> values) {
    Summary s;
    s.count = values.size();
    if (values.empty()) return s;
    s.min = *std::min_element(values.begin(), values.end());
    s.max = *std::max_element(values.begin(), values.end());
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(s.count);
    double var = 0.0;
    for (double v : values) var += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(var / static_cast<double>(s.count));
    return s;
}

std::vector<HistoryRow> read_history_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open history " + path.string());
    std::string line;
    if (!std::getline(in, line) || line.rfind("iteration,best_reward,mean_reward,unique_designs", 0) != 0)
        throw std::runtime_error(path.string() + ": not a fine-tuning history file");
    std::vector<HistoryRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream fields(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(fields, cell, ',')) cells.push_back(cell);
        if (cells.size() < 5) throw std::runtime_error(path.string() + ": short history row");
        rows.push_back({std::stoi(cells[0]), std::stod(cells[1]), std::stod(cells[2]),
                        static_cast<std::size_t>(std::stoull(cells[3])), static_cast<std::size_t>(std::stoull(cells[4]))});
    }
    return rows;
}

namespace {

/// "run_a/history" rather than "history", so files with the same name in different runs stay apart.
std::string run_label(const std::filesystem::path& path) {
    const auto parent = path.parent_path().filename();
    return parent.empty() ? path.stem().string() : (parent / path.stem()).generic_string();
}

}  // namespace

nlohmann::json write_report(const ReportInputs& inputs, const std::filesystem::path& out_dir) {
    std::filesystem::create_directories(out_dir);
    auto summary_csv = open_csv(out_dir / "summary.csv");
    summary_csv << "scope,label,count,min,max,mean,std,unique_designs,total_samples\n";
    auto summary = nlohmann::json::array();
    // unique/total are blank where they do not apply
    auto emit = [&](const std::string& scope, const std::string& label, const Summary& s,
                    std::optional<std::size_t> unique, std::optional<std::size_t> total) {
        summary_csv << scope << ',' << label << ',' << s.count << ',' << s.min << ',' << s.max << ',' << s.mean << ','
                    << s.stddev << ',';
        if (unique) summary_csv << *unique;
        summary_csv << ',';
        if (total) summary_csv << *total;
        summary_csv << '\n';
        summary.push_back({{"scope", scope}, {"label", label}, {"count", s.count}, {"min", s.min}, {"max", s.max},
                           {"mean", s.mean}, {"std", s.stddev},
                           {"unique_designs", unique ? nlohmann::json(*unique) : nlohmann::json()},
                           {"total_samples", total ? nlohmann::json(*total) : nlohmann::json()}});
    };

    auto curves = open_csv(out_dir / "reward_curves.csv");
    curves << "run,iteration,best_reward,mean_reward,unique_designs,samples_total\n";
    std::vector<double> final_best;
    for (const auto& path : inputs.histories) {
        const auto rows = read_history_csv(path);
        const std::string label = run_label(path);
        std::vector<double> means;
        for (const auto& r : rows) {
            curves << label << ',' << r.iteration << ',' << r.best_reward << ',' << r.mean_reward << ','
                   << r.unique_designs << ',' << r.samples_total << '\n';
            means.push_back(r.mean_reward);
        }
        if (rows.empty()) continue;
        final_best.push_back(rows.back().best_reward);
        emit("run_mean_reward", label, summarize(means), rows.back().unique_designs, rows.back().samples_total);
    }
    if (!final_best.empty()) emit("final_best_reward", "all_runs", summarize(final_best), std::nullopt, std::nullopt);

    std::vector<DesignRecord> all;
    for (const auto& path : inputs.databases) {
        const auto db = DesignDatabase::load(path);
        std::vector<double> adp;
        for (const auto& r : db.records()) {
            adp.push_back(r.adp());
            all.push_back(r);
        }
        emit("database_adp", run_label(path), summarize(adp), db.size(), std::nullopt);
    }
    write_designs_csv(out_dir / "adp_distribution.csv", all);
    write_designs_csv(out_dir / "pareto.csv", pareto_front(all, ParetoAxes::AreaDelay));
    return summary;
}

}  // namespace prefixforge
