#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "../support/fixtures.hpp"
#include "prefixforge/eval/evaluation.hpp"
#include "prefixforge/eval/run_config.hpp"
#include "prefixforge/legality.hpp"
#include "prefixforge/training/grpo.hpp"

using namespace prefixforge;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() / ("pfx_eval_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

DesignRecord record(const PrefixGraph& g, int iteration = 0) {
    return proxy_record(graph_to_sequence(g), iteration, DesignSource::Sampled);
}

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
    std::ifstream in(path);
    std::vector<std::vector<std::string>> rows;
    for (std::string line; std::getline(in, line);) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.emplace_back();
        rows.push_back(cells);
    }
    return rows;
}

}  // namespace

TEST_CASE("baseline table at 16 bits") {
    const auto rows = baselines(16);
    REQUIRE(rows.size() == 4);
    for (const auto& r : rows) CHECK(r.valid);
    auto find = [&](const std::string& name) {
        return *std::find_if(rows.begin(), rows.end(), [&](const BaselineRow& r) { return r.name == name; });
    };
    CHECK(find("sklansky").size == 32);
    CHECK(find("sklansky").depth == 5);
    CHECK(find("kogge_stone").size == 49);
    CHECK(find("kogge_stone").depth == 5);
    CHECK(find("ripple").size == 15);
    CHECK(find("ripple").depth == 16);
}

TEST_CASE("minimum size under a depth limit") {
    const std::vector<DesignRecord> recs{record(ripple(16)), record(sklansky(16))};
    const auto eval = evaluate_database(recs, 16, {5});
    REQUIRE(eval.limits.size() == 1);
    REQUIRE(eval.limits[0].design);
    CHECK(eval.limits[0].design->size == 32);
    CHECK(eval.min_depth == 5);

    const auto defaults = evaluate_database(recs, 16);
    REQUIRE(defaults.limits.size() == 3);
    CHECK(defaults.limits[0].limit == 5);
    CHECK(defaults.limits[2].limit == 7);
    CHECK(defaults.limits[2].design->size == 32);
    const auto none = evaluate_database(recs, 16, {4});
    CHECK_FALSE(none.limits[0].design);
}

TEST_CASE("size-depth frontier drops dominated points") {
    // (32,5) sklansky, (26,7) brent_kung, (49,5) kogge_stone, (26,9) built by hand below
    auto g = brent_kung(16);
    const std::vector<DesignRecord> recs{record(sklansky(16)), record(kogge_stone(16))};
    const auto eval = evaluate_database(recs, 16);
    REQUIRE(eval.pareto.size() == 1);
    CHECK(eval.pareto[0].size == 32);

    std::vector<DesignRecord> three{record(sklansky(16)), record(kogge_stone(16))};
    auto synthetic = record(brent_kung(16));
    synthetic.size = 26;
    synthetic.depth = 9;
    three.push_back(synthetic);
    const auto front = pareto_front(three, ParetoAxes::SizeDepth);
    REQUIRE(front.size() == 2);
    std::set<std::pair<int, int>> points;
    for (const auto& r : front) points.insert({r.size, r.depth});
    CHECK(points == std::set<std::pair<int, int>>{{32, 5}, {26, 9}});
}

TEST_CASE("depth-limit answers agree with a brute-force scan") {
    Rng rng(31);
    std::vector<DesignRecord> recs;
    for (int i = 0; i < 500; ++i) recs.push_back(proxy_record(random_walk(12, rng), i, DesignSource::Sampled));
    std::vector<int> limits;
    for (int l = 4; l <= 12; ++l) limits.push_back(l);
    const auto eval = evaluate_database(recs, 12, limits);
    for (const auto& row : eval.limits) {
        std::optional<int> best;
        for (const auto& r : recs)
            if (r.depth <= row.limit && (!best || r.size < *best)) best = r.size;
        CHECK(best.has_value() == row.design.has_value());
        if (best) CHECK(row.design->size == *best);
    }
    for (const auto& a : eval.pareto)
        for (const auto& b : recs)
            CHECK_FALSE((b.size <= a.size && b.depth <= a.depth && (b.size < a.size || b.depth < a.depth)));
}

TEST_CASE("empty and mixed databases") {
    const auto empty = evaluate_database({}, 8);
    CHECK(empty.designs == 0);
    CHECK(to_json(empty).at("empty") == true);
    CHECK(to_json(empty).contains("depth_convention"));
    CHECK_THROWS_AS(database_width({}), std::invalid_argument);
    const std::vector<DesignRecord> mixed{record(ripple(8)), record(ripple(9))};
    CHECK_THROWS_AS(database_width(mixed), std::invalid_argument);
    CHECK(evaluate_database(mixed, 8).designs == 1);
}

TEST_CASE("summaries use the population deviation") {
    const std::vector<double> v{2, 4, 4, 4, 5, 5, 7, 9};
    const auto s = summarize(v);
    CHECK(s.count == 8);
    CHECK(s.mean == doctest::Approx(5.0));
    CHECK(s.stddev == doctest::Approx(2.0));
    CHECK(s.min == 2.0);
    CHECK(s.max == 9.0);
    CHECK(summarize({}).count == 0);
}

TEST_CASE("report over seeded runs matches a direct computation") {
    TempDir dir;
    std::vector<fs::path> histories;
    std::vector<double> final_best;
    for (int run = 0; run < 3; ++run) {
        GrpoConfig cfg;
        cfg.width = 6;
        cfg.group_size = 16;
        ModelConfig mc;
        mc.max_width = 6;
        mc.embed_dim = 8;
        mc.shared_layers = 1;
        mc.head_count = 2;
        Rng init(static_cast<std::uint64_t>(run));
        const auto run_dir = dir.path / ("run" + std::to_string(run));
        fs::create_directories(run_dir);
        TrainState<float> state(PolicyModel<float>(mc, init), cfg, {}, DesignDatabase::open(run_dir / "designs.jsonl"),
                                static_cast<std::uint64_t>(100 + run));
        FinetuneOptions opt;
        opt.iterations = 3;
        opt.history_csv = run_dir / "history.csv";
        const auto res = finetune(state, opt);
        final_best.push_back(res.history.back().best_reward);
        histories.push_back(run_dir / "history.csv");
    }
    ReportInputs in{histories, {dir.path / "run0" / "designs.jsonl", dir.path / "run1" / "designs.jsonl"}};
    const auto summary = write_report(in, dir.path / "report");
    for (const char* f : {"summary.csv", "reward_curves.csv", "adp_distribution.csv", "pareto.csv"})
        CHECK(fs::exists(dir.path / "report" / f));

    double mean = 0, var = 0;
    for (double x : final_best) mean += x;
    mean /= 3;
    for (double x : final_best) var += (x - mean) * (x - mean);
    const double sigma = std::sqrt(var / 3);

    bool saw_final = false;
    std::set<std::string> labels;
    for (const auto& row : summary) {
        CHECK(row.at("min").get<double>() <= row.at("mean").get<double>());
        CHECK(row.at("mean").get<double>() <= row.at("max").get<double>());
        labels.insert(row.at("label").get<std::string>());
        if (!row.at("unique_designs").is_null() && !row.at("total_samples").is_null())
            CHECK(row.at("unique_designs").get<std::size_t>() <= row.at("total_samples").get<std::size_t>());
        if (row.at("scope") == "final_best_reward") {
            saw_final = true;
            CHECK(row.at("std").get<double>() == doctest::Approx(sigma));
            CHECK(row.at("mean").get<double>() == doctest::Approx(mean));
        }
    }
    CHECK(saw_final);
    CHECK(labels.count("run0/history") == 1);
    CHECK(labels.count("run2/history") == 1);

    const auto csv = read_csv(dir.path / "report" / "summary.csv");
    CHECK(csv.front() == std::vector<std::string>{"scope", "label", "count", "min", "max", "mean", "std",
                                                  "unique_designs", "total_samples"});
    CHECK(csv.size() == summary.size() + 1);
    for (std::size_t i = 1; i < csv.size(); ++i) CHECK(csv[i].size() == 9);

    const auto rows = read_history_csv(histories.front());
    REQUIRE(rows.size() == 3);
    CHECK(rows.back().samples_total == 48);
    CHECK(rows.back().unique_designs <= rows.back().samples_total);
}

TEST_CASE("CSV writers") {
    TempDir dir;
    const std::vector<DesignRecord> recs{record(ripple(16)), record(sklansky(16))};
    const auto eval = evaluate_database(recs, 16);
    write_limits_csv(dir.path / "limits.csv", eval);
    const auto limits = read_csv(dir.path / "limits.csv");
    CHECK(limits.front() == std::vector<std::string>{"limit", "min_size", "depth", "adp", "iteration"});
    CHECK(limits.size() == 4);
    write_designs_csv(dir.path / "d.csv", recs);
    const auto designs = read_csv(dir.path / "d.csv");
    CHECK(designs.front() == std::vector<std::string>{"size", "depth", "area", "delay", "adp", "iteration", "source"});
    CHECK(designs[1][0] == "15");
}

TEST_CASE("run configuration round trip, overrides and ablations") {
    RunConfig c;
    c.width = 12;
    c.iterations = 7;
    c.seed_designs = {"sklansky"};
    c.ablate.enable("kl_off");
    const auto back = nlohmann::json(c).get<RunConfig>();
    CHECK(nlohmann::json(back) == nlohmann::json(c));
    CHECK(back.effective_model().max_width == 12);  // unset max_width follows the width
    CHECK(back.grpo_config().beta == 0.0);
    CHECK(back.grpo_config().retrieval);

    RunConfig wide;
    wide.width = 32;
    CHECK(wide.effective_model().max_width == 32);

    CHECK_THROWS_AS(nlohmann::json({{"widht", 8}}).get<RunConfig>(), std::invalid_argument);
    CHECK_THROWS_AS(nlohmann::json({{"ablate", {"dropout"}}}).get<RunConfig>(), std::invalid_argument);

    RunConfig bad;
    bad.seed_designs = {"carry_select"};
    CHECK_THROWS(bad.check());
    bad = {};
    bad.surrogate = "ratio";
    CHECK_THROWS(bad.check());

    const std::vector<std::string> names{"rope_off", "skip_pretrain", "kl_off", "retrieval_off"};
    for (unsigned mask = 0; mask < 16; ++mask) {
        RunConfig r;
        for (unsigned i = 0; i < 4; ++i)
            if (mask >> i & 1) r.ablate.enable(names[i]);
        r.check();
        CHECK(r.effective_model().use_rope == !(mask & 1));
        CHECK((r.grpo_config().beta == 0.0) == bool(mask & 4));
        CHECK(r.grpo_config().retrieval == !(mask & 8));
    }
}
