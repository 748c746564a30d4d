// prefixforge command-line interface.
//
// Every subcommand accepts --config FILE (JSON, see README) and flag overrides; flags win.
// Results go to stdout or files, logs to stderr. Failures print one line
// "error: <command>: <message>" and exit nonzero (2 for usage errors).

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "prefixforge/eval/evaluation.hpp"
#include "prefixforge/eval/run_config.hpp"
#include "prefixforge/graph_io.hpp"
#include "prefixforge/hardware.hpp"
#include "prefixforge/model/attention_dump.hpp"
#include "prefixforge/model/checkpoint.hpp"
#include "prefixforge/model/rollout.hpp"
#include "prefixforge/training/corpus.hpp"
#include "prefixforge/training/grpo.hpp"
#include "prefixforge/training/pretrain.hpp"

namespace fs = std::filesystem;
using namespace prefixforge;

namespace {

/// Failure attributed to one flag, reported as "--flag: message".
struct FlagError : std::runtime_error {
    FlagError(const std::string& flag, const std::string& message) : std::runtime_error(flag + ": " + message) {}
};

/// Options shared by the pipeline commands; unset optionals leave the config value alone.
struct Overrides {
    std::string config;
    std::optional<int> width;
    std::optional<int> iterations;
    std::optional<int> group_size;
    std::optional<int> epochs;
    std::optional<int> batch_size;
    std::optional<std::size_t> corpus_size;
    std::optional<double> temperature;
    std::optional<double> beta;
    std::optional<double> lr;
    std::optional<std::string> reward_mode;
    std::optional<std::string> surrogate;
    std::optional<std::string> out_dir;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> ablate;
    std::vector<std::string> seed_designs;
};

RunConfig resolve(const Overrides& o, bool finetune_lr) {
    RunConfig c = o.config.empty() ? RunConfig{} : load_run_config(o.config);
    if (o.width) c.width = *o.width;
    if (o.iterations) c.iterations = *o.iterations;
    if (o.group_size) c.group_size = *o.group_size;
    if (o.epochs) c.pretrain_epochs = *o.epochs;
    if (o.batch_size) c.batch_size = *o.batch_size;
    if (o.corpus_size) c.corpus_size = *o.corpus_size;
    if (o.temperature) c.temperature = *o.temperature;
    if (o.beta) c.beta = *o.beta;
    if (o.lr) (finetune_lr ? c.finetune_lr : c.pretrain_lr) = *o.lr;
    if (o.reward_mode) c.reward_mode = *o.reward_mode;
    if (o.surrogate) c.surrogate = *o.surrogate;
    if (o.out_dir) c.out_dir = *o.out_dir;
    if (o.seed) {
        c.corpus_seed = *o.seed;
        c.init_seed = *o.seed + 1;
        c.train_seed = *o.seed + 2;
        c.finetune_seed = *o.seed + 3;
    }
    for (const auto& a : o.ablate) c.ablate.enable(a);
    for (const auto& d : o.seed_designs) c.seed_designs.push_back(d);
    c.check();
    return c;
}

void add_config(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--config", o.config, "JSON run configuration");
    cmd->add_option("--out-dir", o.out_dir, "output directory");
}

void require_file(const std::string& flag, const std::string& path) {
    if (path.empty()) throw FlagError(flag, "a path is required");
    if (!fs::exists(path)) throw FlagError(flag, "no such file '" + path + "'");
}

LoadedCheckpoint<float> open_checkpoint(const std::string& path) {
    require_file("--checkpoint", path);
    try {
        return load_checkpoint<float>(path);
    } catch (const CheckpointError& e) {
        throw FlagError("--checkpoint", e.what());
    }
}

std::ostream& output(const std::string& path, std::ofstream& file) {
    if (path.empty() || path == "-") return std::cout;
    if (fs::path(path).has_parent_path()) fs::create_directories(fs::path(path).parent_path());
    file.open(path);
    if (!file) throw FlagError("--out", "cannot open '" + path + "'");
    return file;
}

/// Design from a constructor name, or from a JSON file holding a sequence or a graph.
CoordinateSequence load_design(const std::string& name, const std::string& file, int width) {
    if (!file.empty()) {
        require_file("--sequence", file);
        std::ifstream in(file);
        const auto j = nlohmann::json::parse(in, nullptr, false);
        if (j.is_discarded()) throw FlagError("--sequence", "'" + file + "' is not valid JSON");
        if (j.contains("seq")) return sequence_from_json(j);
        return graph_to_sequence(graph_from_json(j));
    }
    if (name.empty()) throw FlagError("--design", "give --design NAME or --sequence FILE");
    return graph_to_sequence(build_named_design(name, width));
}

// ---------------------------------------------------------------------------------------------

void run_baselines(int width, const std::string& out_path) {
    std::ofstream file;
    auto& out = output(out_path, file);
    out << "name,size,depth,valid\n";
    for (const auto& row : baselines(width))
        out << row.name << ',' << row.size << ',' << row.depth << ',' << (row.valid ? "true" : "false") << '\n';
}

void run_eval_db(const std::string& db_path, std::optional<int> width, const std::vector<int>& limits,
                 const std::string& out_dir) {
    require_file("--db", db_path);
    const auto db = DesignDatabase::load(db_path);
    const int w = width ? *width : (db.empty() ? 0 : database_width(db.records()));
    const auto eval = evaluate_database(db.records(), w, limits);
    if (eval.designs == 0) std::cerr << "warning: eval-db: database has no designs; writing an empty report\n";
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        write_limits_csv(fs::path(out_dir) / "depth_limits.csv", eval);
        write_designs_csv(fs::path(out_dir) / "pareto_size_depth.csv", eval.pareto);
        std::ofstream(fs::path(out_dir) / "eval.json") << to_json(eval).dump(2) << '\n';
    }
    std::cout << "# width " << eval.width << ", h = " << eval.min_depth
              << " (depth counts the input level), designs " << eval.designs << '\n';
    std::cout << "limit,min_size\n";
    for (const auto& row : eval.limits)
        std::cout << row.limit << ',' << (row.design ? std::to_string(row.design->size) : "") << '\n';
    std::cout << "pareto_size,pareto_depth\n";
    for (const auto& r : eval.pareto) std::cout << r.size << ',' << r.depth << '\n';
}

void run_legal_rate(const std::string& ckpt, std::optional<int> width, int samples, double temperature,
                    std::uint64_t seed) {
    const auto loaded = open_checkpoint(ckpt);
    const int w = width.value_or(loaded.metadata.value("width", loaded.model.config().max_width));
    Rng rng(seed);
    const double rate = legal_rate(loaded.model, w, temperature, rng, samples);
    std::cout << nlohmann::json{{"width", w}, {"samples", samples}, {"temperature", temperature}, {"legal_rate", rate}}
                     .dump()
              << '\n';
}

void run_gen_corpus(int width, std::size_t count, std::uint64_t seed, const std::string& out) {
    if (out.empty()) throw FlagError("--out", "a path is required");
    Rng rng(seed);
    write_corpus(out, width, count, rng);
    spdlog::info("wrote {} sequences of width {} to {}", count, width, out);
}

void run_pretrain(const RunConfig& cfg, const std::string& corpus_path, const std::string& init_ckpt) {
    fs::create_directories(cfg.out_dir);
    std::vector<CoordinateSequence> corpus;
    if (!corpus_path.empty()) {
        require_file("--corpus", corpus_path);
        corpus = read_corpus(corpus_path);
    } else {
        Rng rng(cfg.corpus_seed);
        corpus = generate_corpus(cfg.width, cfg.corpus_size, rng);
        write_corpus(cfg.out_dir / "corpus.jsonl", corpus);
    }
    if (corpus.empty()) throw FlagError("--corpus", "corpus is empty");

    Rng init(cfg.init_seed);
    PolicyModel<float> model = init_ckpt.empty() ? PolicyModel<float>(cfg.effective_model(), init)
                                                 : open_checkpoint(init_ckpt).model;
    auto pc = cfg.pretrain_config();
    pc.checkpoint_dir = cfg.out_dir / "pretrain";
    const auto report = pretrain(model, std::span<const CoordinateSequence>(corpus), pc);

    nlohmann::json summary = {{"train_size", report.train_size},
                              {"heldout_size", report.heldout_size},
                              {"steps", report.steps},
                              {"uniform_loss", 2.0 * std::log(static_cast<double>(model.config().max_width))},
                              {"epochs", nlohmann::json::array()}};
    for (const auto& e : report.epochs)
        summary["epochs"].push_back({{"epoch", e.epoch},
                                     {"train_loss", e.train_loss},
                                     {"heldout_loss", e.heldout_loss},
                                     {"legal_rate", e.legal_rate},
                                     {"argmax_legal", e.argmax_legal}});
    save_checkpoint(cfg.out_dir / "pretrained.ckpt", model,
                    {{"stage", "pretrain"}, {"width", cfg.width}, {"config", cfg}});
    std::ofstream(cfg.out_dir / "pretrain_report.json") << summary.dump(2) << '\n';
    std::cout << summary.dump() << '\n';
}

void run_finetune(const RunConfig& cfg, const std::string& ckpt, const std::string& db_path) {
    fs::create_directories(cfg.out_dir);
    std::optional<PolicyModel<float>> initial;
    if (cfg.ablate.skip_pretrain) {
        if (!ckpt.empty()) spdlog::warn("skip_pretrain ablation: ignoring --checkpoint");
        Rng init(cfg.init_seed);
        initial.emplace(cfg.effective_model(), init);
    } else {
        if (ckpt.empty()) throw FlagError("--checkpoint", "a pre-trained checkpoint is required (or --ablate skip_pretrain)");
        initial.emplace(open_checkpoint(ckpt).model);
        if (cfg.ablate.rope_off && initial->config().use_rope)
            spdlog::warn("rope_off ablation needs a checkpoint pre-trained without rotary embeddings");
    }
    const fs::path db_file = db_path.empty() ? cfg.out_dir / "designs.jsonl" : fs::path(db_path);
    auto db = DesignDatabase::open(db_file);
    std::vector<PrefixGraph> seeds;
    for (const auto& name : cfg.seed_designs) seeds.push_back(build_named_design(name, cfg.width));
    db.seed(seeds);

    TrainState<float> state(std::move(*initial), cfg.grpo_config(), cfg.reward_settings(), std::move(db),
                            cfg.finetune_seed);
    FinetuneOptions options;
    options.iterations = cfg.iterations;
    options.history_csv = cfg.out_dir / "history.csv";
    options.checkpoint = cfg.out_dir / "finetuned.ckpt";
    options.on_iteration = [](const IterationReport& r) {
        spdlog::info("iteration {}: best {:.1f}, mean {:.2f}, unique {}, objective {:.3e}, kl {:.3e}", r.iteration,
                     r.best_reward, r.mean_reward, r.unique_designs, r.objective, r.kl_term);
    };
    const auto result = finetune(state, options);
    write_designs_csv(cfg.out_dir / "pareto.csv", result.pareto);
    nlohmann::json summary = {{"iterations", result.history.size()},
                              {"ablate", cfg.ablate.names()},
                              {"beta", state.config.beta},
                              {"database", db_file.string()},
                              {"unique_designs", state.database.count(DesignSource::Sampled)}};
    if (result.best)
        summary["best"] = {{"size", result.best->size}, {"depth", result.best->depth}, {"adp", result.best->adp()},
                           {"reward", result.best->reward}, {"source", to_string(result.best->source)}};
    std::cout << summary.dump() << '\n';
}

void run_sample(const std::string& ckpt, int width, int count, double temperature, std::uint64_t seed,
                const std::string& out_path) {
    std::optional<PolicyModel<float>> model;
    if (!ckpt.empty()) {
        model.emplace(open_checkpoint(ckpt).model);
    } else {
        ModelConfig cfg;
        cfg.max_width = width;
        Rng init(seed);
        model.emplace(cfg, init);
    }
    if (width > model->config().max_width)
        throw FlagError("--width", "exceeds the checkpoint's max width " + std::to_string(model->config().max_width));
    Rng rng(seed);
    std::ofstream file;
    auto& out = output(out_path, file);
    for (const auto& seq : rollout(*model, width, temperature, rng, count)) out << dump_compact(sequence_to_json(seq)) << '\n';
}

void run_export_netlist(const std::string& design, const std::string& sequence, int width, const std::string& name,
                        const std::string& out_path) {
    const auto g = sequence_to_graph(load_design(design, sequence, width));
    std::ofstream file;
    output(out_path, file) << export_netlist(g, name);
}

void run_attention_dump(const std::string& ckpt, const std::string& design, const std::string& sequence,
                        std::optional<int> width, const std::string& layers, const std::string& out_path) {
    if (out_path.empty()) throw FlagError("--out", "a .json or .csv path is required");
    const auto loaded = open_checkpoint(ckpt);
    const int w = width.value_or(loaded.model.config().max_width);
    const auto seq = load_design(design, sequence, w);
    LayerSelector selector;
    try {
        selector = LayerSelector::parse(layers);
    } catch (const std::out_of_range& e) {
        throw FlagError("--layers", e.what());
    }
    write_attention(out_path, seq, select_attention(loaded.model, seq, selector));
}

}  // namespace

int main(int argc, char** argv) {
    spdlog::set_default_logger(spdlog::stderr_color_mt("prefixforge"));
    CLI::App app{"Prefix-adder design generation with a coordinate transformer"};
    app.require_subcommand(1);
    bool verbose = false, quiet = false;
    app.add_flag("-v,--verbose", verbose, "debug logging");
    app.add_flag("-q,--quiet", quiet, "warnings and errors only");

    Overrides o;
    int width = 16, count = 100, samples = 1000;
    std::optional<int> opt_width;
    double temperature = kDefaultTemperature;
    double legal_temperature = 1.0;
    std::uint64_t seed = 1;
    std::string out, db, checkpoint, corpus, design, sequence, name = "prefix_adder", layers = "all";
    std::vector<std::string> histories, dbs;
    std::vector<int> limits;

    auto* baselines_cmd = app.add_subcommand("baselines", "size/depth/validity of the classical constructors");
    baselines_cmd->add_option("--width", width, "adder width")->capture_default_str();
    baselines_cmd->add_option("--out", out, "CSV path (default stdout)");

    auto* eval_cmd = app.add_subcommand("eval-db", "minimum size per depth limit and the Pareto set of a database");
    eval_cmd->add_option("--db", db, "design database JSONL")->required();
    eval_cmd->add_option("--width", opt_width, "design width (default: from the database)");
    eval_cmd->add_option("--limits", limits, "depth limits (default h, h+1, h+2)");
    eval_cmd->add_option("--out-dir", out, "directory for CSV and JSON outputs");

    auto* legal_cmd = app.add_subcommand("legal-rate", "fraction of unmasked rollouts that stay legal");
    legal_cmd->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
    legal_cmd->add_option("--width", opt_width, "design width (default: the checkpoint's)");
    legal_cmd->add_option("--samples", samples, "rollouts")->capture_default_str();
    legal_cmd->add_option("--temperature", legal_temperature, "sampling temperature")->capture_default_str();
    legal_cmd->add_option("--seed", seed, "sampling seed")->capture_default_str();

    auto* report_cmd = app.add_subcommand("report", "summary tables and plot-ready CSVs");
    report_cmd->add_option("--history", histories, "fine-tuning history CSV (repeatable)");
    report_cmd->add_option("--db", dbs, "design database JSONL (repeatable)");
    report_cmd->add_option("--out-dir", out, "output directory")->required();

    auto* corpus_cmd = app.add_subcommand("gen-corpus", "random-walk corpus as JSONL");
    corpus_cmd->add_option("--width", width, "adder width")->capture_default_str();
    corpus_cmd->add_option("--count", count, "sequences")->capture_default_str();
    corpus_cmd->add_option("--seed", seed, "random seed")->capture_default_str();
    corpus_cmd->add_option("--out", out, "output JSONL")->required();

    auto* pretrain_cmd = app.add_subcommand("pretrain", "self-supervised pre-training");
    add_config(pretrain_cmd, o);
    pretrain_cmd->add_option("--corpus", corpus, "corpus JSONL (default: generate corpus_size walks)");
    pretrain_cmd->add_option("--init", checkpoint, "continue from this checkpoint");
    pretrain_cmd->add_option("--width", o.width, "adder width");
    pretrain_cmd->add_option("--epochs", o.epochs, "epochs");
    pretrain_cmd->add_option("--batch-size", o.batch_size, "sequences per step");
    pretrain_cmd->add_option("--corpus-size", o.corpus_size, "generated corpus size");
    pretrain_cmd->add_option("--lr", o.lr, "learning rate");
    pretrain_cmd->add_option("--seed", o.seed, "base seed for corpus, init and shuffling");
    pretrain_cmd->add_option("--ablate", o.ablate, "ablation (rope_off)");

    auto* finetune_cmd = app.add_subcommand("finetune", "GRPO fine-tuning with best-design retrieval");
    add_config(finetune_cmd, o);
    finetune_cmd->add_option("--checkpoint", checkpoint, "pre-trained checkpoint");
    finetune_cmd->add_option("--db", db, "design database JSONL (default <out-dir>/designs.jsonl)");
    finetune_cmd->add_option("--width", o.width, "adder width");
    finetune_cmd->add_option("--iterations", o.iterations, "iterations");
    finetune_cmd->add_option("--group-size", o.group_size, "designs sampled per iteration");
    finetune_cmd->add_option("--temperature", o.temperature, "sampling temperature");
    finetune_cmd->add_option("--beta", o.beta, "KL weight");
    finetune_cmd->add_option("--lr", o.lr, "learning rate");
    finetune_cmd->add_option("--surrogate", o.surrogate, "probability | log_probability");
    finetune_cmd->add_option("--reward-mode", o.reward_mode, "proxy | external");
    finetune_cmd->add_option("--seed", o.seed, "base seed");
    finetune_cmd->add_option("--seed-design", o.seed_designs, "constructor stored before iteration 1 (repeatable)");
    finetune_cmd->add_option("--ablate", o.ablate, "rope_off | skip_pretrain | kl_off | retrieval_off (repeatable)");

    auto* sample_cmd = app.add_subcommand("sample", "masked rollouts as JSONL");
    sample_cmd->add_option("--checkpoint", checkpoint, "model checkpoint (default: untrained model)");
    sample_cmd->add_option("--width", width, "adder width")->capture_default_str();
    sample_cmd->add_option("--count", count, "designs")->capture_default_str();
    sample_cmd->add_option("--temperature", temperature, "sampling temperature")->capture_default_str();
    sample_cmd->add_option("--seed", seed, "sampling seed")->capture_default_str();
    sample_cmd->add_option("--out", out, "output JSONL (default stdout)");

    auto* netlist_cmd = app.add_subcommand("export-netlist", "structural Verilog for a design");
    netlist_cmd->add_option("--design", design, "ripple | sklansky | kogge_stone | brent_kung");
    netlist_cmd->add_option("--sequence", sequence, "JSON file with a sequence or graph");
    netlist_cmd->add_option("--width", width, "adder width for --design")->capture_default_str();
    netlist_cmd->add_option("--name", name, "top module name")->capture_default_str();
    netlist_cmd->add_option("--out", out, "output .v (default stdout)");

    auto* attn_cmd = app.add_subcommand("attention-dump", "per-head attention matrices for one design");
    attn_cmd->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
    attn_cmd->add_option("--design", design, "constructor name");
    attn_cmd->add_option("--sequence", sequence, "JSON file with a sequence or graph");
    attn_cmd->add_option("--width", opt_width, "width for --design (default: the checkpoint's)");
    attn_cmd->add_option("--layers", layers, "all | shared | row | col | stack:index")->capture_default_str();
    attn_cmd->add_option("--out", out, "output .json or .csv")->required();

    auto* config_cmd = app.add_subcommand("print-config", "effective run configuration as JSON");
    add_config(config_cmd, o);
    config_cmd->add_option("--width", o.width, "adder width");
    config_cmd->add_option("--ablate", o.ablate, "ablations (repeatable)");

    std::string command = "prefixforge";
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: usage: " << e.what() << '\n';
        return 2;
    }
    spdlog::set_level(verbose ? spdlog::level::debug : quiet ? spdlog::level::warn : spdlog::level::info);

    try {
        const auto* sub = app.get_subcommands().front();
        command = sub->get_name();
        if (sub == baselines_cmd) run_baselines(width, out);
        else if (sub == eval_cmd) run_eval_db(db, opt_width, limits, out);
        else if (sub == legal_cmd) run_legal_rate(checkpoint, opt_width, samples, legal_temperature, seed);
        else if (sub == report_cmd) std::cout << write_report({{histories.begin(), histories.end()}, {dbs.begin(), dbs.end()}}, out).dump(2) << '\n';
        else if (sub == corpus_cmd) run_gen_corpus(width, static_cast<std::size_t>(count), seed, out);
        else if (sub == pretrain_cmd) run_pretrain(resolve(o, false), corpus, checkpoint);
        else if (sub == finetune_cmd) run_finetune(resolve(o, true), checkpoint, db);
        else if (sub == sample_cmd) run_sample(checkpoint, width, count, temperature, seed, out);
        else if (sub == netlist_cmd) run_export_netlist(design, sequence, width, name, out);
        else if (sub == attn_cmd) run_attention_dump(checkpoint, design, sequence, opt_width, layers, out);
        else if (sub == config_cmd) std::cout << nlohmann::json(resolve(o, false)).dump(2) << '\n';
    } catch (const std::exception& e) {
        std::cerr << "error: " << command << ": " << e.what() << '\n';
        return 1;
    }
    return 0;
}
