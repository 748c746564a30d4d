#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "../support/fixtures.hpp"
#include "../support/oracles.hpp"
#include "prefixforge/legality.hpp"
#include "prefixforge/model/attention_dump.hpp"
#include "prefixforge/model/checkpoint.hpp"
#include "prefixforge/model/policy_model.hpp"
#include "prefixforge/model/rollout.hpp"
#include "prefixforge/training/pretrain.hpp"

using namespace prefixforge;
namespace fs = std::filesystem;

namespace {

ModelConfig small_config(int max_width = 8) {
    ModelConfig c;
    c.max_width = max_width;
    c.embed_dim = 8;
    c.shared_layers = 2;
    c.row_layers = 1;
    c.col_layers = 1;
    c.head_count = 2;
    c.ffn_multiplier = 2;
    return c;
}

/// Overwrites every tensor (output projections included) with N(0, std) noise so no path is trivially zero.
template <typename S>
void scramble(PolicyModel<S>& model, std::uint64_t seed, double std_dev = 0.3) {
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, std_dev);
    for (auto& [name, t] : model.parameters().tensors())
        for (Eigen::Index i = 0; i < t->size(); ++i) (*t)(i) += static_cast<S>(normal(rng));
}

template <typename S>
PolicyModel<S> random_model(const ModelConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    PolicyModel<S> m(cfg, rng);
    scramble(m, seed + 1);
    return m;
}

Eigen::MatrixXd rotation(int m, int d, double base) {
    Eigen::MatrixXd r = Eigen::MatrixXd::Zero(d, d);
    for (int i = 0; i < d / 2; ++i) {
        const double theta = m * std::pow(base, -2.0 * i / d);
        r(2 * i, 2 * i) = std::cos(theta);
        r(2 * i, 2 * i + 1) = -std::sin(theta);
        r(2 * i + 1, 2 * i) = std::sin(theta);
        r(2 * i + 1, 2 * i + 1) = std::cos(theta);
    }
    return r;
}

struct TempDir {
    fs::path path;
    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() / ("pfx_model_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("rotary map at position 0 is the identity") {
    Vector<double> x = Vector<double>::LinSpaced(16, -1.0, 2.0);
    const Vector<double> before = x;
    apply_rotary<double>(x, 0, 10000.0);
    CHECK((x - before).norm() == 0.0);
}

TEST_CASE("rotary map matches the explicit rotation, keeps norms and encodes relative distance") {
    Rng rng(3);
    std::normal_distribution<double> normal;
    for (int trial = 0; trial < 50; ++trial) {
        Vector<double> x(16);
        for (auto& v : x) v = normal(rng);
        const int p = static_cast<int>(uniform_index(rng, 64));
        const int q = static_cast<int>(uniform_index(rng, 64));
        Vector<double> rp = x, rq = x, rd = x;
        apply_rotary<double>(rp, p, 10000.0);
        apply_rotary<double>(rq, q, 10000.0);
        CHECK((rp - rotation(p, 16, 10000.0) * x).norm() < 1e-12);
        CHECK(std::abs(rp.norm() - x.norm()) < 1e-6);
        if (q >= p) {
            apply_rotary<double>(rd, q - p, 10000.0);
            CHECK(std::abs(rp.dot(rq) - x.dot(rd)) < 1e-5);
        }
    }
    Vector<float> xf = Vector<float>::Ones(8);
    apply_rotary<float>(xf, 13, 10000.0);
    CHECK(std::abs(xf.norm() - std::sqrt(8.0f)) < 1e-5f);
}

TEST_CASE("embedding rotates each half by its own coordinate value") {
    const auto cfg = small_config();
    Rng rng(1);
    const PolicyModel<double> m(cfg, rng);
    const std::vector<Coordinate> coords{{0, 0}, {5, 3}};
    const auto t = m.embed(coords);
    REQUIRE(t.rows() == cfg.hidden());
    REQUIRE(t.cols() == 2);
    const auto& p = m.parameters();
    CHECK((t.col(0).head(8) - p.row_embedding.col(0)).norm() == 0.0);
    CHECK((t.col(0).tail(8) - p.col_embedding.col(0)).norm() == 0.0);
    CHECK((t.col(1).head(8) - rotation(5, 8, cfg.rope_base) * p.row_embedding.col(5)).norm() < 1e-12);
    CHECK((t.col(1).tail(8) - rotation(3, 8, cfg.rope_base) * p.col_embedding.col(3)).norm() < 1e-12);

    auto no_rope = cfg;
    no_rope.use_rope = false;
    const PolicyModel<double> plain(no_rope, p);
    const auto u = plain.embed(coords);
    CHECK((u.col(1).head(8) - p.row_embedding.col(5)).norm() == 0.0);

    const std::vector<Coordinate> out_of_range{{0, 0}, {8, 8}};
    CHECK_THROWS_AS(m.embed(out_of_range), std::out_of_range);
}

TEST_CASE("configuration checks") {
    auto c = small_config();
    c.embed_dim = 7;
    CHECK_THROWS_AS(c.check(), std::invalid_argument);
    c = small_config();
    c.head_count = 3;
    CHECK_THROWS_AS(c.check(), std::invalid_argument);
    c = small_config();
    c.max_width = 65;
    CHECK_THROWS_AS(c.check(), std::invalid_argument);
    CHECK(nlohmann::json(small_config()).get<ModelConfig>() == small_config());
}

TEST_CASE("forward shapes, normalization and over-length input") {
    const auto cfg = small_config();
    const auto m = random_model<double>(cfg, 2);
    const auto seq = graph_to_sequence(sklansky(8));
    const auto out = m.forward(seq.coords);
    CHECK(out.row.rows() == 8);
    CHECK(out.row.cols() == static_cast<Eigen::Index>(seq.size()));
    CHECK(out.col.rows() == 8);
    CHECK(out.col.cols() == static_cast<Eigen::Index>(seq.size()));
    const auto pr = softmax_columns(out.row), pc = softmax_columns(out.col);
    CHECK((pr.colwise().sum().array() - 1.0).abs().maxCoeff() < 1e-6);
    CHECK((pc.colwise().sum().array() - 1.0).abs().maxCoeff() < 1e-6);
    CHECK((pr.array() >= 0).all());

    std::vector<Coordinate> too_long(cfg.max_sequence_length() + 1, Coordinate{0, 0});
    CHECK_THROWS_AS(m.forward(too_long), std::out_of_range);
}

TEST_CASE("forward is causal") {
    const auto m = random_model<double>(small_config(), 4);
    const auto seq = graph_to_sequence(kogge_stone(8));
    const auto base = m.forward(seq.coords);
    for (std::size_t k : {std::size_t{1}, std::size_t{5}, seq.size() - 1}) {
        auto changed = seq.coords;
        changed[k] = Coordinate{(changed[k].row + 3) % 8, (changed[k].col + 5) % 8};
        const auto out = m.forward(changed);
        const auto keep = static_cast<Eigen::Index>(k);
        CHECK((out.row.leftCols(keep) - base.row.leftCols(keep)).cwiseAbs().maxCoeff() == 0.0);
        CHECK((out.col.leftCols(keep) - base.col.leftCols(keep)).cwiseAbs().maxCoeff() == 0.0);
        CHECK((out.row.col(keep) - base.row.col(keep)).norm() > 0.0);
    }
}

TEST_CASE("untrained model is uniform") {
    Rng rng(5);
    const PolicyModel<float> m(small_config(), rng);
    const auto [r, c] = m.next_distributions(graph_to_sequence(brent_kung(8)).coords);
    CHECK((r.array() - 0.125f).abs().maxCoeff() < 1e-6f);
    CHECK((c.array() - 0.125f).abs().maxCoeff() < 1e-6f);
}

TEST_CASE("next distributions are the softmax of the last logits") {
    const auto m = random_model<double>(small_config(), 6);
    const auto seq = graph_to_sequence(sklansky(6));
    const auto [r, c] = m.next_distributions(seq.coords);
    const auto logits = m.forward(seq.coords);
    CHECK((r - softmax_columns<double>(logits.row.rightCols(1))).norm() < 1e-12);
    CHECK((c - softmax_columns<double>(logits.col.rightCols(1))).norm() < 1e-12);
    CHECK(std::abs(r.sum() - 1.0) < 1e-6);
    CHECK(std::abs(c.sum() - 1.0) < 1e-6);
}

TEST_CASE("packed forward equals per-sequence forward") {
    const auto m = random_model<double>(small_config(), 7);
    Rng rng(8);
    std::vector<CoordinateSequence> seqs;
    for (int i = 0; i < 6; ++i) seqs.push_back(random_walk(3 + i, rng));
    const auto batch = PackedBatch::pack(seqs);
    REQUIRE(batch.segments.size() == seqs.size());
    const auto packed = m.forward(batch);
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        const auto single = m.forward(seqs[i].coords);
        const auto& seg = batch.segments[i];
        CHECK((packed.row.middleCols(seg.offset, seg.length) - single.row).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((packed.col.middleCols(seg.offset, seg.length) - single.col).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("cached decoding reproduces the full forward") {
    const auto m = random_model<double>(small_config(), 9);
    Rng rng(10);
    const auto a = random_walk(8, rng), b = random_walk(5, rng);
    const auto fa = m.forward(a.coords), fb = m.forward(b.coords);
    auto state = m.start_decoding(2);
    for (std::size_t t = 0; t < a.size(); ++t) {
        std::vector<int> slots{0};
        std::vector<Coordinate> tokens{a.coords[t]};
        if (t < b.size()) {
            slots.push_back(1);
            tokens.push_back(b.coords[t]);
        }
        const auto out = m.decode(state, slots, tokens);
        const auto ti = static_cast<Eigen::Index>(t);
        CHECK((out.row.col(0) - fa.row.col(ti)).cwiseAbs().maxCoeff() < 1e-10);
        CHECK((out.col.col(0) - fa.col.col(ti)).cwiseAbs().maxCoeff() < 1e-10);
        if (t < b.size()) {
            CHECK((out.row.col(1) - fb.row.col(ti)).cwiseAbs().maxCoeff() < 1e-10);
            CHECK((out.col.col(1) - fb.col.col(ti)).cwiseAbs().maxCoeff() < 1e-10);
        }
    }
}

TEST_CASE("float and double models agree") {
    const auto md = random_model<double>(small_config(), 11);
    const PolicyModel<float> mf(md.config(), md.parameters().cast<float>());
    const auto seq = graph_to_sequence(brent_kung(8));
    const auto d = md.forward(seq.coords);
    const auto f = mf.forward(seq.coords);
    CHECK((d.row - f.row.cast<double>()).cwiseAbs().maxCoeff() < 1e-3);
    CHECK((d.col - f.col.cast<double>()).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("analytic gradient of the pre-training loss matches finite differences") {
    ModelConfig cfg;
    cfg.max_width = 5;
    cfg.embed_dim = 4;  // token width 8
    cfg.shared_layers = 1;
    cfg.row_layers = 1;
    cfg.col_layers = 1;
    cfg.head_count = 2;
    cfg.ffn_multiplier = 2;
    auto model = random_model<double>(cfg, 12);
    Rng rng(13);
    std::vector<CoordinateSequence> batch;
    for (int i = 0; i < 3; ++i) batch.push_back(random_walk(5, rng));

    auto grads = ParameterSet<double>::zeros(cfg);
    pretrain_loss_and_gradient(model, batch, grads);
    CHECK(pretrain_loss(model, batch) == doctest::Approx(pretrain_loss_and_gradient(model, batch, grads)));

    const double h = 1e-6;
    auto params = model.parameters().tensors();
    const auto analytic = grads.tensors();
    double worst = 0.0;
    for (std::size_t t = 0; t < params.size(); ++t) {
        auto& tensor = *params[t].second;
        const auto& g = *analytic[t].second;
        Eigen::VectorXd numeric(tensor.size()), exact(tensor.size());
        for (Eigen::Index i = 0; i < tensor.size(); ++i) {
            const double saved = tensor(i);
            tensor(i) = saved + h;
            const double up = pretrain_loss(model, batch);
            tensor(i) = saved - h;
            const double down = pretrain_loss(model, batch);
            tensor(i) = saved;
            numeric(i) = (up - down) / (2 * h);
            exact(i) = g(i);
        }
        const double scale = std::max(numeric.norm() + exact.norm(), 1e-8);
        const double rel = (numeric - exact).norm() / scale;
        CAPTURE(params[t].first);
        CHECK(rel < 1e-3);
        worst = std::max(worst, rel);
    }
    MESSAGE("worst relative gradient error " << worst);
}

TEST_CASE("checkpoints round trip across dtypes") {
    TempDir dir;
    const auto md = random_model<double>(small_config(), 14);
    const auto meta = nlohmann::json{{"stage", "test"}, {"epoch", 3}};
    save_checkpoint(dir.path / "d.ckpt", md, meta);
    const auto back = load_checkpoint<double>(dir.path / "d.ckpt");
    CHECK(back.metadata == meta);
    CHECK(back.model.config() == md.config());
    CHECK(back.model.parameters().checksum() == md.parameters().checksum());

    const auto as_float = load_checkpoint<float>(dir.path / "d.ckpt");
    CHECK(as_float.model.parameters().checksum() == md.parameters().cast<float>().checksum());

    const PolicyModel<float> mf(md.config(), md.parameters().cast<float>());
    save_checkpoint(dir.path / "f.ckpt", mf);
    CHECK(load_checkpoint<float>(dir.path / "f.ckpt").model.parameters().checksum() == mf.parameters().checksum());
    CHECK(fs::file_size(dir.path / "f.ckpt") < fs::file_size(dir.path / "d.ckpt"));
    CHECK_FALSE(fs::exists(dir.path / "d.ckpt.tmp"));
}

TEST_CASE("corrupt checkpoints are rejected") {
    TempDir dir;
    CHECK_THROWS_AS(load_checkpoint<float>(dir.path / "missing.ckpt"), CheckpointError);
    std::ofstream(dir.path / "junk.ckpt") << "not a checkpoint at all";
    CHECK_THROWS_AS(load_checkpoint<float>(dir.path / "junk.ckpt"), CheckpointError);

    Rng rng(1);
    save_checkpoint(dir.path / "ok.ckpt", PolicyModel<float>(small_config(), rng));
    const auto full = fs::file_size(dir.path / "ok.ckpt");
    fs::copy_file(dir.path / "ok.ckpt", dir.path / "short.ckpt");
    fs::resize_file(dir.path / "short.ckpt", full - 16);
    CHECK_THROWS_AS(load_checkpoint<float>(dir.path / "short.ckpt"), CheckpointError);
}

TEST_CASE("attention maps are causal and row-stochastic") {
    const auto m = random_model<double>(small_config(), 15);
    const auto seq = graph_to_sequence(sklansky(8));
    const auto blocks = select_attention(m, seq, LayerSelector::parse("all"));
    REQUIRE(blocks.size() == 4);
    for (const auto& b : blocks) {
        REQUIRE(b.heads.size() == 2);
        for (const auto& h : b.heads) {
            CHECK(h.rows() == static_cast<Eigen::Index>(seq.size()));
            CHECK((h.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-5);
            for (Eigen::Index q = 0; q < h.rows(); ++q)
                for (Eigen::Index k = q + 1; k < h.cols(); ++k) CHECK(h(q, k) == 0.0);
        }
    }
    CHECK(select_attention(m, seq, LayerSelector::parse("col")).size() == 1);
    const auto one = select_attention(m, seq, LayerSelector::parse("shared:1"));
    REQUIRE(one.size() == 1);
    CHECK(one[0].stack == "shared");
    CHECK(one[0].index == 1);
}

TEST_CASE("attention selectors and output formats") {
    CHECK_THROWS_AS(LayerSelector::parse("decoder"), std::out_of_range);
    CHECK_THROWS_AS(LayerSelector::parse("row:x"), std::out_of_range);
    const auto m = random_model<double>(small_config(), 16);
    const auto seq = graph_to_sequence(ripple(4));
    CHECK_THROWS_AS(select_attention(m, seq, LayerSelector::parse("row:3")), std::out_of_range);
    const CoordinateSequence bad{4, {{0, 0}, {1, 0}}};
    CHECK_THROWS(select_attention(m, bad, LayerSelector::parse("all")));

    TempDir dir;
    const auto blocks = select_attention(m, seq, LayerSelector::parse("row"));
    write_attention(dir.path / "a.json", seq, blocks);
    std::ifstream in(dir.path / "a.json");
    const auto j = nlohmann::json::parse(in);
    CHECK(j.at("width") == 4);
    CHECK(j.at("layers").size() == 1);
    CHECK(j.at("layers")[0].at("heads").size() == 2);

    write_attention(dir.path / "a.csv", seq, blocks);
    std::ifstream csv(dir.path / "a.csv");
    std::string header;
    std::getline(csv, header);
    CHECK(header == "stack,layer,head,query,key,score");
    std::size_t lines = 0;
    for (std::string line; std::getline(csv, line);) ++lines;
    const std::size_t L = seq.size();
    CHECK(lines == 2 * L * (L + 1) / 2);
}

TEST_CASE("masked rollouts are always valid, whatever the parameters") {
    for (int n : {4, 8, 16}) {
        const auto m = random_model<float>(small_config(16), 100 + static_cast<std::uint64_t>(n));
        Rng rng(static_cast<std::uint64_t>(n));
        const auto designs = rollout(m, n, kDefaultTemperature, rng, 1000);
        REQUIRE(designs.size() == 1000);
        std::size_t longest = 0;
        for (const auto& d : designs) {
            CHECK(d.width == n);
            CHECK(oracle::valid_sequence(n, fixtures::cells(d)));
            longest = std::max(longest, d.size());
        }
        CHECK(longest <= max_sequence_length(n));
    }
}

TEST_CASE("rollouts retarget the end coordinate for narrower widths") {
    const auto m = random_model<float>(small_config(16), 21);
    Rng rng(22);
    for (const auto& d : rollout(m, 8, 1.0, rng, 200, 64)) {
        CHECK(d.back() == Coordinate{7, 0});
        CHECK(validate(sequence_to_graph(d)).valid());
    }
    CHECK_THROWS(rollout(m, 17, 1.0, rng, 1));
}

TEST_CASE("rollouts are reproducible and chunk-independent") {
    const auto m = random_model<double>(small_config(), 23);
    Rng a(5), b(5);
    const auto x = rollout(m, 8, 0.8, a, 50, 50);
    const auto y = rollout(m, 8, 0.8, b, 50, 50);
    CHECK(x == y);
}

TEST_CASE("untrained unmasked generation is almost never legal") {
    Rng init(24);
    const PolicyModel<float> m(small_config(16), init);
    Rng rng(25);
    CHECK(legal_rate(m, 16, 1.0, rng, 1000) < 0.05);
    const auto raw = rollout_unmasked(m, 8, 1.0, rng, 100);
    for (const auto& r : raw) {
        if (r.valid) CHECK(r.seq.complete());
        CHECK(r.seq.size() <= max_sequence_length(8) + 1);
    }
}
