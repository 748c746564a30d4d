#include "prefixforge/training/pretrain.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include <spdlog/spdlog.h>

#include "prefixforge/model/checkpoint.hpp"
#include "prefixforge/model/rollout.hpp"

namespace prefixforge {

namespace {

template <typename Scalar>
Matrix<Scalar> log_softmax_columns(const Matrix<Scalar>& logits) {
    Matrix<Scalar> out = logits.rowwise() - logits.colwise().maxCoeff();
    const auto lse = out.array().exp().colwise().sum().log().eval();
    out.rowwise() -= lse.matrix();
    return out;
}

void check_batch(std::span<const CoordinateSequence> batch) {
    if (batch.empty()) throw std::invalid_argument("empty pre-training batch");
    for (const auto& seq : batch)
        if (seq.coords.size() < 2) throw std::invalid_argument("pre-training sequences need at least 2 coordinates");
}

/// Loss of a packed forward pass; fills d_row/d_col with d(loss)/d(logits) when given.
template <typename Scalar>
double packed_loss(const PackedBatch& batch, const HeadLogits<Scalar>& logits, Matrix<Scalar>* d_row,
                   Matrix<Scalar>* d_col) {
    const auto log_row = log_softmax_columns(logits.row);
    const auto log_col = log_softmax_columns(logits.col);
    const double batch_scale = 1.0 / static_cast<double>(batch.segments.size());
    if (d_row) {
        d_row->setZero(logits.row.rows(), logits.row.cols());
        d_col->setZero(logits.col.rows(), logits.col.cols());
    }
    double total = 0.0;
    for (const auto& seg : batch.segments) {
        const double scale = batch_scale / static_cast<double>(seg.length - 1);
        double sum = 0.0;
        for (Eigen::Index t = seg.offset; t < seg.offset + seg.length - 1; ++t) {
            const auto& target = batch.tokens[static_cast<std::size_t>(t + 1)];
            sum += static_cast<double>(log_row(target.row, t)) + static_cast<double>(log_col(target.col, t));
            if (d_row) {
                const auto s = static_cast<Scalar>(scale);
                d_row->col(t) = log_row.col(t).array().exp() * s;
                d_col->col(t) = log_col.col(t).array().exp() * s;
                (*d_row)(target.row, t) -= s;
                (*d_col)(target.col, t) -= s;
            }
        }
        total -= sum * scale;
    }
    return total;
}

template <typename Scalar>
double mean_loss(const PolicyModel<Scalar>& model, std::span<const CoordinateSequence> seqs, std::size_t chunk) {
    double sum = 0.0;
    for (std::size_t start = 0; start < seqs.size(); start += chunk) {
        const auto part = seqs.subspan(start, std::min(chunk, seqs.size() - start));
        sum += pretrain_loss(model, part) * static_cast<double>(part.size());
    }
    return sum / static_cast<double>(seqs.size());
}

void shuffle(std::vector<std::size_t>& order, Rng& rng) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
}

}  // namespace

template <typename Scalar>
double pretrain_loss(const PolicyModel<Scalar>& model, std::span<const CoordinateSequence> batch) {
    check_batch(batch);
    const auto packed = PackedBatch::pack(batch);
    return packed_loss<Scalar>(packed, model.forward(packed), nullptr, nullptr);
}

template <typename Scalar>
double pretrain_loss_and_gradient(const PolicyModel<Scalar>& model, std::span<const CoordinateSequence> batch,
                                  ParameterSet<Scalar>& grads) {
    check_batch(batch);
    ForwardTape<Scalar> tape;
    const auto packed = PackedBatch::pack(batch);
    const auto logits = model.forward(packed, &tape);
    Matrix<Scalar> d_row, d_col;
    const double loss = packed_loss<Scalar>(packed, logits, &d_row, &d_col);
    grads.set_zero();
    model.backward(tape, d_row, d_col, grads);
    return loss;
}

template <typename Scalar>
double argmax_legal_fraction(const PolicyModel<Scalar>& model, std::span<const CoordinateSequence> sequences) {
    std::size_t hits = 0, total = 0;
    constexpr std::size_t kChunk = 128;
    for (std::size_t start = 0; start < sequences.size(); start += kChunk) {
        const auto part = sequences.subspan(start, std::min(kChunk, sequences.size() - start));
        const auto packed = PackedBatch::pack(part);
        const auto logits = model.forward(packed);
        for (std::size_t s = 0; s < part.size(); ++s) {
            const auto& seg = packed.segments[s];
            LegalityTracker tracker(part[s].width);
            for (Eigen::Index t = seg.offset; t < seg.offset + seg.length - 1; ++t) {
                Eigen::Index row = 0, col = 0;
                logits.row.col(t).maxCoeff(&row);
                logits.col.col(t).maxCoeff(&col);
                hits += tracker.is_legal({static_cast<int>(row), static_cast<int>(col)}) ? 1 : 0;
                ++total;
                tracker.push(packed.tokens[static_cast<std::size_t>(t + 1)]);
            }
        }
    }
    return total == 0 ? std::numeric_limits<double>::quiet_NaN() : static_cast<double>(hits) / static_cast<double>(total);
}

template <typename Scalar>
PretrainReport pretrain(PolicyModel<Scalar>& model, std::span<const CoordinateSequence> corpus,
                        const PretrainConfig& config) {
    if (corpus.empty()) throw std::invalid_argument("pre-training corpus is empty");
    if (config.batch_size < 1 || config.epochs < 0) throw std::invalid_argument("bad pre-training schedule");
    const int width = corpus.front().width;
    for (const auto& seq : corpus)
        if (seq.width != width) throw std::invalid_argument("pre-training corpus mixes widths");

    Rng rng(config.seed);
    std::vector<std::size_t> order(corpus.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle(order, rng);
    auto heldout_count = static_cast<std::size_t>(config.holdout_fraction * static_cast<double>(corpus.size()));
    if (heldout_count >= corpus.size()) heldout_count = corpus.size() - 1;
    std::vector<CoordinateSequence> heldout, train;
    for (std::size_t i = 0; i < order.size(); ++i)
        (i + heldout_count >= order.size() ? heldout : train).push_back(corpus[order[i]]);

    PretrainReport report;
    report.train_size = train.size();
    report.heldout_size = heldout.size();
    Adam<Scalar> adam(model.config(), config.adam);
    auto grads = ParameterSet<Scalar>::zeros(model.config());
    std::vector<std::size_t> batch_order(train.size());
    std::iota(batch_order.begin(), batch_order.end(), std::size_t{0});
    std::vector<CoordinateSequence> batch;
    const auto bs = static_cast<std::size_t>(config.batch_size);

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        shuffle(batch_order, rng);
        double loss_sum = 0.0;
        long batches = 0;
        for (std::size_t start = 0; start < train.size(); start += bs) {
            batch.clear();
            for (std::size_t i = start; i < std::min(start + bs, train.size()); ++i) batch.push_back(train[batch_order[i]]);
            const double loss = pretrain_loss_and_gradient(model, std::span<const CoordinateSequence>(batch), grads);
            if (!std::isfinite(loss))
                throw TrainingDivergence("non-finite pre-training loss at epoch " + std::to_string(epoch) + ", step " +
                                         std::to_string(report.steps + 1) + " (lr " +
                                         std::to_string(config.adam.learning_rate) + ")");
            const double norm = adam.step(model.parameters(), grads);
            if (!std::isfinite(norm))
                throw TrainingDivergence("non-finite gradient norm at step " + std::to_string(report.steps + 1));
            ++report.steps;
            ++batches;
            loss_sum += loss;
            if (config.record_step_losses) report.step_losses.push_back(loss);
        }

        EpochReport er;
        er.epoch = epoch;
        er.train_loss = batches ? loss_sum / static_cast<double>(batches) : std::numeric_limits<double>::quiet_NaN();
        er.heldout_loss = heldout.empty() ? std::numeric_limits<double>::quiet_NaN()
                                          : mean_loss(model, std::span<const CoordinateSequence>(heldout), 128);
        er.argmax_legal = argmax_legal_fraction(model, std::span<const CoordinateSequence>(heldout));
        er.legal_rate = std::numeric_limits<double>::quiet_NaN();
        if (config.legal_rate_samples > 0) {
            Rng eval_rng(config.seed ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(epoch)));
            er.legal_rate = legal_rate(model, width, config.legal_rate_temperature, eval_rng, config.legal_rate_samples);
        }
        spdlog::info("epoch {}: train loss {:.4f}, held-out loss {:.4f}, legal rate {:.4f}", epoch, er.train_loss,
                     er.heldout_loss, er.legal_rate);
        if (config.checkpoint_dir) {
            std::filesystem::create_directories(*config.checkpoint_dir);
            save_checkpoint(*config.checkpoint_dir / ("epoch_" + std::to_string(epoch) + ".ckpt"), model,
                            {{"stage", "pretrain"},
                             {"epoch", epoch},
                             {"train_loss", er.train_loss},
                             {"heldout_loss", er.heldout_loss},
                             {"legal_rate", er.legal_rate},
                             {"width", width}});
        }
        report.epochs.push_back(er);
    }
    return report;
}

template double pretrain_loss<float>(const PolicyModel<float>&, std::span<const CoordinateSequence>);
template double pretrain_loss<double>(const PolicyModel<double>&, std::span<const CoordinateSequence>);
template double pretrain_loss_and_gradient<float>(const PolicyModel<float>&, std::span<const CoordinateSequence>,
                                                  ParameterSet<float>&);
template double pretrain_loss_and_gradient<double>(const PolicyModel<double>&, std::span<const CoordinateSequence>,
                                                   ParameterSet<double>&);
template double argmax_legal_fraction<float>(const PolicyModel<float>&, std::span<const CoordinateSequence>);
template double argmax_legal_fraction<double>(const PolicyModel<double>&, std::span<const CoordinateSequence>);
template PretrainReport pretrain<float>(PolicyModel<float>&, std::span<const CoordinateSequence>,
                                        const PretrainConfig&);
template PretrainReport pretrain<double>(PolicyModel<double>&, std::span<const CoordinateSequence>,
                                         const PretrainConfig&);

}  // namespace prefixforge
