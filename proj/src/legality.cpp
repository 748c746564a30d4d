#include "prefixforge/legality.hpp"

#include <bit>
#include <cmath>
#include <limits>

#include <spdlog/spdlog.h>

namespace prefixforge {

namespace {

std::uint64_t bit(int i) { return std::uint64_t{1} << i; }

MaskVector mask_all_but(int width, std::uint64_t allowed) {
    MaskVector m(width);
    for (int i = 0; i < width; ++i) m[i] = (allowed & bit(i)) == 0;
    return m;
}

int pick(std::span<const double> weights, double total, Rng& rng) {
    const double u = uniform01(rng) * total;
    double acc = 0.0;
    int last_positive = -1;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (weights[i] <= 0.0) continue;
        acc += weights[i];
        last_positive = static_cast<int>(i);
        if (u < acc) return last_positive;
    }
    return last_positive;
}

int sample_half(std::span<const double> probs, const MaskVector& invalid, double temperature, Rng& rng,
                DegeneratePolicy policy, bool& fallback) {
    if (static_cast<Eigen::Index>(probs.size()) < invalid.size())
        throw std::invalid_argument("probability vector shorter than the mask");
    if (invalid.all()) throw SamplingError("mask leaves no valid entry");
    std::vector<double> weights(probs.size(), 0.0);
    double total = 0.0;
    for (Eigen::Index i = 0; i < invalid.size(); ++i) {
        if (invalid[i]) continue;
        const double p = probs[static_cast<std::size_t>(i)];
        if (p < 0.0) throw std::invalid_argument("negative probability");
        weights[static_cast<std::size_t>(i)] = std::pow(p, 1.0 / temperature);
        total += weights[static_cast<std::size_t>(i)];
    }
    if (!(total > 0.0) || !std::isfinite(total)) {
        if (policy == DegeneratePolicy::Throw) throw SamplingError("no probability mass on valid entries");
        spdlog::warn("degenerate policy: no probability mass on valid entries, sampling uniformly");
        fallback = true;
        total = 0.0;
        for (Eigen::Index i = 0; i < invalid.size(); ++i) {
            weights[static_cast<std::size_t>(i)] = invalid[i] ? 0.0 : 1.0;
            total += weights[static_cast<std::size_t>(i)];
        }
    }
    return pick(weights, total, rng);
}

}  // namespace

LegalityTracker::LegalityTracker(int width) : width_(width), rows_(static_cast<std::size_t>(width), 0) {
    if (width < 2 || width > kMaxWidth) throw std::invalid_argument("width out of range");
    rows_[0] = 1;
}

int LegalityTracker::allowed_row() const { return last_.col == 0 ? last_.row + 1 : last_.row; }

std::uint64_t LegalityTracker::allowed_columns() const {
    if (finished()) return 0;
    if (last_.col == 0) return bit(last_.row + 1);
    return rows_[static_cast<std::size_t>(last_.col - 1)];
}

bool LegalityTracker::is_legal(Coordinate next) const {
    if (finished()) return false;
    if (next.row != allowed_row() || next.col < 0 || next.col >= width_) return false;
    return (allowed_columns() & bit(next.col)) != 0;
}

LegalityMask LegalityTracker::mask() const {
    if (finished()) throw std::logic_error("sequence already reached its terminal coordinate");
    return {mask_all_but(width_, bit(allowed_row())), mask_all_but(width_, allowed_columns())};
}

void LegalityTracker::push(Coordinate next) {
    if (!is_legal(next))
        throw ValidationError("illegal next coordinate (" + std::to_string(next.row) + "," +
                                  std::to_string(next.col) + ")",
                              length_);
    rows_[static_cast<std::size_t>(next.row)] |= bit(next.col);
    last_ = next;
    ++length_;
}

LegalityMask legal_mask(const CoordinateSequence& partial, int width) {
    CoordinateSequence view{width, partial.coords};
    if (view.empty()) throw ValidationError("empty partial sequence", 0);
    if (auto fault = find_sequence_fault(view)) throw ValidationError(fault->message, fault->index);
    const Coordinate last = view.back();
    if (last == Coordinate{width - 1, 0}) throw std::logic_error("sequence already reached its terminal coordinate");

    LegalityMask mask{MaskVector::Constant(width, true), MaskVector::Constant(width, true)};
    if (last.col == 0) {
        mask.row[last.row + 1] = false;
        mask.col[last.row + 1] = false;
        return mask;
    }
    mask.row[last.row] = false;
    for (std::size_t p = 0; p + 1 < view.coords.size(); ++p)
        if (view.coords[p].row == last.col - 1) mask.col[view.coords[p].col] = false;
    return mask;
}

std::vector<LegalityMask> legal_mask_batched(std::span<const CoordinateSequence> partials, int width) {
    using IndexMatrix = Eigen::Array<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using BoolMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const auto batch = static_cast<Eigen::Index>(partials.size());
    Eigen::Index longest = 0;
    for (const auto& s : partials) {
        CoordinateSequence view{width, s.coords};
        if (view.empty()) throw ValidationError("empty partial sequence", 0);
        if (auto fault = find_sequence_fault(view)) throw ValidationError(fault->message, fault->index);
        if (view.back() == Coordinate{width - 1, 0})
            throw std::logic_error("sequence already reached its terminal coordinate");
        longest = std::max(longest, static_cast<Eigen::Index>(s.size()));
    }

    // Padded [batch, length] row/col tables; padding rows are -1 so they never match.
    IndexMatrix rows = IndexMatrix::Constant(batch, longest, -1);
    IndexMatrix cols = IndexMatrix::Constant(batch, longest, -1);
    Eigen::ArrayXi lengths(batch);
    for (Eigen::Index b = 0; b < batch; ++b) {
        const auto& s = partials[static_cast<std::size_t>(b)].coords;
        lengths[b] = static_cast<int>(s.size());
        for (std::size_t t = 0; t < s.size(); ++t) {
            rows(b, static_cast<Eigen::Index>(t)) = s[t].row;
            cols(b, static_cast<Eigen::Index>(t)) = s[t].col;
        }
    }
    Eigen::ArrayXi last_row(batch), last_col(batch);
    for (Eigen::Index b = 0; b < batch; ++b) {
        last_row[b] = rows(b, lengths[b] - 1);
        last_col[b] = cols(b, lengths[b] - 1);
    }
    const Eigen::Array<bool, Eigen::Dynamic, 1> case1 = last_col == 0;
    const Eigen::ArrayXi target_row = case1.select(last_row + 1, last_row);
    const Eigen::ArrayXi lsp_row = last_col - 1;

    // Previously emitted coordinates (phi < k) whose row is the LSP row.
    IndexMatrix step = IndexMatrix::Zero(batch, longest);
    for (Eigen::Index t = 0; t < longest; ++t) step.col(t).setConstant(static_cast<int>(t));
    const BoolMatrix earlier = step < (lengths - 1).replicate(1, longest);
    const BoolMatrix match = (rows == lsp_row.replicate(1, longest)) && earlier && !case1.replicate(1, longest);

    std::vector<LegalityMask> out(partials.size());
    for (Eigen::Index b = 0; b < batch; ++b) {
        auto& m = out[static_cast<std::size_t>(b)];
        m.row = MaskVector::Constant(width, true);
        m.col = MaskVector::Constant(width, true);
        m.row[target_row[b]] = false;
        if (case1[b]) m.col[target_row[b]] = false;
    }
    for (Eigen::Index b = 0; b < batch; ++b)
        for (Eigen::Index t = 0; t < longest; ++t)
            if (match(b, t)) out[static_cast<std::size_t>(b)].col[cols(b, t)] = false;
    return out;
}

SampleStep masked_sample_step(std::span<const double> row_probs, std::span<const double> col_probs,
                              const LegalityMask& mask, double temperature, Rng& rng, DegeneratePolicy policy) {
    if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
    SampleStep step;
    step.coord.row = sample_half(row_probs, mask.row, temperature, rng, policy, step.fallback);
    step.coord.col = sample_half(col_probs, mask.col, temperature, rng, policy, step.fallback);
    return step;
}

template <typename Scalar>
int sample_masked_logits(std::span<const Scalar> logits, std::uint64_t allowed, double temperature, Rng& rng) {
    if (allowed == 0) throw SamplingError("mask leaves no valid entry");
    if (std::has_single_bit(allowed)) return std::countr_zero(allowed);
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < logits.size(); ++i)
        if (allowed & bit(static_cast<int>(i))) top = std::max(top, static_cast<double>(logits[i]));
    std::vector<double> weights(logits.size(), 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        if (!(allowed & bit(static_cast<int>(i)))) continue;
        weights[i] = std::exp((static_cast<double>(logits[i]) - top) / temperature);
        total += weights[i];
    }
    if (!(total > 0.0) || !std::isfinite(total)) {
        spdlog::warn("degenerate policy: non-finite logits on valid entries, sampling uniformly");
        total = 0.0;
        for (std::size_t i = 0; i < logits.size(); ++i) {
            weights[i] = (allowed & bit(static_cast<int>(i))) ? 1.0 : 0.0;
            total += weights[i];
        }
    }
    return pick(weights, total, rng);
}

template int sample_masked_logits<float>(std::span<const float>, std::uint64_t, double, Rng&);
template int sample_masked_logits<double>(std::span<const double>, std::uint64_t, double, Rng&);

CoordinateSequence random_walk(int width, Rng& rng) {
    LegalityTracker tracker(width);
    CoordinateSequence seq{width, {{0, 0}}};
    seq.coords.reserve(max_sequence_length(width));
    while (!tracker.finished()) {
        std::uint64_t cols = tracker.allowed_columns();
        const auto choice = uniform_index(rng, static_cast<std::size_t>(std::popcount(cols)));
        for (std::size_t i = 0; i < choice; ++i) cols &= cols - 1;
        const Coordinate next{tracker.allowed_row(), std::countr_zero(cols)};
        tracker.push(next);
        seq.coords.push_back(next);
    }
    return seq;
}

}  // namespace prefixforge
