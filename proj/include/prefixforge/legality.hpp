#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

#include "prefixforge/prefix_graph.hpp"

namespace prefixforge {

/// Deterministic 64-bit engine used for every sampling path (corpus, rollouts, init).
using Rng = std::mt19937_64;

/// Uniform double in [0, 1) built from the top 53 bits; identical across standard libraries.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Uniform index in [0, count).
inline std::size_t uniform_index(Rng& rng, std::size_t count) {
    const auto i = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(count));
    return i < count ? i : count - 1;
}

using MaskVector = Eigen::Array<bool, Eigen::Dynamic, 1>;

/// Next-coordinate filter. true marks an INVALID index.
struct LegalityMask {
    MaskVector row;
    MaskVector col;

    friend bool operator==(const LegalityMask& a, const LegalityMask& b) {
        return a.row.size() == b.row.size() && a.col.size() == b.col.size() && (a.row == b.row).all() &&
               (a.col == b.col).all();
    }
};

/// Incremental legality state for one growing sequence. Equivalent to calling
/// legal_mask on the whole prefix after every push, in O(1) per query.
class LegalityTracker {
public:
    /// Starts from the fixed first coordinate (0,0).
    explicit LegalityTracker(int width);

    int width() const { return width_; }
    const Coordinate& last() const { return last_; }
    std::size_t length() const { return length_; }
    /// True once the EOS coordinate (width-1, 0) has been pushed.
    bool finished() const { return last_.row == width_ - 1 && last_.col == 0; }

    /// Valid next row (unique in both cases).
    int allowed_row() const;
    /// Bit i set iff column i is a valid next column.
    std::uint64_t allowed_columns() const;
    bool is_legal(Coordinate next) const;
    LegalityMask mask() const;

    /// Throws ValidationError if `next` is not legal.
    void push(Coordinate next);

private:
    int width_;
    Coordinate last_{0, 0};
    std::size_t length_ = 1;
    std::vector<std::uint64_t> rows_;
};

/// Mask for the coordinate following `partial`, per the two scan cases:
///  last col == 0: only (r+1, r+1);  otherwise row r, columns present in row (last col - 1).
/// Throws ValidationError if `partial` is not a prefix of a valid n-bit sequence, and
/// std::logic_error if it already ends at the EOS coordinate.
LegalityMask legal_mask(const CoordinateSequence& partial, int width);

/// Array-at-a-time variant over a ragged batch; elementwise equal to legal_mask.
std::vector<LegalityMask> legal_mask_batched(std::span<const CoordinateSequence> partials, int width);

class SamplingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class DegeneratePolicy {
    Throw,           ///< raise SamplingError
    UniformFallback  ///< sample uniformly over the valid entries and log a warning
};

struct SampleStep {
    Coordinate coord;
    bool fallback = false;  ///< set when the degenerate-policy fallback was used
};

/// Samples the row, then the column, from (p^(1/T) * (1 - mask)) renormalized.
SampleStep masked_sample_step(std::span<const double> row_probs, std::span<const double> col_probs,
                              const LegalityMask& mask, double temperature, Rng& rng,
                              DegeneratePolicy policy = DegeneratePolicy::UniformFallback);

/// Index sampled from softmax(logits / T) restricted to `allowed` (bit i = index i allowed).
/// Same distribution as masked_sample_step applied to the softmax probabilities.
template <typename Scalar>
int sample_masked_logits(std::span<const Scalar> logits, std::uint64_t allowed, double temperature, Rng& rng);

/// Uniform random walk over legal next coordinates from (0,0) to (width-1, 0).
CoordinateSequence random_walk(int width, Rng& rng);

}  // namespace prefixforge
