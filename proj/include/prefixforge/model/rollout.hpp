#pragma once

#include <string>
#include <vector>

#include "prefixforge/legality.hpp"
#include "prefixforge/model/policy_model.hpp"

namespace prefixforge {

/// Default sampling temperature for generation.
inline constexpr double kDefaultTemperature = 0.8;

/// Masked autoregressive generation of `count` width-bit designs. Every sequence starts at
/// (0,0) and stops at (width-1, 0), so a model trained at max_width can emit any smaller
/// width. Sequences are decoded `chunk` at a time with a key/value cache.
template <typename Scalar>
std::vector<CoordinateSequence> rollout(const PolicyModel<Scalar>& model, int width, double temperature, Rng& rng,
                                        int count, int chunk = 256);

struct UnmaskedRollout {
    CoordinateSequence seq;  ///< tokens up to and including the first illegal one
    bool valid = false;
};

/// Generation with no legality mask: row and column are sampled from the full
/// distributions and a rollout fails at its first rule-violating coordinate.
template <typename Scalar>
std::vector<UnmaskedRollout> rollout_unmasked(const PolicyModel<Scalar>& model, int width, double temperature,
                                              Rng& rng, int count, int chunk = 256);

/// Fraction of unmasked rollouts that reach (width-1, 0) without a violation.
template <typename Scalar>
double legal_rate(const PolicyModel<Scalar>& model, int width, double temperature, Rng& rng, int samples);

extern template std::vector<CoordinateSequence> rollout<float>(const PolicyModel<float>&, int, double, Rng&, int, int);
extern template std::vector<CoordinateSequence> rollout<double>(const PolicyModel<double>&, int, double, Rng&, int,
                                                                int);

}  // namespace prefixforge
