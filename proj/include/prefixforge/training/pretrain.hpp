#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "prefixforge/model/policy_model.hpp"
#include "prefixforge/training/adam.hpp"

namespace prefixforge {

/// Mean over sequences of -(1/(L-1)) sum_p [log P(row_p) + log P(col_p)], p = 2..L.
/// The first coordinate is conditioning only. Sequences must be valid with L >= 2.
template <typename Scalar>
double pretrain_loss(const PolicyModel<Scalar>& model, std::span<const CoordinateSequence> batch);

/// Same loss; overwrites `grads` with its gradient.
template <typename Scalar>
double pretrain_loss_and_gradient(const PolicyModel<Scalar>& model, std::span<const CoordinateSequence> batch,
                                  ParameterSet<Scalar>& grads);

/// Fraction of predicted positions whose unmasked (row, col) argmax is a legal next coordinate.
template <typename Scalar>
double argmax_legal_fraction(const PolicyModel<Scalar>& model, std::span<const CoordinateSequence> sequences);

struct PretrainConfig {
    int epochs = 5;
    int batch_size = 32;
    AdamConfig adam{};
    double holdout_fraction = 0.05;
    std::uint64_t seed = 0;
    int legal_rate_samples = 1000;  ///< unmasked rollouts after each epoch; 0 skips
    double legal_rate_temperature = 1.0;
    std::optional<std::filesystem::path> checkpoint_dir;  ///< epoch_<k>.ckpt per epoch
    bool record_step_losses = false;
};

struct EpochReport {
    int epoch = 0;
    double train_loss = 0.0;    ///< mean over the epoch's batches
    double heldout_loss = 0.0;  ///< NaN without a held-out split
    double legal_rate = 0.0;    ///< NaN when skipped
    double argmax_legal = 0.0;  ///< on the held-out split
};

struct PretrainReport {
    std::vector<EpochReport> epochs;
    std::vector<double> step_losses;
    long steps = 0;
    std::size_t train_size = 0;
    std::size_t heldout_size = 0;
};

class TrainingDivergence : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Adam pre-training on a corpus of equal-width sequences. The held-out split is taken
/// from the end of a seeded shuffle. Throws TrainingDivergence on a non-finite loss.
template <typename Scalar>
PretrainReport pretrain(PolicyModel<Scalar>& model, std::span<const CoordinateSequence> corpus,
                        const PretrainConfig& config);

}  // namespace prefixforge
