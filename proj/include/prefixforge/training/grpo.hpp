#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "prefixforge/model/policy_model.hpp"
#include "prefixforge/training/adam.hpp"
#include "prefixforge/training/design_db.hpp"
#include "prefixforge/training/pretrain.hpp"
#include "prefixforge/training/reward.hpp"

namespace prefixforge {

inline constexpr double kAdvantageEpsilon = 1e-8;
inline constexpr double kReferenceProbabilityFloor = 1e-8;

/// (r - mean) / (population std + eps). A group of equal rewards maps to all zeros.
std::vector<double> grpo_advantages(std::span<const double> rewards, double epsilon = kAdvantageEpsilon);

/// x - log x - 1 with x = pi / pi_ref.
inline double kl_estimate(double pi, double pi_ref) {
    const double x = pi / pi_ref;
    return x - std::log(x) - 1.0;
}

struct KlTerms {
    std::vector<double> row, col;  ///< one entry per predicted position (2..N)
    bool clamped = false;          ///< some reference probability was raised to the floor

    double total(std::size_t i) const { return row[i] + col[i]; }
};

/// Per-position KL estimates of the taken coordinates, policy against reference.
template <typename Scalar>
KlTerms kl_terms(const PolicyModel<Scalar>& policy, const PolicyModel<Scalar>& reference,
                 const CoordinateSequence& seq);

/// Which per-position score multiplies the advantage.
enum class Surrogate {
    Probability,     ///< s = pi_r + pi_c, as in the written objective
    LogProbability,  ///< s = log pi_r + log pi_c
};

struct GrpoConfig {
    int width = 16;
    int group_size = 64;
    double temperature = 0.8;
    double gamma = 0.99;
    double beta = 0.001;
    double retrieval_ratio = 0.10;
    bool retrieval = true;
    Surrogate surrogate = Surrogate::Probability;
    AdamConfig adam{};
    int rollout_chunk = 256;
};

/// Trainable policy, frozen reference copy, optimizer and design store.
template <typename Scalar>
struct TrainState {
    TrainState(PolicyModel<Scalar> initial, GrpoConfig config, RewardSettings reward, DesignDatabase database,
               std::uint64_t seed);

    PolicyModel<Scalar> policy;
    const PolicyModel<Scalar> reference;
    Adam<Scalar> optimizer;
    GrpoConfig config;
    RewardSettings reward;
    DesignDatabase database;
    Rng rng;
    int iteration = 0;
};

struct IterationReport {
    int iteration = 0;
    std::size_t sampled = 0;
    std::size_t retrieved = 0;
    std::size_t inserted = 0;      ///< new designs added to the database
    double objective = 0.0;        ///< J before the update
    double policy_term = 0.0;      ///< advantage part of J
    double kl_term = 0.0;          ///< beta-weighted KL part of J (subtracted)
    double mean_reward = 0.0;      ///< over the sampled designs
    double batch_best_reward = 0.0;
    double best_reward = 0.0;      ///< best in the database so far
    std::size_t unique_designs = 0;  ///< distinct sampled designs in the database
    double grad_norm = 0.0;
    bool kl_clamped = false;
    bool degenerate = false;       ///< all advantages were zero
    std::vector<CoordinateSequence> samples;
};

/// One iteration: roll out G designs, score them, merge in up to floor(ratio * G) of the
/// best stored designs (looked up before this batch is stored), normalize rewards over the
/// merged group, ascend the objective and log the samples. Throws TrainingDivergence
/// without updating when the objective is not finite.
template <typename Scalar>
IterationReport grpo_step(TrainState<Scalar>& state);

/// Objective value and d(-J)/d(logits) for a merged group; exposed for testing.
template <typename Scalar>
struct GroupObjective {
    double objective = 0.0, policy_term = 0.0, kl_term = 0.0;
    bool kl_clamped = false;
    Matrix<Scalar> d_row, d_col;
};

template <typename Scalar>
GroupObjective<Scalar> group_objective(const PackedBatch& batch, const HeadLogits<Scalar>& policy_logits,
                                       const HeadLogits<Scalar>* reference_logits, std::span<const double> advantages,
                                       const GrpoConfig& config);

struct FinetuneOptions {
    int iterations = 200;
    std::optional<std::filesystem::path> history_csv;
    std::optional<std::filesystem::path> checkpoint;  ///< final policy, or last good one on divergence
    std::function<void(const IterationReport&)> on_iteration;
};

struct FinetuneResult {
    std::vector<IterationReport> history;
    std::vector<DesignRecord> pareto;  ///< (area, delay) frontier of the database
    std::optional<DesignRecord> best;
};

template <typename Scalar>
FinetuneResult finetune(TrainState<Scalar>& state, const FinetuneOptions& options);

/// iteration,best_reward,mean_reward,unique_designs,samples_total,batch_best_reward,objective,kl_term,retrieved
/// (samples_total is cumulative)
void write_history_csv(const std::filesystem::path& path, std::span<const IterationReport> history);

/// Non-dominated records under (area, delay) or (size, depth); one record per point, earliest kept.
enum class ParetoAxes { AreaDelay, SizeDepth };
std::vector<DesignRecord> pareto_front(std::span<const DesignRecord> records, ParetoAxes axes);

extern template struct TrainState<float>;
extern template struct TrainState<double>;

}  // namespace prefixforge
