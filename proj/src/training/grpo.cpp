#include "prefixforge/training/grpo.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <numeric>

#include <spdlog/spdlog.h>

#include "prefixforge/model/checkpoint.hpp"
#include "prefixforge/model/rollout.hpp"

namespace prefixforge {

std::vector<double> grpo_advantages(std::span<const double> rewards, double epsilon) {
    if (rewards.size() < 2) throw std::invalid_argument("advantage normalization needs a group of at least 2");
    const double n = static_cast<double>(rewards.size());
    const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
    double var = 0.0;
    for (double r : rewards) var += (r - mean) * (r - mean);
    const double sigma = std::sqrt(var / n);
    std::vector<double> out(rewards.size(), 0.0);
    if (sigma == 0.0) return out;
    for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - mean) / (sigma + epsilon);
    return out;
}

template <typename Scalar>
KlTerms kl_terms(const PolicyModel<Scalar>& policy, const PolicyModel<Scalar>& reference,
                 const CoordinateSequence& seq) {
    require_valid_sequence(seq, false);
    const auto pol = policy.forward(seq.coords);
    const auto p_row = softmax_columns(pol.row);
    const auto p_col = softmax_columns(pol.col);
    const auto ref = reference.forward(seq.coords);
    const auto r_row = softmax_columns(ref.row);
    const auto r_col = softmax_columns(ref.col);
    KlTerms out;
    for (std::size_t p = 1; p < seq.coords.size(); ++p) {
        const auto t = static_cast<Eigen::Index>(p - 1);
        const auto& y = seq.coords[p];
        double ref_r = r_row(y.row, t), ref_c = r_col(y.col, t);
        if (ref_r < kReferenceProbabilityFloor || ref_c < kReferenceProbabilityFloor) out.clamped = true;
        ref_r = std::max(ref_r, kReferenceProbabilityFloor);
        ref_c = std::max(ref_c, kReferenceProbabilityFloor);
        out.row.push_back(kl_estimate(p_row(y.row, t), ref_r));
        out.col.push_back(kl_estimate(p_col(y.col, t), ref_c));
    }
    return out;
}

template <typename Scalar>
GroupObjective<Scalar> group_objective(const PackedBatch& batch, const HeadLogits<Scalar>& policy_logits,
                                       const HeadLogits<Scalar>* reference_logits, std::span<const double> advantages,
                                       const GrpoConfig& config) {
    if (advantages.size() != batch.segments.size()) throw std::invalid_argument("one advantage per sequence");
    const bool use_kl = config.beta != 0.0 && reference_logits != nullptr;
    const bool log_form = config.surrogate == Surrogate::LogProbability;
    const auto p_row = softmax_columns(policy_logits.row);
    const auto p_col = softmax_columns(policy_logits.col);
    Matrix<Scalar> r_row, r_col;
    if (use_kl) {
        r_row = softmax_columns(reference_logits->row);
        r_col = softmax_columns(reference_logits->col);
    }

    GroupObjective<Scalar> out;
    out.d_row = Matrix<Scalar>::Zero(p_row.rows(), p_row.cols());
    out.d_col = Matrix<Scalar>::Zero(p_col.rows(), p_col.cols());
    const double group = static_cast<double>(batch.segments.size());

    // Per taken index y with probability pi: d(-J)/dz = -c (e_y - softmax), where c is
    // dJ/dpi * pi (probability form) or the coefficient of d log pi (log form).
    auto accumulate = [&](Matrix<Scalar>& d, const Matrix<Scalar>& probs, Eigen::Index t, int y, double c) {
        d.col(t) += static_cast<Scalar>(c) * probs.col(t);
        d(y, t) -= static_cast<Scalar>(c);
    };

    for (std::size_t i = 0; i < batch.segments.size(); ++i) {
        const auto& seg = batch.segments[i];
        const double w = 1.0 / (group * static_cast<double>(seg.length));
        const double adv = advantages[i];
        double discount = config.gamma;  // gamma^p, p = 1 for the given first coordinate
        for (Eigen::Index p = 2; p <= seg.length; ++p) {
            discount *= config.gamma;
            const Eigen::Index t = seg.offset + p - 2;
            const auto& y = batch.tokens[static_cast<std::size_t>(seg.offset + p - 1)];
            const double pr = p_row(y.row, t), pc = p_col(y.col, t);
            const double score = log_form ? std::log(pr) + std::log(pc) : pr + pc;
            out.policy_term += w * discount * score * adv;
            double cr = log_form ? discount * adv : discount * adv * pr;
            double cc = log_form ? discount * adv : discount * adv * pc;
            if (use_kl) {
                double ref_r = r_row(y.row, t), ref_c = r_col(y.col, t);
                if (ref_r < kReferenceProbabilityFloor || ref_c < kReferenceProbabilityFloor) out.kl_clamped = true;
                ref_r = std::max(ref_r, kReferenceProbabilityFloor);
                ref_c = std::max(ref_c, kReferenceProbabilityFloor);
                out.kl_term += w * config.beta * (kl_estimate(pr, ref_r) + kl_estimate(pc, ref_c));
                // d KL / d z = (pi / pi_ref - 1)(e_y - softmax) in both forms
                cr -= config.beta * (pr / ref_r - 1.0);
                cc -= config.beta * (pc / ref_c - 1.0);
            }
            accumulate(out.d_row, p_row, t, y.row, w * cr);
            accumulate(out.d_col, p_col, t, y.col, w * cc);
        }
    }
    out.objective = out.policy_term - out.kl_term;
    return out;
}

template <typename Scalar>
TrainState<Scalar>::TrainState(PolicyModel<Scalar> initial, GrpoConfig cfg, RewardSettings reward_settings,
                               DesignDatabase db, std::uint64_t seed)
    : policy(initial),
      reference(std::move(initial)),
      optimizer(policy.config(), cfg.adam),
      config(cfg),
      reward(std::move(reward_settings)),
      database(std::move(db)),
      rng(seed) {
    if (config.group_size < 2) throw std::invalid_argument("group size must be at least 2");
    if (config.width < 2 || config.width > policy.config().max_width)
        throw std::invalid_argument("fine-tune width outside the model's range");
}

template <typename Scalar>
IterationReport grpo_step(TrainState<Scalar>& state) {
    const auto& cfg = state.config;
    IterationReport report;
    report.iteration = state.iteration + 1;

    report.samples = rollout(state.policy, cfg.width, cfg.temperature, state.rng, cfg.group_size, cfg.rollout_chunk);
    std::vector<DesignRecord> group;
    group.reserve(report.samples.size());
    double reward_sum = 0.0;
    report.batch_best_reward = -std::numeric_limits<double>::infinity();
    for (const auto& seq : report.samples) {
        DesignRecord r;
        r.sequence = seq;
        r.iteration = report.iteration;
        r.source = DesignSource::Sampled;
        compute_reward(r, state.reward);
        reward_sum += r.reward;
        report.batch_best_reward = std::max(report.batch_best_reward, r.reward);
        group.push_back(std::move(r));
    }
    report.sampled = group.size();
    report.mean_reward = reward_sum / static_cast<double>(group.size());

    if (cfg.retrieval) {
        const auto cap = static_cast<std::size_t>(std::floor(cfg.retrieval_ratio * cfg.group_size));
        for (auto r : state.database.top_k_by_adp(cap)) {
            r.source = DesignSource::Retrieved;
            group.push_back(std::move(r));
            ++report.retrieved;
        }
    }

    std::vector<double> rewards;
    std::vector<CoordinateSequence> seqs;
    for (const auto& r : group) {
        rewards.push_back(r.reward);
        seqs.push_back(r.sequence);
    }
    const auto advantages = grpo_advantages(rewards);
    report.degenerate = std::all_of(advantages.begin(), advantages.end(), [](double a) { return a == 0.0; });

    const auto batch = PackedBatch::pack(seqs);
    ForwardTape<Scalar> tape;
    const auto logits = state.policy.forward(batch, &tape);
    std::optional<HeadLogits<Scalar>> ref_logits;
    if (cfg.beta != 0.0) ref_logits = state.reference.forward(batch);
    auto obj = group_objective<Scalar>(batch, logits, ref_logits ? &*ref_logits : nullptr, advantages, cfg);
    report.objective = obj.objective;
    report.policy_term = obj.policy_term;
    report.kl_term = obj.kl_term;
    report.kl_clamped = obj.kl_clamped;
    if (!std::isfinite(obj.objective))
        throw TrainingDivergence("non-finite objective at fine-tune iteration " + std::to_string(report.iteration));
    if (obj.kl_clamped) spdlog::warn("iteration {}: reference probability clamped to {}", report.iteration,
                                     kReferenceProbabilityFloor);

    auto grads = ParameterSet<Scalar>::zeros(state.policy.config());
    state.policy.backward(tape, obj.d_row, obj.d_col, grads);
    report.grad_norm = state.optimizer.step(state.policy.parameters(), grads);

    for (std::size_t i = 0; i < report.sampled; ++i) report.inserted += state.database.insert(group[i]) ? 1 : 0;
    report.unique_designs = state.database.count(DesignSource::Sampled);
    report.best_reward = state.database.best()->reward;
    state.iteration = report.iteration;
    return report;
}

template <typename Scalar>
FinetuneResult finetune(TrainState<Scalar>& state, const FinetuneOptions& options) {
    FinetuneResult result;
    for (int i = 0; i < options.iterations; ++i) {
        try {
            result.history.push_back(grpo_step(state));
        } catch (const TrainingDivergence&) {
            if (options.checkpoint)
                save_checkpoint(*options.checkpoint, state.policy,
                                {{"stage", "finetune"}, {"iteration", state.iteration}, {"diverged", true}});
            if (options.history_csv) write_history_csv(*options.history_csv, result.history);
            throw;
        }
        const auto& r = result.history.back();
        spdlog::debug("iteration {}: best {} mean {:.2f} unique {}", r.iteration, r.best_reward, r.mean_reward,
                      r.unique_designs);
        if (options.on_iteration) options.on_iteration(r);
    }
    if (options.history_csv) write_history_csv(*options.history_csv, result.history);
    if (options.checkpoint)
        save_checkpoint(*options.checkpoint, state.policy, {{"stage", "finetune"}, {"iteration", state.iteration}});
    result.pareto = pareto_front(state.database.records(), ParetoAxes::AreaDelay);
    result.best = state.database.best();
    return result;
}

void write_history_csv(const std::filesystem::path& path, std::span<const IterationReport> history) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string());
    out << "iteration,best_reward,mean_reward,unique_designs,samples_total,batch_best_reward,objective,kl_term,"
           "retrieved\n";
    out.precision(10);
    std::size_t samples = 0;
    for (const auto& r : history)
        out << r.iteration << ',' << r.best_reward << ',' << r.mean_reward << ',' << r.unique_designs << ','
            << (samples += r.sampled) << ',' << r.batch_best_reward << ',' << r.objective << ',' << r.kl_term << ',' << r.retrieved << '\n';
}

std::vector<DesignRecord> pareto_front(std::span<const DesignRecord> records, ParetoAxes axes) {
    auto point = [axes](const DesignRecord& r) {
        return axes == ParetoAxes::AreaDelay ? std::pair{r.area, r.delay}
                                             : std::pair{static_cast<double>(r.size), static_cast<double>(r.depth)};
    };
    std::vector<std::size_t> order(records.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return point(records[a]) < point(records[b]); });
    std::vector<DesignRecord> front;
    double best_y = std::numeric_limits<double>::infinity();
    for (std::size_t i : order) {
        const auto [x, y] = point(records[i]);
        if (y < best_y) {
            front.push_back(records[i]);
            best_y = y;
        }
    }
    return front;
}

template KlTerms kl_terms<float>(const PolicyModel<float>&, const PolicyModel<float>&, const CoordinateSequence&);
template KlTerms kl_terms<double>(const PolicyModel<double>&, const PolicyModel<double>&, const CoordinateSequence&);
template GroupObjective<float> group_objective<float>(const PackedBatch&, const HeadLogits<float>&,
                                                      const HeadLogits<float>*, std::span<const double>,
                                                      const GrpoConfig&);
template GroupObjective<double> group_objective<double>(const PackedBatch&, const HeadLogits<double>&,
                                                        const HeadLogits<double>*, std::span<const double>,
                                                        const GrpoConfig&);
template struct TrainState<float>;
template struct TrainState<double>;
template IterationReport grpo_step<float>(TrainState<float>&);
template IterationReport grpo_step<double>(TrainState<double>&);
template FinetuneResult finetune<float>(TrainState<float>&, const FinetuneOptions&);
template FinetuneResult finetune<double>(TrainState<double>&, const FinetuneOptions&);

}  // namespace prefixforge
