#include "prefixforge/model/rollout.hpp"

#include <algorithm>
#include <span>

namespace prefixforge {

namespace {

void check_width(const ModelConfig& cfg, int width) {
    if (width < 2 || width > cfg.max_width)
        throw std::invalid_argument("rollout width " + std::to_string(width) + " outside [2, " +
                                    std::to_string(cfg.max_width) + "]");
}

template <typename Scalar>
std::span<const Scalar> column(const Matrix<Scalar>& m, Eigen::Index c) {
    return {m.data() + c * m.rows(), static_cast<std::size_t>(m.rows())};
}

std::uint64_t all_indices(int count) { return count >= 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << count) - 1; }

}  // namespace

template <typename Scalar>
std::vector<CoordinateSequence> rollout(const PolicyModel<Scalar>& model, int width, double temperature, Rng& rng,
                                        int count, int chunk) {
    check_width(model.config(), width);
    if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
    std::vector<CoordinateSequence> out;
    out.reserve(static_cast<std::size_t>(std::max(count, 0)));
    const std::size_t cap = max_sequence_length(width);

    for (int start = 0; start < count; start += chunk) {
        const int n = std::min(chunk, count - start);
        auto state = model.start_decoding(n);
        std::vector<LegalityTracker> trackers(static_cast<std::size_t>(n), LegalityTracker(width));
        std::vector<CoordinateSequence> seqs(static_cast<std::size_t>(n), CoordinateSequence{width, {{0, 0}}});
        std::vector<int> active(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) active[static_cast<std::size_t>(i)] = i;
        std::vector<Coordinate> feed(active.size(), Coordinate{0, 0});

        while (!active.empty()) {
            const auto logits = model.decode(state, active, feed);
            std::vector<int> still;
            std::vector<Coordinate> next_feed;
            for (std::size_t i = 0; i < active.size(); ++i) {
                const auto slot = static_cast<std::size_t>(active[i]);
                auto& tracker = trackers[slot];
                const auto col_index = static_cast<Eigen::Index>(i);
                const int row = sample_masked_logits<Scalar>(column(logits.row, col_index),
                                                             std::uint64_t{1} << tracker.allowed_row(), temperature, rng);
                const int col = sample_masked_logits<Scalar>(column(logits.col, col_index), tracker.allowed_columns(),
                                                             temperature, rng);
                tracker.push({row, col});
                seqs[slot].coords.push_back({row, col});
                if (seqs[slot].coords.size() > cap) throw std::logic_error("rollout exceeded n(n+1)/2 coordinates");
                if (!tracker.finished()) {
                    still.push_back(active[i]);
                    next_feed.push_back({row, col});
                }
            }
            active = std::move(still);
            feed = std::move(next_feed);
        }
        for (auto& s : seqs) out.push_back(std::move(s));
    }
    return out;
}

template <typename Scalar>
std::vector<UnmaskedRollout> rollout_unmasked(const PolicyModel<Scalar>& model, int width, double temperature,
                                              Rng& rng, int count, int chunk) {
    check_width(model.config(), width);
    if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
    const std::uint64_t everything = all_indices(model.config().max_width);
    std::vector<UnmaskedRollout> out;
    out.reserve(static_cast<std::size_t>(std::max(count, 0)));

    for (int start = 0; start < count; start += chunk) {
        const int n = std::min(chunk, count - start);
        auto state = model.start_decoding(n);
        std::vector<LegalityTracker> trackers(static_cast<std::size_t>(n), LegalityTracker(width));
        std::vector<UnmaskedRollout> results(static_cast<std::size_t>(n), UnmaskedRollout{{width, {{0, 0}}}, false});
        std::vector<int> active(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) active[static_cast<std::size_t>(i)] = i;
        std::vector<Coordinate> feed(active.size(), Coordinate{0, 0});

        while (!active.empty()) {
            const auto logits = model.decode(state, active, feed);
            std::vector<int> still;
            std::vector<Coordinate> next_feed;
            for (std::size_t i = 0; i < active.size(); ++i) {
                const auto slot = static_cast<std::size_t>(active[i]);
                auto& tracker = trackers[slot];
                const auto col_index = static_cast<Eigen::Index>(i);
                const Coordinate next{
                    sample_masked_logits<Scalar>(column(logits.row, col_index), everything, temperature, rng),
                    sample_masked_logits<Scalar>(column(logits.col, col_index), everything, temperature, rng)};
                results[slot].seq.coords.push_back(next);
                if (!tracker.is_legal(next)) continue;  // first violation ends the rollout
                tracker.push(next);
                if (tracker.finished()) {
                    results[slot].valid = true;
                } else {
                    still.push_back(active[i]);
                    next_feed.push_back(next);
                }
            }
            active = std::move(still);
            feed = std::move(next_feed);
        }
        for (auto& r : results) out.push_back(std::move(r));
    }
    return out;
}

template <typename Scalar>
double legal_rate(const PolicyModel<Scalar>& model, int width, double temperature, Rng& rng, int samples) {
    if (samples <= 0) throw std::invalid_argument("legal_rate needs a positive sample count");
    const auto results = rollout_unmasked(model, width, temperature, rng, samples);
    const auto ok = std::count_if(results.begin(), results.end(), [](const UnmaskedRollout& r) { return r.valid; });
    return static_cast<double>(ok) / static_cast<double>(samples);
}

template std::vector<CoordinateSequence> rollout<float>(const PolicyModel<float>&, int, double, Rng&, int, int);
template std::vector<CoordinateSequence> rollout<double>(const PolicyModel<double>&, int, double, Rng&, int, int);
template std::vector<UnmaskedRollout> rollout_unmasked<float>(const PolicyModel<float>&, int, double, Rng&, int, int);
template std::vector<UnmaskedRollout> rollout_unmasked<double>(const PolicyModel<double>&, int, double, Rng&, int,
                                                               int);
template double legal_rate<float>(const PolicyModel<float>&, int, double, Rng&, int);
template double legal_rate<double>(const PolicyModel<double>&, int, double, Rng&, int);

}  // namespace prefixforge
