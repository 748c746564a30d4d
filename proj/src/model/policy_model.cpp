#include "prefixforge/model/policy_model.hpp"

#include <cmath>
#include <numbers>

namespace prefixforge {

namespace {

constexpr double kNormEpsilon = 1e-6;

template <typename S>
using RowVector = Eigen::Matrix<S, 1, Eigen::Dynamic>;

template <typename S>
Matrix<S> rms_forward(const Matrix<S>& x, const Matrix<S>& gain, RmsNormCache<S>* cache) {
    const auto h = static_cast<S>(x.rows());
    const Vector<S> inv =
        ((x.array().square().colwise().sum() / h) + static_cast<S>(kNormEpsilon)).rsqrt().matrix().transpose();
    Matrix<S> normalized = x * inv.asDiagonal();
    Matrix<S> y = gain.col(0).asDiagonal() * normalized;
    if (cache) {
        cache->normalized = std::move(normalized);
        cache->inv_rms = inv;
    }
    return y;
}

template <typename S>
Matrix<S> rms_backward(const Matrix<S>& dy, const Matrix<S>& gain, const RmsNormCache<S>& c, Matrix<S>& d_gain) {
    const auto h = static_cast<S>(dy.rows());
    d_gain.col(0) += (dy.array() * c.normalized.array()).rowwise().sum().matrix();
    const Matrix<S> d_norm = gain.col(0).asDiagonal() * dy;
    const RowVector<S> proj = (d_norm.array() * c.normalized.array()).colwise().sum() / h;
    return (d_norm - c.normalized * proj.asDiagonal()) * c.inv_rms.asDiagonal();
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;

template <typename S>
Matrix<S> gelu(const Matrix<S>& u) {
    const auto c = static_cast<S>(kGeluC);
    const auto a = static_cast<S>(kGeluA);
    return (static_cast<S>(0.5) * u.array() * (static_cast<S>(1) + (c * (u.array() + a * u.array().cube())).tanh()))
        .matrix();
}

template <typename S>
Matrix<S> gelu_grad(const Matrix<S>& u) {
    const auto c = static_cast<S>(kGeluC);
    const auto a = static_cast<S>(kGeluA);
    const auto t = (c * (u.array() + a * u.array().cube())).tanh().eval();
    return (static_cast<S>(0.5) * (static_cast<S>(1) + t) +
            static_cast<S>(0.5) * u.array() * (static_cast<S>(1) - t.square()) * c *
                (static_cast<S>(1) + static_cast<S>(3) * a * u.array().square()))
        .matrix();
}

// Column-wise causal softmax in place: column i keeps rows 0..i.
template <typename S>
void causal_softmax_columns(Matrix<S>& scores) {
    const Eigen::Index n = scores.cols();
    for (Eigen::Index i = 0; i < n; ++i) {
        auto live = scores.col(i).head(i + 1);
        const S top = live.maxCoeff();
        live = (live.array() - top).exp().matrix();
        live /= live.sum();
        scores.col(i).tail(n - i - 1).setZero();
    }
}

template <typename S>
Matrix<S> attention_forward(const Matrix<S>& q, const Matrix<S>& k, const Matrix<S>& v,
                            const std::vector<Segment>& segments, int heads, std::vector<Matrix<S>>* probs) {
    const Eigen::Index hd = q.rows() / heads;
    const auto scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(hd)));
    Matrix<S> mix(q.rows(), q.cols());
    for (const auto& seg : segments) {
        for (int head = 0; head < heads; ++head) {
            const Eigen::Index r0 = head * hd;
            Matrix<S> pt = (k.block(r0, seg.offset, hd, seg.length).transpose() *
                            q.block(r0, seg.offset, hd, seg.length)) *
                           scale;
            causal_softmax_columns(pt);
            mix.block(r0, seg.offset, hd, seg.length).noalias() = v.block(r0, seg.offset, hd, seg.length) * pt;
            if (probs) probs->push_back(std::move(pt));
        }
    }
    return mix;
}

template <typename S>
void attention_backward(const BlockCache<S>& c, const Matrix<S>& d_mix, const std::vector<Segment>& segments,
                        int heads, Matrix<S>& dq, Matrix<S>& dk, Matrix<S>& dv) {
    const Eigen::Index hd = c.q.rows() / heads;
    const auto scale = static_cast<S>(1.0 / std::sqrt(static_cast<double>(hd)));
    dq.setZero(c.q.rows(), c.q.cols());
    dk.setZero(c.q.rows(), c.q.cols());
    dv.setZero(c.q.rows(), c.q.cols());
    std::size_t idx = 0;
    for (const auto& seg : segments) {
        for (int head = 0; head < heads; ++head, ++idx) {
            const Eigen::Index r0 = head * hd;
            const Matrix<S>& pt = c.probs[idx];
            const auto dmix_h = d_mix.block(r0, seg.offset, hd, seg.length);
            Matrix<S> d_pt = c.v.block(r0, seg.offset, hd, seg.length).transpose() * dmix_h;
            dv.block(r0, seg.offset, hd, seg.length).noalias() = dmix_h * pt.transpose();
            // softmax backward per query column
            const RowVector<S> dots = (pt.array() * d_pt.array()).colwise().sum();
            Matrix<S> d_scores = (pt.array() * (d_pt.array().rowwise() - dots.array())).matrix();
            d_scores *= scale;
            dq.block(r0, seg.offset, hd, seg.length).noalias() = c.k.block(r0, seg.offset, hd, seg.length) * d_scores;
            dk.block(r0, seg.offset, hd, seg.length).noalias() =
                c.q.block(r0, seg.offset, hd, seg.length) * d_scores.transpose();
        }
    }
}

template <typename S>
Matrix<S> block_forward(const BlockParameters<S>& p, const Matrix<S>& x, const std::vector<Segment>& segments,
                        int heads, BlockCache<S>* cache) {
    RmsNormCache<S> norm1;
    Matrix<S> attn_in = rms_forward(x, p.attn_norm, cache ? &norm1 : nullptr);
    Matrix<S> q = p.wq * attn_in;
    Matrix<S> k = p.wk * attn_in;
    Matrix<S> v = p.wv * attn_in;
    std::vector<Matrix<S>> probs;
    Matrix<S> mix = attention_forward(q, k, v, segments, heads, cache ? &probs : nullptr);
    Matrix<S> x1 = x;
    x1.noalias() += p.wo * mix;
    RmsNormCache<S> norm2;
    Matrix<S> ffn_in = rms_forward(x1, p.ffn_norm, cache ? &norm2 : nullptr);
    Matrix<S> up = p.w_up * ffn_in;
    Matrix<S> act = gelu(up);
    x1.noalias() += p.w_down * act;
    if (cache) {
        cache->norm1 = std::move(norm1);
        cache->attn_in = std::move(attn_in);
        cache->q = std::move(q);
        cache->k = std::move(k);
        cache->v = std::move(v);
        cache->probs = std::move(probs);
        cache->attn_mix = std::move(mix);
        cache->norm2 = std::move(norm2);
        cache->ffn_in = std::move(ffn_in);
        cache->up = std::move(up);
        cache->act = std::move(act);
    }
    return x1;
}

template <typename S>
Matrix<S> block_backward(const BlockParameters<S>& p, const BlockCache<S>& c, const Matrix<S>& d_out,
                         const std::vector<Segment>& segments, int heads, BlockParameters<S>& g) {
    g.w_down.noalias() += d_out * c.act.transpose();
    Matrix<S> d_up = p.w_down.transpose() * d_out;
    d_up.array() *= gelu_grad(c.up).array();
    g.w_up.noalias() += d_up * c.ffn_in.transpose();
    const Matrix<S> d_ffn_in = p.w_up.transpose() * d_up;
    Matrix<S> d_x1 = d_out + rms_backward(d_ffn_in, p.ffn_norm, c.norm2, g.ffn_norm);

    g.wo.noalias() += d_x1 * c.attn_mix.transpose();
    const Matrix<S> d_mix = p.wo.transpose() * d_x1;
    Matrix<S> dq, dk, dv;
    attention_backward(c, d_mix, segments, heads, dq, dk, dv);
    g.wq.noalias() += dq * c.attn_in.transpose();
    g.wk.noalias() += dk * c.attn_in.transpose();
    g.wv.noalias() += dv * c.attn_in.transpose();
    Matrix<S> d_attn_in = p.wq.transpose() * dq;
    d_attn_in.noalias() += p.wk.transpose() * dk;
    d_attn_in.noalias() += p.wv.transpose() * dv;
    d_x1 += rms_backward(d_attn_in, p.attn_norm, c.norm1, g.attn_norm);
    return d_x1;
}

template <typename S>
void rotate_pairs(Eigen::Ref<Vector<S>> x, const Matrix<S>& cos_table, const Matrix<S>& sin_table, int position,
                  bool inverse) {
    const Eigen::Index pairs = x.size() / 2;
    for (Eigen::Index i = 0; i < pairs; ++i) {
        const S c = cos_table(i, position);
        const S s = inverse ? -sin_table(i, position) : sin_table(i, position);
        const S x0 = x[2 * i];
        const S x1 = x[2 * i + 1];
        x[2 * i] = x0 * c - x1 * s;
        x[2 * i + 1] = x0 * s + x1 * c;
    }
}

}  // namespace

PackedBatch PackedBatch::pack(std::span<const CoordinateSequence> sequences) {
    PackedBatch batch;
    std::size_t total = 0;
    for (const auto& s : sequences) total += s.size();
    batch.tokens.reserve(total);
    for (const auto& s : sequences) {
        batch.segments.push_back({static_cast<Eigen::Index>(batch.tokens.size()), static_cast<Eigen::Index>(s.size())});
        batch.tokens.insert(batch.tokens.end(), s.coords.begin(), s.coords.end());
    }
    return batch;
}

PackedBatch PackedBatch::single(std::span<const Coordinate> coords) {
    PackedBatch batch;
    batch.tokens.assign(coords.begin(), coords.end());
    batch.segments.push_back({0, static_cast<Eigen::Index>(coords.size())});
    return batch;
}

template <typename Scalar>
void apply_rotary(Eigen::Ref<Vector<Scalar>> x, int position, double base) {
    const Eigen::Index d = x.size();
    for (Eigen::Index i = 0; i < d / 2; ++i) {
        const double angle = position * std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(d));
        const auto c = static_cast<Scalar>(std::cos(angle));
        const auto s = static_cast<Scalar>(std::sin(angle));
        const Scalar x0 = x[2 * i];
        const Scalar x1 = x[2 * i + 1];
        x[2 * i] = x0 * c - x1 * s;
        x[2 * i + 1] = x0 * s + x1 * c;
    }
}

template <typename Scalar>
Matrix<Scalar> softmax_columns(const Matrix<Scalar>& logits) {
    Matrix<Scalar> out = (logits.rowwise() - logits.colwise().maxCoeff()).array().exp().matrix();
    out.array().rowwise() /= out.colwise().sum().array();
    return out;
}

template <typename Scalar>
PolicyModel<Scalar>::PolicyModel(const ModelConfig& config)
    : PolicyModel(config, ParameterSet<Scalar>::zeros(config)) {}

template <typename Scalar>
PolicyModel<Scalar>::PolicyModel(const ModelConfig& config, Rng& rng) : PolicyModel(config) {
    initialize_parameters(params_, config_, rng);
}

template <typename Scalar>
PolicyModel<Scalar>::PolicyModel(const ModelConfig& config, ParameterSet<Scalar> params)
    : config_(config), params_(std::move(params)) {
    config_.check();
    const int half = config_.embed_dim / 2;
    rope_cos_.resize(half, config_.max_width);
    rope_sin_.resize(half, config_.max_width);
    for (int m = 0; m < config_.max_width; ++m) {
        for (int i = 0; i < half; ++i) {
            const double angle =
                m * std::pow(config_.rope_base, -2.0 * i / static_cast<double>(config_.embed_dim));
            rope_cos_(i, m) = static_cast<Scalar>(std::cos(angle));
            rope_sin_(i, m) = static_cast<Scalar>(std::sin(angle));
        }
    }
}

template <typename Scalar>
int PolicyModel<Scalar>::block_count() const {
    return config_.shared_layers + config_.row_layers + config_.col_layers;
}

template <typename Scalar>
void PolicyModel<Scalar>::check_tokens(std::span<const Coordinate> coords) const {
    for (const auto& c : coords)
        if (c.row < 0 || c.col < 0 || c.row >= config_.max_width || c.col >= config_.max_width)
            throw std::out_of_range("coordinate (" + std::to_string(c.row) + "," + std::to_string(c.col) +
                                    ") outside the model vocabulary of " + std::to_string(config_.max_width));
}

template <typename Scalar>
Matrix<Scalar> PolicyModel<Scalar>::embed(std::span<const Coordinate> coords) const {
    check_tokens(coords);
    const int d = config_.embed_dim;
    Matrix<Scalar> tokens(2 * d, static_cast<Eigen::Index>(coords.size()));
    for (std::size_t t = 0; t < coords.size(); ++t) {
        const auto col = static_cast<Eigen::Index>(t);
        tokens.col(col).head(d) = params_.row_embedding.col(coords[t].row);
        tokens.col(col).tail(d) = params_.col_embedding.col(coords[t].col);
        if (config_.use_rope) {
            rotate_pairs<Scalar>(tokens.col(col).head(d), rope_cos_, rope_sin_, coords[t].row, false);
            rotate_pairs<Scalar>(tokens.col(col).tail(d), rope_cos_, rope_sin_, coords[t].col, false);
        }
    }
    return tokens;
}

template <typename Scalar>
HeadLogits<Scalar> PolicyModel<Scalar>::forward(std::span<const Coordinate> coords) const {
    return forward(PackedBatch::single(coords));
}

template <typename Scalar>
HeadLogits<Scalar> PolicyModel<Scalar>::forward(const PackedBatch& batch, ForwardTape<Scalar>* tape) const {
    for (const auto& seg : batch.segments) {
        if (seg.length < 1) throw std::out_of_range("empty sequence in batch");
        if (static_cast<std::size_t>(seg.length) > config_.max_sequence_length())
            throw std::out_of_range("sequence of length " + std::to_string(seg.length) + " exceeds the maximum " +
                                    std::to_string(config_.max_sequence_length()));
    }
    const int heads = config_.head_count;
    const Eigen::Index h = config_.hidden();
    if (tape) {
        tape->batch = batch;
        tape->shared.assign(params_.shared.size(), {});
        tape->row_blocks.assign(params_.row_blocks.size(), {});
        tape->col_blocks.assign(params_.col_blocks.size(), {});
    }

    Matrix<Scalar> shared = embed(batch.tokens);
    for (std::size_t i = 0; i < params_.shared.size(); ++i)
        shared = block_forward(params_.shared[i], shared, batch.segments, heads, tape ? &tape->shared[i] : nullptr);
    Matrix<Scalar> row = shared;
    for (std::size_t i = 0; i < params_.row_blocks.size(); ++i)
        row = block_forward(params_.row_blocks[i], row, batch.segments, heads, tape ? &tape->row_blocks[i] : nullptr);

    HeadLogits<Scalar> out;
    Matrix<Scalar> row_final = rms_forward(row, params_.row_out_norm, tape ? &tape->row_final : nullptr);
    out.row = params_.w_row * row_final;

    Matrix<Scalar> col_in(2 * h, shared.cols());
    col_in.topRows(h) = rms_forward(shared, params_.share_norm, tape ? &tape->share_star : nullptr);
    col_in.bottomRows(h) = rms_forward(row, params_.row_norm, tape ? &tape->row_star : nullptr);
    Matrix<Scalar> col = params_.w_proj * col_in;
    for (std::size_t i = 0; i < params_.col_blocks.size(); ++i)
        col = block_forward(params_.col_blocks[i], col, batch.segments, heads, tape ? &tape->col_blocks[i] : nullptr);
    Matrix<Scalar> col_final = rms_forward(col, params_.col_out_norm, tape ? &tape->col_final : nullptr);
    out.col = params_.w_col * col_final;

    if (tape) {
        tape->row_final_out = std::move(row_final);
        tape->col_in = std::move(col_in);
        tape->col_final_out = std::move(col_final);
    }
    return out;
}

template <typename Scalar>
void PolicyModel<Scalar>::backward(const ForwardTape<Scalar>& tape, const Matrix<Scalar>& d_row_logits,
                                   const Matrix<Scalar>& d_col_logits, ParameterSet<Scalar>& grads) const {
    const int heads = config_.head_count;
    const Eigen::Index h = config_.hidden();
    const auto& segments = tape.batch.segments;

    grads.w_row.noalias() += d_row_logits * tape.row_final_out.transpose();
    const Matrix<Scalar> d_row_final = params_.w_row.transpose() * d_row_logits;
    Matrix<Scalar> d_row = rms_backward(d_row_final, params_.row_out_norm, tape.row_final, grads.row_out_norm);

    grads.w_col.noalias() += d_col_logits * tape.col_final_out.transpose();
    const Matrix<Scalar> d_col_final = params_.w_col.transpose() * d_col_logits;
    Matrix<Scalar> d_col = rms_backward(d_col_final, params_.col_out_norm, tape.col_final, grads.col_out_norm);
    for (std::size_t i = params_.col_blocks.size(); i-- > 0;)
        d_col = block_backward(params_.col_blocks[i], tape.col_blocks[i], d_col, segments, heads, grads.col_blocks[i]);

    grads.w_proj.noalias() += d_col * tape.col_in.transpose();
    const Matrix<Scalar> d_col_in = params_.w_proj.transpose() * d_col;
    Matrix<Scalar> d_shared =
        rms_backward(Matrix<Scalar>(d_col_in.topRows(h)), params_.share_norm, tape.share_star, grads.share_norm);
    d_row += rms_backward(Matrix<Scalar>(d_col_in.bottomRows(h)), params_.row_norm, tape.row_star, grads.row_norm);

    for (std::size_t i = params_.row_blocks.size(); i-- > 0;)
        d_row = block_backward(params_.row_blocks[i], tape.row_blocks[i], d_row, segments, heads, grads.row_blocks[i]);
    d_shared += d_row;
    for (std::size_t i = params_.shared.size(); i-- > 0;)
        d_shared = block_backward(params_.shared[i], tape.shared[i], d_shared, segments, heads, grads.shared[i]);

    const int d = config_.embed_dim;
    for (std::size_t t = 0; t < tape.batch.tokens.size(); ++t) {
        const auto col = static_cast<Eigen::Index>(t);
        Vector<Scalar> top = d_shared.col(col).head(d);
        Vector<Scalar> bottom = d_shared.col(col).tail(d);
        const Coordinate c = tape.batch.tokens[t];
        if (config_.use_rope) {
            rotate_pairs<Scalar>(top, rope_cos_, rope_sin_, c.row, true);
            rotate_pairs<Scalar>(bottom, rope_cos_, rope_sin_, c.col, true);
        }
        grads.row_embedding.col(c.row) += top;
        grads.col_embedding.col(c.col) += bottom;
    }
}

template <typename Scalar>
std::pair<Vector<Scalar>, Vector<Scalar>> PolicyModel<Scalar>::next_distributions(
    std::span<const Coordinate> prefix) const {
    if (prefix.empty()) throw std::out_of_range("next_distributions needs a non-empty prefix");
    const auto logits = forward(prefix);
    const Eigen::Index last = logits.row.cols() - 1;
    return {softmax_columns<Scalar>(logits.row.col(last)), softmax_columns<Scalar>(logits.col.col(last))};
}

template <typename Scalar>
DecoderState<Scalar> PolicyModel<Scalar>::start_decoding(int slots) const {
    DecoderState<Scalar> state;
    const auto blocks = static_cast<std::size_t>(block_count());
    const auto n = static_cast<std::size_t>(slots);
    state.keys.assign(blocks, std::vector<Matrix<Scalar>>(n, Matrix<Scalar>(config_.hidden(), 16)));
    state.values = state.keys;
    state.lengths.assign(n, 0);
    return state;
}

template <typename Scalar>
HeadLogits<Scalar> PolicyModel<Scalar>::decode(DecoderState<Scalar>& state, std::span<const int> slots,
                                               std::span<const Coordinate> tokens) const {
    if (slots.size() != tokens.size()) throw std::invalid_argument("decode: slots and tokens differ in length");
    for (int s : slots)
        if (static_cast<std::size_t>(state.lengths[static_cast<std::size_t>(s)]) >= config_.max_sequence_length())
            throw std::out_of_range("decode: sequence exceeds the maximum length");
    const int heads = config_.head_count;
    const Eigen::Index h = config_.hidden();
    const Eigen::Index hd = config_.head_dim();
    const auto scale = static_cast<Scalar>(1.0 / std::sqrt(static_cast<double>(hd)));
    const auto batch = static_cast<Eigen::Index>(slots.size());

    int block_index = 0;
    auto step = [&](const BlockParameters<Scalar>& p, const Matrix<Scalar>& x) {
        const Matrix<Scalar> a = rms_forward<Scalar>(x, p.attn_norm, nullptr);
        const Matrix<Scalar> q = p.wq * a;
        const Matrix<Scalar> k = p.wk * a;
        const Matrix<Scalar> v = p.wv * a;
        Matrix<Scalar> mix(h, batch);
        auto& keys = state.keys[static_cast<std::size_t>(block_index)];
        auto& values = state.values[static_cast<std::size_t>(block_index)];
        for (Eigen::Index i = 0; i < batch; ++i) {
            const auto slot = static_cast<std::size_t>(slots[static_cast<std::size_t>(i)]);
            const Eigen::Index len = state.lengths[slot];
            auto& kc = keys[slot];
            auto& vc = values[slot];
            if (len >= kc.cols()) {
                kc.conservativeResize(Eigen::NoChange, 2 * kc.cols());
                vc.conservativeResize(Eigen::NoChange, 2 * vc.cols());
            }
            kc.col(len) = k.col(i);
            vc.col(len) = v.col(i);
            for (int head = 0; head < heads; ++head) {
                const Eigen::Index r0 = head * hd;
                Vector<Scalar> w = (kc.block(r0, 0, hd, len + 1).transpose() * q.col(i).segment(r0, hd)) * scale;
                w = (w.array() - w.maxCoeff()).exp().matrix();
                w /= w.sum();
                mix.col(i).segment(r0, hd).noalias() = vc.block(r0, 0, hd, len + 1) * w;
            }
        }
        Matrix<Scalar> x1 = x;
        x1.noalias() += p.wo * mix;
        const Matrix<Scalar> b = rms_forward<Scalar>(x1, p.ffn_norm, nullptr);
        x1.noalias() += p.w_down * gelu<Scalar>(p.w_up * b);
        ++block_index;
        return x1;
    };

    Matrix<Scalar> shared = embed(tokens);
    for (const auto& p : params_.shared) shared = step(p, shared);
    Matrix<Scalar> row = shared;
    for (const auto& p : params_.row_blocks) row = step(p, row);
    HeadLogits<Scalar> out;
    out.row = params_.w_row * rms_forward<Scalar>(row, params_.row_out_norm, nullptr);
    Matrix<Scalar> col_in(2 * h, batch);
    col_in.topRows(h) = rms_forward<Scalar>(shared, params_.share_norm, nullptr);
    col_in.bottomRows(h) = rms_forward<Scalar>(row, params_.row_norm, nullptr);
    Matrix<Scalar> col = params_.w_proj * col_in;
    for (const auto& p : params_.col_blocks) col = step(p, col);
    out.col = params_.w_col * rms_forward<Scalar>(col, params_.col_out_norm, nullptr);

    for (int s : slots) ++state.lengths[static_cast<std::size_t>(s)];
    return out;
}

template <typename Scalar>
std::vector<BlockAttention<Scalar>> PolicyModel<Scalar>::attention(std::span<const Coordinate> coords) const {
    ForwardTape<Scalar> tape;
    forward(PackedBatch::single(coords), &tape);
    std::vector<BlockAttention<Scalar>> out;
    auto collect = [&](const char* stack, const std::vector<BlockCache<Scalar>>& caches) {
        for (std::size_t i = 0; i < caches.size(); ++i) {
            BlockAttention<Scalar> block{stack, static_cast<int>(i), {}};
            for (const auto& pt : caches[i].probs) block.heads.push_back(pt.transpose());
            out.push_back(std::move(block));
        }
    };
    collect("shared", tape.shared);
    collect("row", tape.row_blocks);
    collect("col", tape.col_blocks);
    return out;
}

template class PolicyModel<float>;
template class PolicyModel<double>;
template void apply_rotary<float>(Eigen::Ref<Vector<float>>, int, double);
template void apply_rotary<double>(Eigen::Ref<Vector<double>>, int, double);
template Matrix<float> softmax_columns<float>(const Matrix<float>&);
template Matrix<double> softmax_columns<double>(const Matrix<double>&);

}  // namespace prefixforge
