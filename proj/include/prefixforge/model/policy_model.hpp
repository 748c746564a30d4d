#pragma once

#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "prefixforge/model/parameters.hpp"
#include "prefixforge/prefix_graph.hpp"

namespace prefixforge {

/// A contiguous run of tokens belonging to one sequence inside a packed batch.
struct Segment {
    Eigen::Index offset = 0;
    Eigen::Index length = 0;
};

/// Several sequences laid end to end; attention never crosses segment boundaries.
struct PackedBatch {
    std::vector<Coordinate> tokens;
    std::vector<Segment> segments;

    static PackedBatch pack(std::span<const CoordinateSequence> sequences);
    static PackedBatch single(std::span<const Coordinate> coords);
    Eigen::Index token_count() const { return static_cast<Eigen::Index>(tokens.size()); }
};

/// Column t of each matrix scores the coordinate at position t + 1.
template <typename Scalar>
struct HeadLogits {
    Matrix<Scalar> row;  ///< max_width x tokens
    Matrix<Scalar> col;  ///< max_width x tokens
};

template <typename Scalar>
struct RmsNormCache {
    Matrix<Scalar> normalized;  ///< x / rms(x), before the gain
    Vector<Scalar> inv_rms;
};

template <typename Scalar>
struct BlockCache {
    RmsNormCache<Scalar> norm1;
    Matrix<Scalar> attn_in;  ///< gain * normalized
    Matrix<Scalar> q, k, v;
    std::vector<Matrix<Scalar>> probs;  ///< [segment * heads + head], key x query (column per query)
    Matrix<Scalar> attn_mix;            ///< per-head weighted values, before wo
    RmsNormCache<Scalar> norm2;
    Matrix<Scalar> ffn_in;
    Matrix<Scalar> up;
    Matrix<Scalar> act;
};

/// Everything backward() needs from one training forward pass.
template <typename Scalar>
struct ForwardTape {
    PackedBatch batch;
    std::vector<BlockCache<Scalar>> shared, row_blocks, col_blocks;
    RmsNormCache<Scalar> row_final, share_star, row_star, col_final;
    Matrix<Scalar> row_final_out, col_in, col_final_out;
};

/// Per-layer key/value history for incremental decoding of many sequences at once.
template <typename Scalar>
struct DecoderState {
    /// [block][slot] -> hidden x capacity; `lengths[slot]` columns are filled.
    std::vector<std::vector<Matrix<Scalar>>> keys, values;
    std::vector<Eigen::Index> lengths;
};

/// Attention probabilities of one block: heads[h] is query x key, rows sum to 1.
template <typename Scalar>
struct BlockAttention {
    std::string stack;  ///< "shared", "row" or "col"
    int index = 0;
    std::vector<Matrix<Scalar>> heads;
};

/// Two-head decoder-only policy over coordinate tokens.
///
/// Token p is [R(row_p) E_row[row_p] ; R(col_p) E_col[col_p]] with R the rotary map at the
/// coordinate value. The shared stack feeds a row stack (row logits) and, through
/// W_proj [rms(shared) ; rms(row)], a column stack (column logits). All attention is causal.
template <typename Scalar>
class PolicyModel {
public:
    explicit PolicyModel(const ModelConfig& config);
    PolicyModel(const ModelConfig& config, Rng& rng);
    PolicyModel(const ModelConfig& config, ParameterSet<Scalar> params);

    const ModelConfig& config() const { return config_; }
    ParameterSet<Scalar>& parameters() { return params_; }
    const ParameterSet<Scalar>& parameters() const { return params_; }

    /// hidden x length token matrix. Throws std::out_of_range for coordinates >= max_width.
    Matrix<Scalar> embed(std::span<const Coordinate> coords) const;

    HeadLogits<Scalar> forward(std::span<const Coordinate> coords) const;
    /// Packed forward; fills `tape` when given so that backward() can run.
    HeadLogits<Scalar> forward(const PackedBatch& batch, ForwardTape<Scalar>* tape = nullptr) const;

    /// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(logits).
    void backward(const ForwardTape<Scalar>& tape, const Matrix<Scalar>& d_row_logits,
                  const Matrix<Scalar>& d_col_logits, ParameterSet<Scalar>& grads) const;

    /// Softmax of the final-position logits: P(next row | prefix), P(next col | prefix).
    std::pair<Vector<Scalar>, Vector<Scalar>> next_distributions(std::span<const Coordinate> prefix) const;

    /// Incremental decoding: `slots` sequences, each fed one token per decode() call.
    DecoderState<Scalar> start_decoding(int slots) const;
    /// Feeds tokens[i] to slot slots[i]; returns logits for those slots (max_width x slots.size()).
    HeadLogits<Scalar> decode(DecoderState<Scalar>& state, std::span<const int> slots,
                              std::span<const Coordinate> tokens) const;

    /// Attention probabilities of every block for one sequence.
    std::vector<BlockAttention<Scalar>> attention(std::span<const Coordinate> coords) const;

private:
    int block_count() const;
    void check_tokens(std::span<const Coordinate> coords) const;

    ModelConfig config_;
    ParameterSet<Scalar> params_;
    Matrix<Scalar> rope_cos_, rope_sin_;  ///< (embed_dim / 2) x max_width
};

/// Applies R(position) to a embed_dim vector in place (pairs (2i, 2i+1), angle position * base^(-2i/d)).
template <typename Scalar>
void apply_rotary(Eigen::Ref<Vector<Scalar>> x, int position, double base);

/// Numerically stable softmax of each column.
template <typename Scalar>
Matrix<Scalar> softmax_columns(const Matrix<Scalar>& logits);

extern template class PolicyModel<float>;
extern template class PolicyModel<double>;

}  // namespace prefixforge
