#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "prefixforge/legality.hpp"
#include "prefixforge/model/config.hpp"

namespace prefixforge {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// One pre-norm decoder block. Norm gains are hidden x 1.
template <typename Scalar>
struct BlockParameters {
    Matrix<Scalar> attn_norm;
    Matrix<Scalar> wq, wk, wv, wo;
    Matrix<Scalar> ffn_norm;
    Matrix<Scalar> w_up, w_down;
};

/// Every trainable tensor of the policy. Activations are column-per-token, so
/// embeddings are stored column-per-index and projections as (out x in).
template <typename Scalar>
struct ParameterSet {
    Matrix<Scalar> row_embedding;  ///< embed_dim x max_width
    Matrix<Scalar> col_embedding;  ///< embed_dim x max_width
    std::vector<BlockParameters<Scalar>> shared;
    std::vector<BlockParameters<Scalar>> row_blocks;
    std::vector<BlockParameters<Scalar>> col_blocks;
    Matrix<Scalar> row_out_norm;
    Matrix<Scalar> w_row;         ///< max_width x hidden
    Matrix<Scalar> share_norm;    ///< applied to the shared states on the column path
    Matrix<Scalar> row_norm;      ///< applied to the row states on the column path
    Matrix<Scalar> w_proj;        ///< hidden x 2 hidden
    Matrix<Scalar> col_out_norm;
    Matrix<Scalar> w_col;         ///< max_width x hidden

    /// Correctly shaped, all zeros (norm gains included).
    static ParameterSet zeros(const ModelConfig& cfg);

    /// (name, tensor) in a fixed order; names are stable checkpoint keys.
    std::vector<std::pair<std::string, Matrix<Scalar>*>> tensors();
    std::vector<std::pair<std::string, const Matrix<Scalar>*>> tensors() const;

    std::size_t parameter_count() const;
    void set_zero();

    /// FNV-1a over the raw bytes of every tensor, in tensors() order.
    std::uint64_t checksum() const;

    template <typename Other>
    ParameterSet<Other> cast() const;
};

/// Small-variance normal weights, unit norm gains, zero output projections.
template <typename Scalar>
void initialize_parameters(ParameterSet<Scalar>& params, const ModelConfig& cfg, Rng& rng);

template <typename Scalar>
template <typename Other>
ParameterSet<Other> ParameterSet<Scalar>::cast() const {
    auto cast_block = [](const BlockParameters<Scalar>& b) {
        return BlockParameters<Other>{b.attn_norm.template cast<Other>(), b.wq.template cast<Other>(),
                                      b.wk.template cast<Other>(),        b.wv.template cast<Other>(),
                                      b.wo.template cast<Other>(),        b.ffn_norm.template cast<Other>(),
                                      b.w_up.template cast<Other>(),      b.w_down.template cast<Other>()};
    };
    ParameterSet<Other> out;
    out.row_embedding = row_embedding.template cast<Other>();
    out.col_embedding = col_embedding.template cast<Other>();
    for (const auto& b : shared) out.shared.push_back(cast_block(b));
    for (const auto& b : row_blocks) out.row_blocks.push_back(cast_block(b));
    for (const auto& b : col_blocks) out.col_blocks.push_back(cast_block(b));
    out.row_out_norm = row_out_norm.template cast<Other>();
    out.w_row = w_row.template cast<Other>();
    out.share_norm = share_norm.template cast<Other>();
    out.row_norm = row_norm.template cast<Other>();
    out.w_proj = w_proj.template cast<Other>();
    out.col_out_norm = col_out_norm.template cast<Other>();
    out.w_col = w_col.template cast<Other>();
    return out;
}

extern template struct ParameterSet<float>;
extern template struct ParameterSet<double>;

}  // namespace prefixforge
