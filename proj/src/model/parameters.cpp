#include "prefixforge/model/parameters.hpp"

#include <cmath>
#include <numbers>

namespace prefixforge {

namespace {

template <typename Scalar>
BlockParameters<Scalar> zero_block(const ModelConfig& cfg) {
    const int h = cfg.hidden();
    const int f = cfg.ffn_width();
    return {Matrix<Scalar>::Zero(h, 1), Matrix<Scalar>::Zero(h, h), Matrix<Scalar>::Zero(h, h),
            Matrix<Scalar>::Zero(h, h), Matrix<Scalar>::Zero(h, h), Matrix<Scalar>::Zero(h, 1),
            Matrix<Scalar>::Zero(f, h), Matrix<Scalar>::Zero(h, f)};
}

template <typename Scalar, typename Tensor, typename Out>
void list_block(const std::string& prefix, BlockParameters<Scalar>& b, Out& out) {
    out.emplace_back(prefix + ".attn_norm", &b.attn_norm);
    out.emplace_back(prefix + ".wq", &b.wq);
    out.emplace_back(prefix + ".wk", &b.wk);
    out.emplace_back(prefix + ".wv", &b.wv);
    out.emplace_back(prefix + ".wo", &b.wo);
    out.emplace_back(prefix + ".ffn_norm", &b.ffn_norm);
    out.emplace_back(prefix + ".w_up", &b.w_up);
    out.emplace_back(prefix + ".w_down", &b.w_down);
}

// Box-Muller on the portable uniform so initialization is identical everywhere.
double standard_normal(Rng& rng) {
    double u1 = uniform01(rng);
    while (u1 <= 0.0) u1 = uniform01(rng);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace

template <typename Scalar>
ParameterSet<Scalar> ParameterSet<Scalar>::zeros(const ModelConfig& cfg) {
    cfg.check();
    const int d = cfg.embed_dim;
    const int h = cfg.hidden();
    const int v = cfg.max_width;
    ParameterSet p;
    p.row_embedding = Matrix<Scalar>::Zero(d, v);
    p.col_embedding = Matrix<Scalar>::Zero(d, v);
    for (int i = 0; i < cfg.shared_layers; ++i) p.shared.push_back(zero_block<Scalar>(cfg));
    for (int i = 0; i < cfg.row_layers; ++i) p.row_blocks.push_back(zero_block<Scalar>(cfg));
    for (int i = 0; i < cfg.col_layers; ++i) p.col_blocks.push_back(zero_block<Scalar>(cfg));
    p.row_out_norm = Matrix<Scalar>::Zero(h, 1);
    p.w_row = Matrix<Scalar>::Zero(v, h);
    p.share_norm = Matrix<Scalar>::Zero(h, 1);
    p.row_norm = Matrix<Scalar>::Zero(h, 1);
    p.w_proj = Matrix<Scalar>::Zero(h, 2 * h);
    p.col_out_norm = Matrix<Scalar>::Zero(h, 1);
    p.w_col = Matrix<Scalar>::Zero(v, h);
    return p;
}

template <typename Scalar>
std::vector<std::pair<std::string, Matrix<Scalar>*>> ParameterSet<Scalar>::tensors() {
    std::vector<std::pair<std::string, Matrix<Scalar>*>> out;
    out.emplace_back("row_embedding", &row_embedding);
    out.emplace_back("col_embedding", &col_embedding);
    for (std::size_t i = 0; i < shared.size(); ++i)
        list_block<Scalar, Matrix<Scalar>>("shared." + std::to_string(i), shared[i], out);
    for (std::size_t i = 0; i < row_blocks.size(); ++i)
        list_block<Scalar, Matrix<Scalar>>("row." + std::to_string(i), row_blocks[i], out);
    out.emplace_back("row_out_norm", &row_out_norm);
    out.emplace_back("w_row", &w_row);
    out.emplace_back("share_norm", &share_norm);
    out.emplace_back("row_norm", &row_norm);
    out.emplace_back("w_proj", &w_proj);
    for (std::size_t i = 0; i < col_blocks.size(); ++i)
        list_block<Scalar, Matrix<Scalar>>("col." + std::to_string(i), col_blocks[i], out);
    out.emplace_back("col_out_norm", &col_out_norm);
    out.emplace_back("w_col", &w_col);
    return out;
}

template <typename Scalar>
std::vector<std::pair<std::string, const Matrix<Scalar>*>> ParameterSet<Scalar>::tensors() const {
    auto mutable_list = const_cast<ParameterSet*>(this)->tensors();
    std::vector<std::pair<std::string, const Matrix<Scalar>*>> out;
    out.reserve(mutable_list.size());
    for (auto& [name, t] : mutable_list) out.emplace_back(std::move(name), t);
    return out;
}

template <typename Scalar>
std::size_t ParameterSet<Scalar>::parameter_count() const {
    std::size_t total = 0;
    for (const auto& [name, t] : tensors()) total += static_cast<std::size_t>(t->size());
    return total;
}

template <typename Scalar>
void ParameterSet<Scalar>::set_zero() {
    for (auto& [name, t] : tensors()) t->setZero();
}

template <typename Scalar>
std::uint64_t ParameterSet<Scalar>::checksum() const {
    std::uint64_t h = 1469598103934665603ULL;
    for (const auto& [name, t] : tensors()) {
        const auto* bytes = reinterpret_cast<const unsigned char*>(t->data());
        const auto count = static_cast<std::size_t>(t->size()) * sizeof(Scalar);
        for (std::size_t i = 0; i < count; ++i) {
            h ^= bytes[i];
            h *= 1099511628211ULL;
        }
    }
    return h;
}

template <typename Scalar>
void initialize_parameters(ParameterSet<Scalar>& params, const ModelConfig& cfg, Rng& rng) {
    params = ParameterSet<Scalar>::zeros(cfg);
    for (auto& [name, t] : params.tensors()) {
        const bool gain = name.ends_with("norm");
        const bool output = name == "w_row" || name == "w_col";
        if (gain) {
            t->setOnes();
        } else if (!output) {
            for (Eigen::Index i = 0; i < t->size(); ++i)
                t->data()[i] = static_cast<Scalar>(cfg.init_std * standard_normal(rng));
        }
    }
}

template struct ParameterSet<float>;
template struct ParameterSet<double>;
template void initialize_parameters<float>(ParameterSet<float>&, const ModelConfig&, Rng&);
template void initialize_parameters<double>(ParameterSet<double>&, const ModelConfig&, Rng&);

}  // namespace prefixforge
