#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

namespace prefixforge {

/// Shape of the two-head decoder. Token width is 2 * embed_dim (row half | column half).
struct ModelConfig {
    int max_width = 16;  ///< vocabulary of both heads, largest supported bit width
    int embed_dim = 64;  ///< per-axis embedding size, must be even
    int shared_layers = 4;
    int row_layers = 1;
    int col_layers = 2;
    int head_count = 4;
    int ffn_multiplier = 4;
    double rope_base = 10000.0;
    bool use_rope = true;
    double init_std = 0.02;

    int hidden() const { return 2 * embed_dim; }
    int head_dim() const { return hidden() / head_count; }
    int ffn_width() const { return ffn_multiplier * hidden(); }
    std::size_t max_sequence_length() const {
        return static_cast<std::size_t>(max_width) * static_cast<std::size_t>(max_width + 1) / 2;
    }

    /// Throws std::invalid_argument on inconsistent values.
    void check() const {
        if (max_width < 2 || max_width > 64) throw std::invalid_argument("max_width must be in [2, 64]");
        if (embed_dim <= 0 || embed_dim % 2 != 0) throw std::invalid_argument("embed_dim must be positive and even");
        if (head_count <= 0 || hidden() % head_count != 0)
            throw std::invalid_argument("head_count must divide 2 * embed_dim");
        if (shared_layers < 0 || row_layers < 0 || col_layers < 0 || ffn_multiplier <= 0)
            throw std::invalid_argument("layer counts must be non-negative, ffn_multiplier positive");
        if (!(rope_base > 1.0)) throw std::invalid_argument("rope_base must exceed 1");
    }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = {{"max_width", c.max_width},   {"embed_dim", c.embed_dim},     {"shared_layers", c.shared_layers},
         {"row_layers", c.row_layers}, {"col_layers", c.col_layers},   {"head_count", c.head_count},
         {"ffn_multiplier", c.ffn_multiplier}, {"rope_base", c.rope_base}, {"use_rope", c.use_rope},
         {"init_std", c.init_std}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
    ModelConfig d;
    c.max_width = j.value("max_width", d.max_width);
    c.embed_dim = j.value("embed_dim", d.embed_dim);
    c.shared_layers = j.value("shared_layers", d.shared_layers);
    c.row_layers = j.value("row_layers", d.row_layers);
    c.col_layers = j.value("col_layers", d.col_layers);
    c.head_count = j.value("head_count", d.head_count);
    c.ffn_multiplier = j.value("ffn_multiplier", d.ffn_multiplier);
    c.rope_base = j.value("rope_base", d.rope_base);
    c.use_rope = j.value("use_rope", d.use_rope);
    c.init_std = j.value("init_std", d.init_std);
}

}  // namespace prefixforge
