#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "prefixforge/model/policy_model.hpp"

namespace prefixforge {

/// Which blocks to dump: "all", a stack name ("shared", "row", "col") or "stack:index".
struct LayerSelector {
    std::string stack;  ///< empty = every stack
    int index = -1;     ///< -1 = every block of the stack

    /// Throws std::out_of_range for an unknown stack or a malformed index.
    static LayerSelector parse(const std::string& text);
    bool matches(const std::string& block_stack, int block_index) const;
};

/// Attention of the selected blocks. Throws std::out_of_range if nothing matches.
template <typename Scalar>
std::vector<BlockAttention<Scalar>> select_attention(const PolicyModel<Scalar>& model,
                                                     const CoordinateSequence& seq, const LayerSelector& selector);

/// Writes JSON ({"width","seq","layers":[{"stack","index","heads":[query][key]...}]}) or,
/// for a ".csv" path, rows "stack,layer,head,query,key,score".
template <typename Scalar>
void write_attention(const std::filesystem::path& path, const CoordinateSequence& seq,
                     const std::vector<BlockAttention<Scalar>>& blocks);

}  // namespace prefixforge
