#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "prefixforge/prefix_graph.hpp"

namespace prefixforge {

// Interchange formats:
//   graph    {"width": n, "nodes": [[row, col], ...]}   merge nodes only (col < row), scan order
//   sequence {"width": n, "seq":   [[row, col], ...]}   full coordinate sequence
// Both are emitted in compact form (no whitespace) so identical designs give identical bytes.

nlohmann::json graph_to_json(const PrefixGraph& g);
/// Inputs and outputs are implied, so column-0 entries may be omitted. The result is not validated.
PrefixGraph graph_from_json(const nlohmann::json& j);

nlohmann::json sequence_to_json(const CoordinateSequence& seq);
CoordinateSequence sequence_from_json(const nlohmann::json& j);

std::string dump_compact(const nlohmann::json& j);

}  // namespace prefixforge
