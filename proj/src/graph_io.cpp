#include "prefixforge/graph_io.hpp"

namespace prefixforge {

namespace {

Coordinate coord_from_json(const nlohmann::json& pair) {
    if (!pair.is_array() || pair.size() != 2)
        throw std::invalid_argument("coordinate must be a [row, col] pair, got " + pair.dump());
    return {pair[0].get<int>(), pair[1].get<int>()};
}

int width_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("width")) throw std::invalid_argument("missing \"width\"");
    return j.at("width").get<int>();
}

}  // namespace

nlohmann::json graph_to_json(const PrefixGraph& g) {
    auto nodes = nlohmann::json::array();
    for (int r = 0; r < g.width(); ++r)
        for (int c : g.row_columns(r))
            if (c != r) nodes.push_back({r, c});
    return {{"width", g.width()}, {"nodes", std::move(nodes)}};
}

PrefixGraph graph_from_json(const nlohmann::json& j) {
    auto g = PrefixGraph::with_required_nodes(width_from_json(j));
    for (const auto& pair : j.at("nodes")) g.set(coord_from_json(pair));
    return g;
}

nlohmann::json sequence_to_json(const CoordinateSequence& seq) {
    auto coords = nlohmann::json::array();
    for (const auto& c : seq.coords) coords.push_back({c.row, c.col});
    return {{"width", seq.width}, {"seq", std::move(coords)}};
}

CoordinateSequence sequence_from_json(const nlohmann::json& j) {
    CoordinateSequence seq{width_from_json(j), {}};
    for (const auto& pair : j.at("seq")) seq.coords.push_back(coord_from_json(pair));
    return seq;
}

std::string dump_compact(const nlohmann::json& j) { return j.dump(); }

}  // namespace prefixforge
