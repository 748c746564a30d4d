#pragma once

#include <vector>

#include "oracles.hpp"
#include "prefixforge/prefix_graph.hpp"

namespace fixtures {

/// The 6-bit example design with size 8 and depth 4 (node (4,2) merges (4,4) and (3,2)).
inline prefixforge::CoordinateSequence six_bit_example() {
    return {6, {{0, 0}, {1, 1}, {1, 0}, {2, 2}, {2, 0}, {3, 3}, {3, 2}, {3, 0},
                {4, 4}, {4, 2}, {4, 0}, {5, 5}, {5, 4}, {5, 0}}};
}

inline std::vector<oracle::Cell> cells(const prefixforge::CoordinateSequence& seq) {
    std::vector<oracle::Cell> out;
    for (const auto& c : seq.coords) out.emplace_back(c.row, c.col);
    return out;
}

inline oracle::Matrix matrix(const prefixforge::PrefixGraph& g) {
    oracle::Matrix m{g.width(), {}};
    for (int r = 0; r < g.width(); ++r)
        for (int c = 0; c <= r; ++c)
            if (g.test(r, c)) m.cells.insert({r, c});
    return m;
}

}  // namespace fixtures
