#include "prefixforge/prefix_graph.hpp"

#include <algorithm>
#include <bit>
#include <sstream>

namespace prefixforge {

namespace {

std::string coord_text(Coordinate c) {
    std::ostringstream os;
    os << '(' << c.row << ',' << c.col << ')';
    return os.str();
}

std::uint64_t bit(int i) { return std::uint64_t{1} << i; }

}  // namespace

const char* to_string(DesignRule rule) {
    switch (rule) {
        case DesignRule::Input: return "input";
        case DesignRule::Output: return "output";
        case DesignRule::Merge: return "merge";
    }
    return "unknown";
}

std::size_t ValidationReport::count(DesignRule rule) const {
    return static_cast<std::size_t>(std::count_if(violations.begin(), violations.end(),
                                                  [rule](const Violation& v) { return v.rule == rule; }));
}

std::string ValidationReport::describe() const {
    std::ostringstream os;
    for (const auto& v : violations) os << v.message << '\n';
    return os.str();
}

PrefixGraph::PrefixGraph(int width) : width_(width) {
    if (width < 2 || width > kMaxWidth)
        throw std::invalid_argument("prefix graph width must be in [2, " + std::to_string(kMaxWidth) +
                                    "], got " + std::to_string(width));
    rows_.assign(static_cast<std::size_t>(width), 0);
}

PrefixGraph PrefixGraph::with_required_nodes(int width) {
    PrefixGraph g(width);
    for (int r = 0; r < width; ++r) {
        g.set(r, r);
        g.set(r, 0);
    }
    return g;
}

void PrefixGraph::check_bounds(int row, int col) const {
    if (row < 0 || row >= width_ || col < 0 || col > row)
        throw std::out_of_range("coordinate " + coord_text({row, col}) + " outside the lower triangle of a " +
                                std::to_string(width_) + "-bit graph");
}

bool PrefixGraph::test(int row, int col) const {
    check_bounds(row, col);
    return (rows_[static_cast<std::size_t>(row)] & bit(col)) != 0;
}

void PrefixGraph::set(int row, int col, bool value) {
    check_bounds(row, col);
    auto& word = rows_[static_cast<std::size_t>(row)];
    if (value)
        word |= bit(col);
    else
        word &= ~bit(col);
}

std::vector<int> PrefixGraph::row_columns(int row) const {
    std::vector<int> cols;
    std::uint64_t word = rows_[static_cast<std::size_t>(row)];
    while (word != 0) {
        const int top = 63 - std::countl_zero(word);
        cols.push_back(top);
        word &= ~bit(top);
    }
    return cols;
}

std::size_t PrefixGraph::node_count() const {
    std::size_t total = 0;
    for (auto w : rows_) total += static_cast<std::size_t>(std::popcount(w));
    return total;
}

Parents resolve_parents(const PrefixGraph& g, Coordinate node) {
    if (!node.is_merge()) throw ValidationError("node " + coord_text(node) + " is not a merge node");
    if (!g.test(node)) throw ValidationError("node " + coord_text(node) + " is not present");
    const std::uint64_t above = g.row_bits(node.row) & ~((bit(node.col) << 1) - 1);
    if (above == 0)
        throw ValidationError("merge rule violated at " + coord_text(node) + ": no more significant parent");
    const int msp_col = std::countr_zero(above);
    const Parents p{{node.row, msp_col}, {msp_col - 1, node.col}};
    if (!g.test(p.lsp))
        throw ValidationError("merge rule violated at " + coord_text(node) + ": less significant parent " +
                              coord_text(p.lsp) + " absent");
    return p;
}

ValidationReport validate(const PrefixGraph& g) {
    ValidationReport report;
    const int n = g.width();
    for (int r = 0; r < n; ++r) {
        if (!g.test(r, r))
            report.violations.push_back(
                {DesignRule::Input, {r, r}, "input rule violated at bit " + std::to_string(r)});
    }
    for (int r = 1; r < n; ++r) {
        if (!g.test(r, 0))
            report.violations.push_back(
                {DesignRule::Output, {r, 0}, "output rule violated at row " + std::to_string(r)});
    }
    for (int r = 1; r < n; ++r) {
        for (int c : g.row_columns(r)) {
            if (c == r) continue;
            const std::uint64_t above = g.row_bits(r) & ~((bit(c) << 1) - 1);
            if (above == 0) {
                report.violations.push_back({DesignRule::Merge, {r, c},
                                             "merge rule violated at " + coord_text({r, c}) +
                                                 ": no more significant parent"});
                continue;
            }
            const Coordinate lsp{std::countr_zero(above) - 1, c};
            if (!g.test(lsp))
                report.violations.push_back({DesignRule::Merge, {r, c},
                                             "merge rule violated at " + coord_text({r, c}) +
                                                 ": less significant parent " + coord_text(lsp) + " absent"});
        }
    }
    return report;
}

void require_valid(const PrefixGraph& g) {
    const auto report = validate(g);
    if (!report.valid()) throw ValidationError(report.violations.front().message);
}

std::optional<SequenceFault> find_sequence_fault(const CoordinateSequence& seq) {
    const int n = seq.width;
    if (n < 2 || n > kMaxWidth) return SequenceFault{0, "invalid width " + std::to_string(n)};
    if (seq.coords.size() > max_sequence_length(n))
        return SequenceFault{max_sequence_length(n), "sequence longer than n(n+1)/2"};

    std::vector<std::uint64_t> seen(static_cast<std::size_t>(n), 0);
    for (std::size_t k = 0; k < seq.coords.size(); ++k) {
        const Coordinate c = seq.coords[k];
        if (c.row < 0 || c.row >= n || c.col < 0 || c.col > c.row)
            return SequenceFault{k, "coordinate " + coord_text(c) + " outside the lower triangle"};
        if (seen[static_cast<std::size_t>(c.row)] & bit(c.col))
            return SequenceFault{k, "duplicate coordinate " + coord_text(c)};
        if (k == 0) {
            if (c != Coordinate{0, 0}) return SequenceFault{0, "sequence must start at (0,0)"};
        } else {
            const Coordinate prev = seq.coords[k - 1];
            if (prev.col == 0) {
                if (prev.row == n - 1) return SequenceFault{k, "coordinate after the terminal (n-1,0)"};
                if (c != Coordinate{prev.row + 1, prev.row + 1})
                    return SequenceFault{k, "ordering violation: expected " +
                                                coord_text({prev.row + 1, prev.row + 1}) + " after " +
                                                coord_text(prev) + ", got " + coord_text(c)};
            } else {
                if (c.row != prev.row || c.col >= prev.col)
                    return SequenceFault{k, "ordering violation: " + coord_text(c) + " cannot follow " +
                                                coord_text(prev)};
                if (!(seen[static_cast<std::size_t>(prev.col - 1)] & bit(c.col)))
                    return SequenceFault{k, "merge rule violated at " + coord_text(c) + ": less significant parent " +
                                                coord_text({prev.col - 1, c.col}) + " absent"};
            }
        }
        seen[static_cast<std::size_t>(c.row)] |= bit(c.col);
    }
    return std::nullopt;
}

void require_valid_sequence(const CoordinateSequence& seq, bool require_complete) {
    if (auto fault = find_sequence_fault(seq)) throw ValidationError(fault->message, fault->index);
    if (require_complete && !seq.complete())
        throw ValidationError("output rule violated: sequence does not end at (" + std::to_string(seq.width - 1) +
                                  ",0)",
                              seq.coords.size());
}

PrefixGraph sequence_to_graph(const CoordinateSequence& seq) {
    require_valid_sequence(seq, true);
    PrefixGraph g(seq.width);
    for (const auto& c : seq.coords) g.set(c);
    return g;
}

CoordinateSequence graph_to_sequence(const PrefixGraph& g) {
    require_valid(g);
    CoordinateSequence seq{g.width(), {}};
    seq.coords.reserve(g.node_count());
    for (int r = 0; r < g.width(); ++r)
        for (int c : g.row_columns(r)) seq.coords.push_back({r, c});
    return seq;
}

int size(const PrefixGraph& g) {
    int merges = 0;
    for (int r = 0; r < g.width(); ++r) merges += std::popcount(g.row_bits(r) & ~bit(r));
    return merges;
}

int NodeLevels::max_level() const {
    return levels_.empty() ? -1 : *std::max_element(levels_.begin(), levels_.end());
}

NodeLevels levels(const PrefixGraph& g) {
    require_valid(g);
    NodeLevels out(g.width());
    // Scan order is topological: the MSP sits to the right in the same row, the LSP in an earlier row.
    for (int r = 0; r < g.width(); ++r) {
        for (int c : g.row_columns(r)) {
            if (c == r) {
                out.assign({r, r}, 0);
                continue;
            }
            const auto p = resolve_parents(g, {r, c});
            out.assign({r, c}, 1 + std::max(out.at(p.msp), out.at(p.lsp)));
        }
    }
    return out;
}

int depth(const PrefixGraph& g) { return levels(g).max_level() + 1; }

int minimum_depth(int width) {
    int lg = 0;
    while ((1 << lg) < width) ++lg;
    return lg + 1;
}

PrefixGraph ripple(int width) { return PrefixGraph::with_required_nodes(width); }

PrefixGraph sklansky(int width) {
    auto g = PrefixGraph::with_required_nodes(width);
    for (int j = 1; j < width; ++j)
        for (int l = 1; (1 << (l - 1)) <= j; ++l)
            if (j & (1 << (l - 1))) g.set(j, (j >> l) << l);
    return g;
}

PrefixGraph kogge_stone(int width) {
    auto g = PrefixGraph::with_required_nodes(width);
    for (int j = 1; j < width; ++j) {
        for (int l = 1;; ++l) {
            const int col = std::max(0, j - (1 << l) + 1);
            g.set(j, col);
            if (col == 0) break;
        }
    }
    return g;
}

PrefixGraph brent_kung(int width) {
    auto g = PrefixGraph::with_required_nodes(width);
    for (int l = 1; (1 << l) <= width; ++l) {
        const int span = 1 << l;
        for (int j = span - 1; j < width; j += span) g.set(j, j - span + 1);
    }
    return g;
}

std::string design_key(const CoordinateSequence& seq) {
    std::string key = std::to_string(seq.width) + ':';
    for (const auto& c : seq.coords) {
        key += std::to_string(c.row);
        key += ',';
        key += std::to_string(c.col);
        key += ';';
    }
    return key;
}

std::string to_string(const CoordinateSequence& seq) {
    std::string out;
    for (std::size_t i = 0; i < seq.coords.size(); ++i) {
        if (i) out += ' ';
        out += coord_text(seq.coords[i]);
    }
    return out;
}

}  // namespace prefixforge
