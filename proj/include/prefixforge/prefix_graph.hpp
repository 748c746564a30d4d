#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace prefixforge {

/// Widths are capped so that one occupancy row (and one adder operand) fits a 64-bit word.
inline constexpr int kMaxWidth = 64;

/// Cell (row, col) of the prefix matrix; node l_{row:col}. Lower-triangular: col <= row.
struct Coordinate {
    int row = 0;
    int col = 0;

    bool is_diagonal() const { return row == col; }
    bool is_merge() const { return col < row; }

    friend bool operator==(const Coordinate&, const Coordinate&) = default;
};

/// Scan-order token stream: rows top to bottom, each row from the diagonal to column 0.
struct CoordinateSequence {
    int width = 0;
    std::vector<Coordinate> coords;

    std::size_t size() const { return coords.size(); }
    bool empty() const { return coords.empty(); }
    const Coordinate& back() const { return coords.back(); }
    bool complete() const {
        return !coords.empty() && coords.back() == Coordinate{width - 1, 0};
    }

    friend bool operator==(const CoordinateSequence&, const CoordinateSequence&) = default;
};

/// Longest possible sequence for an n-bit design (fully populated lower triangle).
constexpr std::size_t max_sequence_length(int width) {
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(width + 1) / 2;
}

/// Thrown for malformed sequences or graphs. index() is the first offending sequence
/// position when the error came from a sequence, otherwise empty.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& what, std::optional<std::size_t> index = {})
        : std::runtime_error(what), index_(index) {}
    std::optional<std::size_t> index() const { return index_; }

private:
    std::optional<std::size_t> index_;
};

enum class DesignRule { Input, Output, Merge };

const char* to_string(DesignRule rule);

struct Violation {
    DesignRule rule;
    Coordinate at;
    std::string message;
};

struct ValidationReport {
    std::vector<Violation> violations;

    bool valid() const { return violations.empty(); }
    std::size_t count(DesignRule rule) const;
    /// One line per violation.
    std::string describe() const;
};

/// Lower-triangular occupancy of an n-bit prefix graph. Each row is one packed word.
class PrefixGraph {
public:
    /// Empty matrix (no nodes at all). Throws std::invalid_argument outside [2, kMaxWidth].
    explicit PrefixGraph(int width);

    /// Inputs and outputs present, no other merge nodes: the ripple-carry graph.
    static PrefixGraph with_required_nodes(int width);

    int width() const { return width_; }

    bool test(int row, int col) const;
    bool test(Coordinate c) const { return test(c.row, c.col); }
    void set(int row, int col, bool value = true);
    void set(Coordinate c, bool value = true) { set(c.row, c.col, value); }

    /// Occupied columns of one row, descending (diagonal first, i.e. scan order).
    std::vector<int> row_columns(int row) const;
    /// Raw occupancy word of a row; bit i set iff (row, i) is present.
    std::uint64_t row_bits(int row) const { return rows_[static_cast<std::size_t>(row)]; }

    /// Number of set entries, inputs included.
    std::size_t node_count() const;

    friend bool operator==(const PrefixGraph&, const PrefixGraph&) = default;

private:
    void check_bounds(int row, int col) const;

    int width_;
    std::vector<std::uint64_t> rows_;
};

struct Parents {
    Coordinate msp;
    Coordinate lsp;
};

/// Canonical parents of a merge node: the MSP is the nearest occupied node to the
/// right in the same row, the LSP is (msp.col - 1, node.col). Throws ValidationError
/// when the node is absent, is not a merge node, or its LSP is missing.
Parents resolve_parents(const PrefixGraph& g, Coordinate node);

/// Checks the input, output and restricted merge rules. Never throws.
ValidationReport validate(const PrefixGraph& g);

/// Throws ValidationError (first violation) if the graph is not valid.
void require_valid(const PrefixGraph& g);

/// Checks that `seq` is a prefix of some valid sequence of its width. Returns the first
/// offending index and a message, or nullopt when the prefix is well formed.
struct SequenceFault {
    std::size_t index;
    std::string message;
};
std::optional<SequenceFault> find_sequence_fault(const CoordinateSequence& seq);

/// Throws ValidationError naming the first offending index. With `require_complete`
/// the sequence must also end at the EOS coordinate (width-1, 0).
void require_valid_sequence(const CoordinateSequence& seq, bool require_complete = true);

PrefixGraph sequence_to_graph(const CoordinateSequence& seq);
CoordinateSequence graph_to_sequence(const PrefixGraph& g);

/// Number of merge nodes.
int size(const PrefixGraph& g);

/// Level of each node, indexed [row][col]; -1 for absent cells. Inputs are level 0.
class NodeLevels {
public:
    explicit NodeLevels(int width) : width_(width), levels_(static_cast<std::size_t>(width * width), -1) {}

    int width() const { return width_; }
    int at(int row, int col) const { return levels_[index(row, col)]; }
    int at(Coordinate c) const { return at(c.row, c.col); }
    void assign(Coordinate c, int level) { levels_[index(c.row, c.col)] = level; }
    int max_level() const;

private:
    std::size_t index(int row, int col) const { return static_cast<std::size_t>(row * width_ + col); }

    int width_;
    std::vector<int> levels_;
};

NodeLevels levels(const PrefixGraph& g);

/// Number of graph levels including the input row: 1 + deepest merge level.
int depth(const PrefixGraph& g);

/// ceil(log2 n) + 1, the smallest depth any valid n-bit graph can reach.
int minimum_depth(int width);

PrefixGraph ripple(int width);
PrefixGraph sklansky(int width);
PrefixGraph kogge_stone(int width);
PrefixGraph brent_kung(int width);

/// Scan-order text "r,c;r,c;..." with the width prefix. Equal keys iff equal occupancy.
std::string design_key(const CoordinateSequence& seq);

std::string to_string(const CoordinateSequence& seq);

}  // namespace prefixforge
