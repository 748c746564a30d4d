#pragma once

// Test-side reference implementations. None of these call into the library's graph
// algorithms; they work from the matrix definition directly so that agreement means something.

#include <algorithm>
#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace oracle {

using Cell = std::pair<int, int>;  // (row, col)

/// Occupancy as a plain set of cells.
struct Matrix {
    int n = 0;
    std::set<Cell> cells;
    bool has(int r, int c) const { return cells.count({r, c}) > 0; }
};

inline Matrix from_cells(int n, const std::vector<Cell>& cells) {
    Matrix m{n, {}};
    m.cells.insert(cells.begin(), cells.end());
    return m;
}

/// Nearest occupied column to the right (larger index) of `col` in `row`, or -1.
inline int msp_column(const Matrix& m, int row, int col) {
    for (int k = col + 1; k <= row; ++k)
        if (m.has(row, k)) return k;
    return -1;
}

/// Brute-force design-rule check.
inline bool valid(const Matrix& m) {
    for (int i = 0; i < m.n; ++i)
        if (!m.has(i, i) || !m.has(i, 0)) return false;
    for (const auto& [r, c] : m.cells) {
        if (r < 0 || r >= m.n || c < 0 || c > r) return false;
        if (c == r) continue;
        const int k = msp_column(m, r, c);
        if (k < 0 || !m.has(k - 1, c)) return false;
    }
    return true;
}

/// Merge-rule violations counted cell by cell.
inline int merge_violations(const Matrix& m) {
    int count = 0;
    for (const auto& [r, c] : m.cells) {
        if (c >= r) continue;
        const int k = msp_column(m, r, c);
        if (k < 0 || !m.has(k - 1, c)) ++count;
    }
    return count;
}

inline int size(const Matrix& m) {
    return static_cast<int>(std::count_if(m.cells.begin(), m.cells.end(), [](const Cell& x) { return x.second < x.first; }));
}

/// Longest input-to-node path measured in nodes, maximized over all nodes
/// (an n-bit ripple chain therefore has depth n).
inline int depth(const Matrix& m) {
    std::map<Cell, int> memo;
    std::function<int(int, int)> nodes_on_path = [&](int r, int c) -> int {
        if (r == c) return 1;
        if (auto it = memo.find({r, c}); it != memo.end()) return it->second;
        const int k = msp_column(m, r, c);
        const int v = 1 + std::max(nodes_on_path(r, k), nodes_on_path(k - 1, c));
        memo[{r, c}] = v;
        return v;
    };
    int best = 0;
    for (const auto& [r, c] : m.cells) best = std::max(best, nodes_on_path(r, c));
    return best;
}

/// Whether `seq` lists the cells of a valid matrix in scan order (rows ascending,
/// columns descending within a row), beginning at (0,0) and ending at (n-1,0).
inline bool valid_sequence(int n, const std::vector<Cell>& seq) {
    if (seq.empty() || seq.front() != Cell{0, 0} || seq.back() != Cell{n - 1, 0}) return false;
    for (std::size_t i = 1; i < seq.size(); ++i) {
        const auto& a = seq[i - 1];
        const auto& b = seq[i];
        if (!(b.first > a.first || (b.first == a.first && b.second < a.second))) return false;
    }
    const auto m = from_cells(n, seq);
    return m.cells.size() == seq.size() && valid(m);
}

// ---------------------------------------------------------------------------------------------
// Gate-level interpreter for the structural Verilog subset the exporter emits:
// modules with scalar or [msb:0] vector ports, `wire` declarations, the primitives
// and/or/xor/buf (output first) and module instances with named port connections.

class Netlist {
public:
    Netlist(const std::string& text, const std::string& top) {
        parse(text);
        if (!modules_.count(top)) throw std::runtime_error("no module " + top);
        top_name_ = top;
        const auto& m = modules_.at(top);
        for (const auto& p : m.ports) {
            for (int b = 0; b < p.width; ++b) {
                const std::string net = p.width > 1 ? p.name + "[" + std::to_string(b) + "]" : p.name;
                (p.input ? inputs_ : outputs_).push_back(net);
            }
        }
        flatten(top, "", {});
        order();
    }

    /// Input bits in port order (for an adder: a[0..n-1] then b[0..n-1]); returns output
    /// bits in port order (sum[0..n-1] then cout).
    std::vector<int> run(const std::vector<int>& in) const {
        if (in.size() != inputs_.size()) throw std::invalid_argument("wrong input count");
        std::vector<int> v(net_count_, -1);
        for (std::size_t i = 0; i < in.size(); ++i) v[input_ids_[i]] = in[i];
        for (const auto& g : compiled_) {
            int x = g.type == 'a' ? 1 : 0;
            for (int s : g.ins) {
                if (g.type == 'a') x &= v[s];
                else if (g.type == 'o') x |= v[s];
                else x ^= v[s];  // xor, or buf with one input
            }
            v[g.out] = x;
        }
        std::vector<int> out;
        for (int id : output_ids_) out.push_back(v[id]);
        return out;
    }

    std::size_t gate_count(const std::string& type) const {
        return static_cast<std::size_t>(std::count_if(gates_.begin(), gates_.end(), [&](const Gate& g) { return g.type == type; }));
    }
    std::size_t top_instances(const std::string& module) const {
        std::size_t n = 0;
        for (const auto& inst : modules_.at(top_name_).instances) n += inst.module == module ? 1 : 0;
        return n;
    }
    std::size_t top_primitives(const std::string& type) const {
        std::size_t n = 0;
        for (const auto& g : modules_.at(top_name_).prims) n += g.type == type ? 1 : 0;
        return n;
    }

private:
    struct Port {
        std::string name;
        bool input = false;
        int width = 1;
    };
    struct Prim {
        std::string type, out;
        std::vector<std::string> ins;
    };
    struct Instance {
        std::string module, name;
        std::map<std::string, std::string> conn;
    };
    struct Module {
        std::vector<Port> ports;
        std::vector<Prim> prims;
        std::vector<Instance> instances;
    };
    using Gate = Prim;

    static std::string trim(std::string s) {
        const auto a = s.find_first_not_of(" \t\r\n");
        if (a == std::string::npos) return "";
        const auto b = s.find_last_not_of(" \t\r\n");
        return s.substr(a, b - a + 1);
    }
    static std::vector<std::string> split(const std::string& s, char sep) {
        std::vector<std::string> out;
        std::string cur;
        for (char ch : s) {
            if (ch == sep) {
                out.push_back(trim(cur));
                cur.clear();
            } else {
                cur += ch;
            }
        }
        if (!trim(cur).empty()) out.push_back(trim(cur));
        return out;
    }

    void parse(const std::string& text) {
        // statements end with ';' except "endmodule"; strip comments first
        std::string clean;
        for (std::size_t i = 0; i < text.size(); ++i) {
            if (text.compare(i, 2, "//") == 0) {
                while (i < text.size() && text[i] != '\n') ++i;
            }
            if (i < text.size()) clean += text[i];
        }
        std::string current;
        std::string stmt;
        for (char ch : clean) {
            stmt += ch;
            const auto t = trim(stmt);
            if (ch == ';' || t == "endmodule") {
                handle(t, current);
                stmt.clear();
            }
        }
    }

    void handle(std::string s, std::string& current) {
        if (s == "endmodule") {
            current.clear();
            return;
        }
        if (!s.empty() && s.back() == ';') s.pop_back();
        s = trim(s);
        if (s.rfind("module ", 0) == 0) {
            const auto lp = s.find('(');
            current = trim(s.substr(7, lp - 7));
            auto& m = modules_[current];
            for (auto decl : split(s.substr(lp + 1, s.rfind(')') - lp - 1), ',')) {
                Port p;
                p.input = decl.rfind("input", 0) == 0;
                decl = trim(decl.substr(p.input ? 5 : 6));
                if (decl.front() == '[') {
                    const auto colon = decl.find(':');
                    p.width = std::stoi(decl.substr(1, colon - 1)) + 1;
                    decl = trim(decl.substr(decl.find(']') + 1));
                }
                p.name = decl;
                m.ports.push_back(p);
            }
            return;
        }
        if (s.rfind("wire ", 0) == 0) return;
        auto& m = modules_.at(current);
        const auto sp = s.find(' ');
        const std::string head = s.substr(0, sp);
        const auto lp = s.find('(');
        const std::string name = trim(s.substr(sp, lp - sp));
        const std::string body = s.substr(lp + 1, s.rfind(')') - lp - 1);
        if (head == "and" || head == "or" || head == "xor" || head == "buf") {
            const auto args = split(body, ',');
            m.prims.push_back({head, args.front(), {args.begin() + 1, args.end()}});
            return;
        }
        Instance inst{head, name, {}};
        for (const auto& c : split(body, ',')) {
            const auto dot = c.find('.');
            const auto p1 = c.find('(');
            inst.conn[trim(c.substr(dot + 1, p1 - dot - 1))] = trim(c.substr(p1 + 1, c.rfind(')') - p1 - 1));
        }
        m.instances.push_back(std::move(inst));
    }

    /// Rewrites nets of module `mod` under `prefix`; `binding` maps formal ports to parent nets.
    void flatten(const std::string& mod, const std::string& prefix, const std::map<std::string, std::string>& binding) {
        const auto& m = modules_.at(mod);
        auto net = [&](const std::string& local) {
            if (auto it = binding.find(local); it != binding.end()) return it->second;
            return prefix.empty() ? local : prefix + "." + local;
        };
        for (const auto& p : m.prims) {
            Gate g{p.type, net(p.out), {}};
            for (const auto& i : p.ins) g.ins.push_back(net(i));
            gates_.push_back(std::move(g));
        }
        for (const auto& inst : m.instances) {
            std::map<std::string, std::string> b;
            for (const auto& [formal, actual] : inst.conn) b[formal] = net(actual);
            flatten(inst.module, prefix.empty() ? inst.name : prefix + "." + inst.name, b);
        }
    }

    /// Topological order of gates; throws on undriven nets or combinational loops.
    void order() {
        std::set<std::string> known(inputs_.begin(), inputs_.end());
        std::vector<Gate> sorted;
        std::vector<bool> done(gates_.size(), false);
        for (std::size_t pass = 0; sorted.size() < gates_.size(); ++pass) {
            bool progress = false;
            for (std::size_t i = 0; i < gates_.size(); ++i) {
                if (done[i]) continue;
                if (std::all_of(gates_[i].ins.begin(), gates_[i].ins.end(), [&](const std::string& s) { return known.count(s) > 0; })) {
                    if (known.count(gates_[i].out)) throw std::runtime_error("net driven twice: " + gates_[i].out);
                    known.insert(gates_[i].out);
                    sorted.push_back(gates_[i]);
                    done[i] = true;
                    progress = true;
                }
            }
            if (!progress) throw std::runtime_error("undriven net or loop in netlist");
        }
        for (const auto& o : outputs_)
            if (!known.count(o)) throw std::runtime_error("output not driven: " + o);
        gates_ = std::move(sorted);

        std::map<std::string, int> ids;
        auto id = [&](const std::string& netname) {
            auto [it, fresh] = ids.emplace(netname, static_cast<int>(ids.size()));
            return it->second;
        };
        for (const auto& i : inputs_) input_ids_.push_back(id(i));
        for (const auto& g : gates_) {
            Compiled c{g.type == "and" ? 'a' : g.type == "or" ? 'o' : 'x', 0, {}};
            for (const auto& i : g.ins) c.ins.push_back(id(i));
            c.out = id(g.out);
            compiled_.push_back(std::move(c));
        }
        for (const auto& o : outputs_) output_ids_.push_back(id(o));
        net_count_ = ids.size();
    }

    struct Compiled {
        char type;
        int out;
        std::vector<int> ins;
    };
    std::vector<Compiled> compiled_;
    std::vector<int> input_ids_, output_ids_;
    std::size_t net_count_ = 0;

    std::map<std::string, Module> modules_;
    std::string top_name_;
    std::vector<std::string> inputs_, outputs_;
    std::vector<Gate> gates_;
};

/// Evaluates an n-bit adder netlist (ports a, b, sum, cout) on integers.
inline std::uint64_t add_with_netlist(const Netlist& net, int n, std::uint64_t a, std::uint64_t b) {
    std::vector<int> in(static_cast<std::size_t>(2 * n));
    for (int i = 0; i < n; ++i) {
        in[static_cast<std::size_t>(i)] = static_cast<int>((a >> i) & 1U);
        in[static_cast<std::size_t>(n + i)] = static_cast<int>((b >> i) & 1U);
    }
    const auto out = net.run(in);
    std::uint64_t s = 0;
    for (int i = 0; i <= n; ++i) s |= static_cast<std::uint64_t>(out[static_cast<std::size_t>(i)]) << i;
    return s;
}

}  // namespace oracle
