#include "prefixforge/hardware.hpp"

#include <algorithm>
#include <cctype>
#include <array>
#include <cerrno>
#include <condition_variable>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <vector>

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

namespace prefixforge {

namespace {

struct NodeRef {
    int level;
    Coordinate at;
};

std::vector<NodeRef> merges_in_level_order(const PrefixGraph& g, const NodeLevels& lv) {
    std::vector<NodeRef> order;
    for (int r = 0; r < g.width(); ++r)
        for (int c : g.row_columns(r))
            if (c != r) order.push_back({lv.at(r, c), {r, c}});
    // Stable: ties keep scan order.
    std::stable_sort(order.begin(), order.end(), [](const NodeRef& x, const NodeRef& y) { return x.level < y.level; });
    return order;
}

std::string wire(char kind, Coordinate c) {
    return std::string(1, kind) + '_' + std::to_string(c.row) + '_' + std::to_string(c.col);
}

bool is_identifier(const std::string& s) {
    if (s.empty() || !(std::isalpha(static_cast<unsigned char>(s[0])) || s[0] == '_')) return false;
    return std::all_of(s.begin(), s.end(),
                       [](char ch) { return std::isalnum(static_cast<unsigned char>(ch)) || ch == '_'; });
}

}  // namespace

AddResult simulate_add(const PrefixGraph& g, std::uint64_t a, std::uint64_t b) {
    const int n = g.width();
    const auto lv = levels(g);  // validates
    std::vector<SignalPair> sig(static_cast<std::size_t>(n * n));
    auto at = [&](Coordinate c) -> SignalPair& { return sig[static_cast<std::size_t>(c.row * n + c.col)]; };

    for (int i = 0; i < n; ++i) {
        const bool ai = (a >> i) & 1U;
        const bool bi = (b >> i) & 1U;
        at({i, i}) = {ai && bi, ai != bi};
    }
    for (const auto& node : merges_in_level_order(g, lv)) {
        const auto par = resolve_parents(g, node.at);
        const SignalPair hi = at(par.msp);
        const SignalPair lo = at(par.lsp);
        at(node.at) = {hi.g || (hi.p && lo.g), hi.p && lo.p};
    }

    AddResult out;
    out.sum = at({0, 0}).p ? 1U : 0U;
    for (int j = 1; j < n; ++j) {
        const bool s = at({j, j}).p != at({j - 1, 0}).g;
        if (s) out.sum |= std::uint64_t{1} << j;
    }
    out.carry_out = at({n - 1, 0}).g;
    return out;
}

std::string export_netlist(const PrefixGraph& g, const std::string& name) {
    if (!is_identifier(name)) throw std::invalid_argument("netlist name is not a Verilog identifier: " + name);
    const int n = g.width();
    const auto lv = levels(g);
    std::ostringstream os;
    os << "// " << name << ": " << n << "-bit prefix adder, size " << size(g) << ", depth " << lv.max_level() + 1
       << "\n\n";
    os << "module pfx_input_cell(input a, input b, output g, output p);\n"
          "  and u_g (g, a, b);\n"
          "  xor u_p (p, a, b);\n"
          "endmodule\n\n";
    os << "module pfx_merge_cell(input gh, input ph, input gl, input pl, output g, output p);\n"
          "  wire t;\n"
          "  and u_t (t, ph, gl);\n"
          "  or  u_g (g, gh, t);\n"
          "  and u_p (p, ph, pl);\n"
          "endmodule\n\n";
    os << "module " << name << "(input [" << n - 1 << ":0] a, input [" << n - 1 << ":0] b, output [" << n - 1
       << ":0] sum, output cout);\n";
    for (int r = 0; r < n; ++r)
        for (int c : g.row_columns(r)) os << "  wire " << wire('g', {r, c}) << ", " << wire('p', {r, c}) << ";\n";
    for (int i = 0; i < n; ++i)
        os << "  pfx_input_cell in_" << i << " (.a(a[" << i << "]), .b(b[" << i << "]), .g(" << wire('g', {i, i})
           << "), .p(" << wire('p', {i, i}) << "));\n";
    for (const auto& node : merges_in_level_order(g, lv)) {
        const auto par = resolve_parents(g, node.at);
        os << "  pfx_merge_cell m_" << node.at.row << '_' << node.at.col << " (.gh(" << wire('g', par.msp)
           << "), .ph(" << wire('p', par.msp) << "), .gl(" << wire('g', par.lsp) << "), .pl(" << wire('p', par.lsp)
           << "), .g(" << wire('g', node.at) << "), .p(" << wire('p', node.at) << "));\n";
    }
    os << "  buf s_0 (sum[0], " << wire('p', {0, 0}) << ");\n";
    for (int j = 1; j < n; ++j)
        os << "  xor s_" << j << " (sum[" << j << "], " << wire('p', {j, j}) << ", " << wire('g', {j - 1, 0})
           << ");\n";
    os << "  buf c_out (cout, " << wire('g', {n - 1, 0}) << ");\n";
    os << "endmodule\n";
    return os.str();
}

std::optional<HookConfig> hook_from_environment() {
    const char* cmd = std::getenv(kSynthCommandEnv);
    if (cmd == nullptr || *cmd == '\0') return std::nullopt;
    return HookConfig{cmd};
}

namespace {

class HookLimiter {
public:
    void set_limit(int limit) {
        std::lock_guard lock(mutex_);
        limit_ = std::max(1, limit);
        cv_.notify_all();
    }
    void acquire() {
        std::unique_lock lock(mutex_);
        cv_.wait(lock, [&] { return running_ < limit_; });
        ++running_;
    }
    void release() {
        std::lock_guard lock(mutex_);
        --running_;
        cv_.notify_one();
    }

private:
    std::mutex mutex_;
    std::condition_variable cv_;
    int limit_ = 4;
    int running_ = 0;
};

HookLimiter& limiter() {
    static HookLimiter instance;
    return instance;
}

struct LimiterSlot {
    LimiterSlot() { limiter().acquire(); }
    ~LimiterSlot() { limiter().release(); }
    LimiterSlot(const LimiterSlot&) = delete;
    LimiterSlot& operator=(const LimiterSlot&) = delete;
};

class TempFile {
public:
    explicit TempFile(const std::string& contents) {
        const auto dir = std::filesystem::temp_directory_path() / "prefixforge-XXXXXX.v";
        std::string pattern = dir.string();
        std::vector<char> buf(pattern.begin(), pattern.end());
        buf.push_back('\0');
        const int fd = ::mkstemps(buf.data(), 2);
        if (fd < 0) throw SynthesisError(std::string("cannot create netlist file: ") + std::strerror(errno), "");
        ::close(fd);
        path_ = buf.data();
        std::ofstream out(path_, std::ios::binary);
        out << contents;
        if (!out) throw SynthesisError("cannot write netlist file " + path_, "");
    }
    ~TempFile() { std::remove(path_.c_str()); }
    TempFile(const TempFile&) = delete;
    TempFile& operator=(const TempFile&) = delete;
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char ch : s) {
        if (ch == '\'')
            out += "'\\''";
        else
            out += ch;
    }
    return out + "'";
}

struct ChildOutput {
    std::string out;
    std::string err;
    int status = 0;
    bool timed_out = false;
};

ChildOutput run_with_timeout(const std::string& command, std::chrono::milliseconds timeout) {
    int out_pipe[2];
    int err_pipe[2];
    if (::pipe(out_pipe) != 0) throw SynthesisError("pipe failed", "");
    if (::pipe(err_pipe) != 0) {
        ::close(out_pipe[0]);
        ::close(out_pipe[1]);
        throw SynthesisError("pipe failed", "");
    }
    const pid_t pid = ::fork();
    if (pid < 0) throw SynthesisError("fork failed", "");
    if (pid == 0) {
        ::setpgid(0, 0);
        ::dup2(out_pipe[1], STDOUT_FILENO);
        ::dup2(err_pipe[1], STDERR_FILENO);
        ::close(out_pipe[0]);
        ::close(out_pipe[1]);
        ::close(err_pipe[0]);
        ::close(err_pipe[1]);
        ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
        ::_exit(127);
    }
    ::setpgid(pid, pid);
    ::close(out_pipe[1]);
    ::close(err_pipe[1]);

    ChildOutput result;
    const auto deadline = std::chrono::steady_clock::now() + timeout;
    std::array<pollfd, 2> fds{{{out_pipe[0], POLLIN, 0}, {err_pipe[0], POLLIN, 0}}};
    int open_fds = 2;
    std::array<char, 4096> buf{};
    while (open_fds > 0) {
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0) {
            result.timed_out = true;
            break;
        }
        const int ready = ::poll(fds.data(), fds.size(), static_cast<int>(left.count()));
        if (ready < 0) {
            if (errno == EINTR) continue;
            break;
        }
        for (std::size_t i = 0; i < fds.size(); ++i) {
            if (fds[i].fd < 0 || !(fds[i].revents & (POLLIN | POLLHUP | POLLERR))) continue;
            const ssize_t got = ::read(fds[i].fd, buf.data(), buf.size());
            if (got <= 0) {
                ::close(fds[i].fd);
                fds[i].fd = -1;
                --open_fds;
            } else {
                (i == 0 ? result.out : result.err).append(buf.data(), static_cast<std::size_t>(got));
            }
        }
    }
    if (result.timed_out) ::kill(-pid, SIGKILL);
    for (auto& f : fds)
        if (f.fd >= 0) ::close(f.fd);
    int status = 0;
    while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
    }
    result.status = status;
    return result;
}

std::optional<SynthesisResult> parse_metrics(const std::string& text) {
    auto try_parse = [](const std::string& s) -> std::optional<SynthesisResult> {
        const auto j = nlohmann::json::parse(s, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("area") || !j.contains("delay")) return std::nullopt;
        if (!j["area"].is_number() || !j["delay"].is_number()) return std::nullopt;
        return SynthesisResult{j["area"].get<double>(), j["delay"].get<double>(), {}};
    };
    if (auto whole = try_parse(text)) return whole;
    std::istringstream lines(text);
    std::string line;
    std::optional<SynthesisResult> last;
    while (std::getline(lines, line))
        if (auto r = try_parse(line)) last = r;
    return last;
}

}  // namespace

void set_max_concurrent_hooks(int limit) { limiter().set_limit(limit); }

SynthesisResult synthesize_external(const std::string& netlist, const HookConfig& hook) {
    if (hook.command.empty()) throw SynthesisError("no synthesis hook configured", "");
    LimiterSlot slot;
    TempFile file(netlist);
    const auto child = run_with_timeout(hook.command + " " + shell_quote(file.path()), hook.timeout);
    std::string log = child.out;
    if (!child.err.empty()) log += "\n[stderr]\n" + child.err;

    if (child.timed_out)
        throw SynthesisError("synthesis hook timed out after " + std::to_string(hook.timeout.count()) + " ms", log);
    if (!WIFEXITED(child.status) || WEXITSTATUS(child.status) != 0)
        throw SynthesisError("synthesis hook failed with status " + std::to_string(child.status), log);
    auto metrics = parse_metrics(child.out);
    if (!metrics) throw SynthesisError("synthesis hook printed no {\"area\", \"delay\"} object", log);
    if (!(metrics->area > 0.0) || !(metrics->delay > 0.0))
        throw SynthesisError("synthesis hook reported non-positive area or delay", log);
    metrics->tool_log = std::move(log);
    return *metrics;
}

}  // namespace prefixforge
