#include "prefixforge/training/design_db.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <numeric>

#include <spdlog/spdlog.h>

#include "prefixforge/graph_io.hpp"

namespace prefixforge {

const char* to_string(DesignSource source) {
    switch (source) {
        case DesignSource::Sampled: return "sampled";
        case DesignSource::Retrieved: return "retrieved";
        case DesignSource::Seeded: return "seeded";
    }
    return "?";
}

DesignSource design_source_from_string(const std::string& text) {
    if (text == "sampled") return DesignSource::Sampled;
    if (text == "retrieved") return DesignSource::Retrieved;
    if (text == "seeded") return DesignSource::Seeded;
    throw std::invalid_argument("unknown design source '" + text + "'");
}

nlohmann::json to_json(const DesignRecord& r) {
    auto j = sequence_to_json(r.sequence);
    j["size"] = r.size;
    j["depth"] = r.depth;
    j["area"] = r.area;
    j["delay"] = r.delay;
    j["reward"] = r.reward;
    j["iteration"] = r.iteration;
    j["source"] = to_string(r.source);
    j["proxy_fallback"] = r.proxy_fallback;
    return j;
}

DesignRecord record_from_json(const nlohmann::json& j) {
    DesignRecord r;
    r.sequence = sequence_from_json(j);
    r.size = j.at("size").get<int>();
    r.depth = j.at("depth").get<int>();
    r.area = j.at("area").get<double>();
    r.delay = j.at("delay").get<double>();
    r.reward = j.at("reward").get<double>();
    r.iteration = j.at("iteration").get<int>();
    r.source = design_source_from_string(j.at("source").get<std::string>());
    r.proxy_fallback = j.value("proxy_fallback", false);
    return r;
}

DesignRecord proxy_record(const CoordinateSequence& seq, int iteration, DesignSource source) {
    const auto g = sequence_to_graph(seq);
    DesignRecord r;
    r.sequence = seq;
    r.size = size(g);
    r.depth = depth(g);
    r.area = r.size;
    r.delay = r.depth;
    r.reward = -r.area * r.delay;
    r.iteration = iteration;
    r.source = source;
    return r;
}

bool better_design(const DesignRecord& a, const DesignRecord& b) {
    if (a.adp() != b.adp()) return a.adp() < b.adp();
    if (a.size != b.size) return a.size < b.size;
    return a.iteration < b.iteration;
}

DesignDatabase DesignDatabase::load(const std::filesystem::path& path) {
    DesignDatabase db;
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open design database " + path.string());
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded()) {
            if (in.peek() == std::char_traits<char>::eof()) {
                spdlog::warn("{}:{}: skipping torn final line", path.string(), number);
                break;
            }
            throw std::runtime_error(path.string() + ":" + std::to_string(number) + ": malformed record");
        }
        db.insert(record_from_json(j));
    }
    return db;
}

DesignDatabase DesignDatabase::open(const std::filesystem::path& path) {
    DesignDatabase db = std::filesystem::exists(path) ? load(path) : DesignDatabase{};
    if (std::filesystem::exists(path)) {
        // Drop a torn tail so the next append starts on a fresh line.
        std::ifstream in(path, std::ios::binary);
        const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        if (!text.empty() && text.back() != '\n') {
            const auto keep = text.find_last_of('\n');
            const auto start = keep == std::string::npos ? 0 : keep + 1;
            if (nlohmann::json::accept(text.substr(start))) std::ofstream(path, std::ios::app) << '\n';
            else std::filesystem::resize_file(path, start);
        }
    }
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream touch(path, std::ios::app);
    if (!touch) throw std::runtime_error("cannot open design database " + path.string() + " for appending");
    db.path_ = path;
    return db;
}

bool DesignDatabase::insert(const DesignRecord& record) {
    require_valid_sequence(record.sequence);
    auto key = design_key(record.sequence);
    if (index_.contains(key)) return false;
    if (path_) {
        std::ofstream out(*path_, std::ios::app);
        out << dump_compact(to_json(record)) << '\n';
        if (!out) throw std::runtime_error("append failed for " + path_->string());
    }
    index_.emplace(std::move(key), records_.size());
    records_.push_back(record);
    return true;
}

std::size_t DesignDatabase::seed(std::span<const PrefixGraph> designs) {
    std::size_t stored = 0;
    for (const auto& g : designs) stored += insert(proxy_record(graph_to_sequence(g), 0, DesignSource::Seeded)) ? 1 : 0;
    return stored;
}

std::vector<DesignRecord> DesignDatabase::top_k_by_adp(std::size_t k) const {
    std::vector<std::size_t> order(records_.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    k = std::min(k, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t a, std::size_t b) {
                          if (better_design(records_[a], records_[b])) return true;
                          if (better_design(records_[b], records_[a])) return false;
                          return a < b;
                      });
    std::vector<DesignRecord> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) out.push_back(records_[order[i]]);
    return out;
}

bool DesignDatabase::contains(const CoordinateSequence& seq) const { return index_.contains(design_key(seq)); }

std::size_t DesignDatabase::count(DesignSource source) const {
    return static_cast<std::size_t>(
        std::count_if(records_.begin(), records_.end(), [source](const DesignRecord& r) { return r.source == source; }));
}

std::optional<DesignRecord> DesignDatabase::best() const {
    auto top = top_k_by_adp(1);
    if (top.empty()) return std::nullopt;
    return top.front();
}

}  // namespace prefixforge
