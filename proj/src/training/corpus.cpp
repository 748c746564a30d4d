#include "prefixforge/training/corpus.hpp"

#include <fstream>
#include <string>

#include "prefixforge/graph_io.hpp"

namespace prefixforge {

std::vector<CoordinateSequence> generate_corpus(int width, std::size_t count, Rng& rng) {
    std::vector<CoordinateSequence> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(random_walk(width, rng));
    return out;
}

namespace {

std::ofstream open_for_write(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    return out;
}

}  // namespace

void write_corpus(const std::filesystem::path& path, int width, std::size_t count, Rng& rng) {
    auto out = open_for_write(path);
    for (std::size_t i = 0; i < count; ++i) out << dump_compact(sequence_to_json(random_walk(width, rng))) << '\n';
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

void write_corpus(const std::filesystem::path& path, std::span<const CoordinateSequence> corpus) {
    auto out = open_for_write(path);
    for (const auto& seq : corpus) out << dump_compact(sequence_to_json(seq)) << '\n';
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

std::vector<CoordinateSequence> read_corpus(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open corpus " + path.string());
    std::vector<CoordinateSequence> out;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (line.empty()) continue;
        try {
            auto seq = sequence_from_json(nlohmann::json::parse(line));
            require_valid_sequence(seq);
            out.push_back(std::move(seq));
        } catch (const std::exception& e) {
            throw std::runtime_error(path.string() + ":" + std::to_string(number) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace prefixforge
