#pragma once

#include <filesystem>
#include <vector>

#include "prefixforge/legality.hpp"

namespace prefixforge {

/// `count` uniform random walks at `width`. No deduplication.
std::vector<CoordinateSequence> generate_corpus(int width, std::size_t count, Rng& rng);

/// Streams `count` random walks to a JSONL file, one {"width","seq"} object per line.
void write_corpus(const std::filesystem::path& path, int width, std::size_t count, Rng& rng);
void write_corpus(const std::filesystem::path& path, std::span<const CoordinateSequence> corpus);

/// Reads and validates a corpus file. Throws std::runtime_error naming the bad line.
std::vector<CoordinateSequence> read_corpus(const std::filesystem::path& path);

}  // namespace prefixforge
