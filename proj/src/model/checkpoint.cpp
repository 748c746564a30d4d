#include "prefixforge/model/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <type_traits>
#include <vector>

namespace prefixforge {

namespace {

constexpr std::array<char, 8> kMagic{'P', 'F', 'X', 'C', 'K', 'P', 'T', '\n'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void write_pod(std::ostream& out, T value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw CheckpointError("truncated checkpoint");
    return value;
}

template <typename Stored, typename Scalar>
void read_tensor(std::istream& in, Matrix<Scalar>& dst) {
    std::vector<Stored> buf(static_cast<std::size_t>(dst.size()));
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(Stored)));
    if (!in) throw CheckpointError("truncated tensor payload");
    for (std::size_t i = 0; i < buf.size(); ++i) dst.data()[i] = static_cast<Scalar>(buf[i]);
}

}  // namespace

template <typename Scalar>
void save_checkpoint(const std::filesystem::path& path, const PolicyModel<Scalar>& model,
                     const nlohmann::json& metadata) {
    const auto tensors = model.parameters().tensors();
    auto table = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, t] : tensors) {
        table.push_back({{"name", name}, {"rows", t->rows()}, {"cols", t->cols()}, {"offset", offset}});
        offset += static_cast<std::uint64_t>(t->size()) * sizeof(Scalar);
    }
    const nlohmann::json header = {{"version", kCheckpointVersion},
                                   {"dtype", std::is_same_v<Scalar, float> ? "f32" : "f64"},
                                   {"config", model.config()},
                                   {"metadata", metadata},
                                   {"tensors", table}};
    const std::string text = header.dump();

    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw CheckpointError("cannot open " + tmp.string() + " for writing");
        out.write(kMagic.data(), kMagic.size());
        write_pod<std::uint32_t>(out, kCheckpointVersion);
        write_pod<std::uint64_t>(out, text.size());
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        for (const auto& [name, t] : tensors)
            out.write(reinterpret_cast<const char*>(t->data()), static_cast<std::streamsize>(t->size() * sizeof(Scalar)));
        if (!out) throw CheckpointError("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

template <typename Scalar>
LoadedCheckpoint<Scalar> load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
    std::array<char, 8> magic{};
    in.read(magic.data(), magic.size());
    if (!in || magic != kMagic) throw CheckpointError(path.string() + " is not a prefixforge checkpoint");
    const auto version = read_pod<std::uint32_t>(in);
    if (version != kCheckpointVersion)
        throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    const auto header_size = read_pod<std::uint64_t>(in);
    std::string text(header_size, '\0');
    in.read(text.data(), static_cast<std::streamsize>(header_size));
    if (!in) throw CheckpointError("truncated checkpoint header");
    const auto header = nlohmann::json::parse(text, nullptr, false);
    if (header.is_discarded()) throw CheckpointError("corrupt checkpoint header");

    const auto config = header.at("config").get<ModelConfig>();
    const std::string dtype = header.at("dtype").get<std::string>();
    if (dtype != "f32" && dtype != "f64") throw CheckpointError("unknown dtype " + dtype);
    const std::size_t width = dtype == "f32" ? sizeof(float) : sizeof(double);

    auto params = ParameterSet<Scalar>::zeros(config);
    auto expected = params.tensors();
    const auto& table = header.at("tensors");
    if (table.size() != expected.size())
        throw CheckpointError("checkpoint has " + std::to_string(table.size()) + " tensors, config implies " +
                              std::to_string(expected.size()));
    const auto payload_start = in.tellg();
    for (std::size_t i = 0; i < expected.size(); ++i) {
        auto& [name, dst] = expected[i];
        const auto& entry = table[i];
        if (entry.at("name").get<std::string>() != name || entry.at("rows").get<Eigen::Index>() != dst->rows() ||
            entry.at("cols").get<Eigen::Index>() != dst->cols())
            throw CheckpointError("tensor " + entry.at("name").get<std::string>() + " does not match " + name);
        in.seekg(payload_start + static_cast<std::streamoff>(entry.at("offset").get<std::uint64_t>()));
        if (width == sizeof(float))
            read_tensor<float>(in, *dst);
        else
            read_tensor<double>(in, *dst);
    }
    return {PolicyModel<Scalar>(config, std::move(params)), header.value("metadata", nlohmann::json::object())};
}

template void save_checkpoint<float>(const std::filesystem::path&, const PolicyModel<float>&, const nlohmann::json&);
template void save_checkpoint<double>(const std::filesystem::path&, const PolicyModel<double>&,
                                      const nlohmann::json&);
template LoadedCheckpoint<float> load_checkpoint<float>(const std::filesystem::path&);
template LoadedCheckpoint<double> load_checkpoint<double>(const std::filesystem::path&);

}  // namespace prefixforge
