#include "prefixforge/model/attention_dump.hpp"

#include <fstream>

#include <nlohmann/json.hpp>

#include "prefixforge/graph_io.hpp"

namespace prefixforge {

LayerSelector LayerSelector::parse(const std::string& text) {
    if (text.empty() || text == "all") return {};
    const auto colon = text.find(':');
    LayerSelector sel{text.substr(0, colon), -1};
    if (sel.stack != "shared" && sel.stack != "row" && sel.stack != "col")
        throw std::out_of_range("unknown layer stack '" + sel.stack + "' (expected shared, row or col)");
    if (colon != std::string::npos) {
        const std::string idx = text.substr(colon + 1);
        if (idx.empty() || idx.find_first_not_of("0123456789") != std::string::npos)
            throw std::out_of_range("malformed layer index in '" + text + "'");
        sel.index = std::stoi(idx);
    }
    return sel;
}

bool LayerSelector::matches(const std::string& block_stack, int block_index) const {
    if (!stack.empty() && stack != block_stack) return false;
    return index < 0 || index == block_index;
}

template <typename Scalar>
std::vector<BlockAttention<Scalar>> select_attention(const PolicyModel<Scalar>& model, const CoordinateSequence& seq,
                                                     const LayerSelector& selector) {
    require_valid_sequence(seq, false);
    std::vector<BlockAttention<Scalar>> picked;
    for (auto& block : model.attention(seq.coords))
        if (selector.matches(block.stack, block.index)) picked.push_back(std::move(block));
    if (picked.empty()) throw std::out_of_range("layer selector matches no block");
    return picked;
}

template <typename Scalar>
void write_attention(const std::filesystem::path& path, const CoordinateSequence& seq,
                     const std::vector<BlockAttention<Scalar>>& blocks) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path.string());
    if (path.extension() == ".csv") {
        out << "stack,layer,head,query,key,score\n";
        for (const auto& block : blocks)
            for (std::size_t h = 0; h < block.heads.size(); ++h) {
                const auto& m = block.heads[h];
                for (Eigen::Index q = 0; q < m.rows(); ++q)
                    for (Eigen::Index k = 0; k <= q; ++k)
                        out << block.stack << ',' << block.index << ',' << h << ',' << q << ',' << k << ','
                            << static_cast<double>(m(q, k)) << '\n';
            }
        return;
    }
    auto layers = nlohmann::json::array();
    for (const auto& block : blocks) {
        auto heads = nlohmann::json::array();
        for (const auto& m : block.heads) {
            auto rows = nlohmann::json::array();
            for (Eigen::Index q = 0; q < m.rows(); ++q) {
                std::vector<double> row(static_cast<std::size_t>(m.cols()));
                for (Eigen::Index k = 0; k < m.cols(); ++k) row[static_cast<std::size_t>(k)] = static_cast<double>(m(q, k));
                rows.push_back(std::move(row));
            }
            heads.push_back(std::move(rows));
        }
        layers.push_back({{"stack", block.stack}, {"index", block.index}, {"heads", std::move(heads)}});
    }
    auto doc = sequence_to_json(seq);
    doc["layers"] = std::move(layers);
    out << doc.dump() << '\n';
}

template std::vector<BlockAttention<float>> select_attention<float>(const PolicyModel<float>&,
                                                                    const CoordinateSequence&, const LayerSelector&);
template std::vector<BlockAttention<double>> select_attention<double>(const PolicyModel<double>&,
                                                                      const CoordinateSequence&, const LayerSelector&);
template void write_attention<float>(const std::filesystem::path&, const CoordinateSequence&,
                                     const std::vector<BlockAttention<float>>&);
template void write_attention<double>(const std::filesystem::path&, const CoordinateSequence&,
                                      const std::vector<BlockAttention<double>>&);

}  // namespace prefixforge
