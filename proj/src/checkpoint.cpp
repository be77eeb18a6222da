#include "d2q/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "d2q/error.hpp"

namespace d2q::nn {
namespace {

void put_le(std::ostream& out, double value) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(value);
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xffu);
    out.write(reinterpret_cast<const char*>(bytes), 8);
}

double get_le(std::istream& in) {
    unsigned char bytes[8];
    if (!in.read(reinterpret_cast<char*>(bytes), 8)) throw ContractError("checkpoint: truncated tensor data");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    return std::bit_cast<double>(bits);
}

void put_tensor(std::ostream& out, const std::string& name, std::size_t rows, std::size_t cols,
                std::span<const double> values) {
    out << "tensor " << name << ' ' << rows << ' ' << cols << '\n';
    for (double v : values) put_le(out, v);
}

std::string tensor_name(std::string_view net, std::size_t layer, const char* part) {
    std::ostringstream s;
    s << net << ".layer" << layer << '.' << part;
    return s.str();
}

}  // namespace

void write_checkpoint(std::ostream& out, const std::vector<NamedNet>& nets) {
    out << kCheckpointHeader << '\n';
    for (const auto& [name, net] : nets) {
        if (name.empty() || name.find_first_of(" \n\t") != std::string::npos)
            throw ContractError("checkpoint: tensor names must be non-empty and contain no whitespace");
        for (std::size_t l = 0; l < net->num_layers(); ++l) {
            const std::size_t in = net->layer_sizes()[l];
            const std::size_t outw = net->layer_sizes()[l + 1];
            put_tensor(out, tensor_name(name, l, "weight"), outw, in, net->weight(l));
            put_tensor(out, tensor_name(name, l, "bias"), 1, outw, net->bias(l));
        }
    }
    if (!out) throw ContractError("checkpoint: write failed");
}

void write_checkpoint(const std::string& path, const std::vector<NamedNet>& nets) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ContractError("checkpoint: cannot open " + path + " for writing");
    write_checkpoint(out, nets);
}

std::vector<TensorRecord> read_checkpoint(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line != kCheckpointHeader)
        throw ContractError("checkpoint: missing 'D2Q-CKPT v1' header");
    std::vector<TensorRecord> records;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream fields(line);
        std::string tag;
        TensorRecord rec;
        if (!(fields >> tag >> rec.name >> rec.rows >> rec.cols) || tag != "tensor")
            throw ContractError("checkpoint: malformed tensor record '" + line + "'");
        rec.values.resize(rec.rows * rec.cols);
        for (double& v : rec.values) v = get_le(in);
        records.push_back(std::move(rec));
    }
    return records;
}

std::vector<TensorRecord> read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ContractError("checkpoint: cannot open " + path);
    return read_checkpoint(in);
}

void restore_net(DenseNet& net, std::string_view name, const std::vector<TensorRecord>& records) {
    auto find = [&](const std::string& key) -> const TensorRecord& {
        auto it = std::find_if(records.begin(), records.end(),
                               [&](const TensorRecord& r) { return r.name == key; });
        if (it == records.end()) throw ContractError("checkpoint: missing tensor " + key);
        return *it;
    };
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        const std::size_t in = net.layer_sizes()[l];
        const std::size_t out = net.layer_sizes()[l + 1];
        const TensorRecord& w = find(tensor_name(name, l, "weight"));
        const TensorRecord& b = find(tensor_name(name, l, "bias"));
        if (w.rows != out || w.cols != in || b.rows != 1 || b.cols != out)
            throw ShapeError("checkpoint: tensor shape mismatch for " + std::string(name));
        std::copy(w.values.begin(), w.values.end(), net.mutable_weight(l).begin());
        std::copy(b.values.begin(), b.values.end(), net.mutable_bias(l).begin());
    }
}

}  // namespace d2q::nn
