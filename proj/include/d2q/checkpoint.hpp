#pragma once

// Checkpoint file layout:
//
//   D2Q-CKPT v1\n
//   then, per tensor:
//   tensor <name> <rows> <cols>\n
//   rows * cols little-endian IEEE-754 binary64 values, row-major
//
// A network named "q1" is stored as q1.layer<i>.weight (out x in) and
// q1.layer<i>.bias (1 x out) for each layer i.

#include <cstddef>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "d2q/nn.hpp"

namespace d2q::nn {

inline constexpr std::string_view kCheckpointHeader = "D2Q-CKPT v1";

struct TensorRecord {
    std::string name;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;
};

using NamedNet = std::pair<std::string, const DenseNet*>;

void write_checkpoint(std::ostream& out, const std::vector<NamedNet>& nets);
void write_checkpoint(const std::string& path, const std::vector<NamedNet>& nets);

// Throws ContractError on a malformed stream.
std::vector<TensorRecord> read_checkpoint(std::istream& in);
std::vector<TensorRecord> read_checkpoint(const std::string& path);

// Copy the tensors for `name` into a network of matching shape. Throws ShapeError
// on a shape mismatch and ContractError when a tensor is missing.
void restore_net(DenseNet& net, std::string_view name, const std::vector<TensorRecord>& records);

}  // namespace d2q::nn
