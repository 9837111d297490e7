#pragma once

#include "pimbpo/diff/params.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace pimbpo::ad {

enum class BlockRole { Weight, Bias };

/// Shape of one parameter block. Weights are stored fan_in x fan_out so that
/// a layer computes `x * W + b` on row-major batches.
struct BlockShape {
  std::string name;
  Eigen::Index rows;
  Eigen::Index cols;
  BlockRole role;
};

/// Weights ~ N(0, 2 / (fan_in + fan_out)), biases zero.
ParamVector xavier_normal_init(const std::vector<BlockShape> &shapes, std::uint64_t seed);

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases, matching
/// the stock initialization of a dense layer in common deep-learning
/// frameworks. A bias takes the fan-in of the weight block preceding it.
ParamVector uniform_fan_in_init(const std::vector<BlockShape> &shapes, std::uint64_t seed);

} // namespace pimbpo::ad
