#include "pimbpo/diff/init.hpp"

#include <cmath>
#include <random>

namespace pimbpo::ad {

ParamVector xavier_normal_init(const std::vector<BlockShape> &shapes, std::uint64_t seed) {
  if (shapes.empty()) throw ContractViolation("xavier_normal_init: no shapes");
  std::mt19937_64 rng(seed);
  ParamVector out;
  for (const auto &s : shapes) {
    Matrix m = Matrix::Zero(s.rows, s.cols);
    if (s.role == BlockRole::Weight) {
      const double stddev = std::sqrt(2.0 / static_cast<double>(s.rows + s.cols));
      std::normal_distribution<double> normal(0.0, stddev);
      for (Eigen::Index r = 0; r < s.rows; ++r)
        for (Eigen::Index c = 0; c < s.cols; ++c) m(r, c) = normal(rng);
    }
    out.add(s.name, std::move(m));
  }
  return out;
}

ParamVector uniform_fan_in_init(const std::vector<BlockShape> &shapes, std::uint64_t seed) {
  if (shapes.empty()) throw ContractViolation("uniform_fan_in_init: no shapes");
  std::mt19937_64 rng(seed);
  ParamVector out;
  Eigen::Index last_fan_in = 1;
  for (const auto &s : shapes) {
    const Eigen::Index fan_in = s.role == BlockRole::Weight ? s.rows : last_fan_in;
    if (s.role == BlockRole::Weight) last_fan_in = s.rows;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> uniform(-bound, bound);
    Matrix m(s.rows, s.cols);
    for (Eigen::Index r = 0; r < s.rows; ++r)
      for (Eigen::Index c = 0; c < s.cols; ++c) m(r, c) = uniform(rng);
    out.add(s.name, std::move(m));
  }
  return out;
}

} // namespace pimbpo::ad
