#pragma once

#include <Eigen/Core>

#include <cstdint>

namespace pimbpo::pinn {

/// Latin hypercube sample of `count` points in the box [lb, ub], one row per
/// point. Every axis is cut into `count` equal strata holding exactly one
/// point each; a degenerate axis (lb == ub) is held constant.
[[nodiscard]] Eigen::MatrixXd lhs_sample(int count, const Eigen::VectorXd &lb, const Eigen::VectorXd &ub,
                                         std::uint64_t seed);

} // namespace pimbpo::pinn
