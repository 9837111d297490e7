#include "pimbpo/pinn/lhs.hpp"

#include "pimbpo/diff/errors.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <vector>

namespace pimbpo::pinn {

Eigen::MatrixXd lhs_sample(int count, const Eigen::VectorXd &lb, const Eigen::VectorXd &ub,
                           std::uint64_t seed) {
  if (count < 1) throw ad::ContractViolation("lhs_sample: count must be at least 1");
  if (lb.size() != ub.size() || (ub - lb).minCoeff() < 0.0)
    throw ad::ContractViolation("lhs_sample: invalid box");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(0.0, 1.0);
  Eigen::MatrixXd out(count, lb.size());
  std::vector<int> strata(static_cast<std::size_t>(count));
  for (Eigen::Index d = 0; d < lb.size(); ++d) {
    std::iota(strata.begin(), strata.end(), 0);
    std::shuffle(strata.begin(), strata.end(), rng);
    const double width = ub[d] - lb[d];
    for (int i = 0; i < count; ++i) {
      const double u = (strata[static_cast<std::size_t>(i)] + jitter(rng)) / count;
      out(i, d) = width == 0.0 ? lb[d] : std::min(ub[d], lb[d] + u * width);
    }
  }
  return out;
}

} // namespace pimbpo::pinn
