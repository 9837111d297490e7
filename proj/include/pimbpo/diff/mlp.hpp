#pragma once

#include "pimbpo/diff/init.hpp"
#include "pimbpo/diff/params.hpp"

#include <string>
#include <vector>

namespace pimbpo::ad {

/// Dense feed-forward stack with tanh hidden activations. Blocks are named
/// `<prefix>W<i>` and `<prefix>b<i>`.
class Mlp {
public:
  Mlp() = default;
  Mlp(std::string prefix, std::vector<Eigen::Index> sizes, bool activate_output = false);

  [[nodiscard]] std::vector<BlockShape> shapes() const;
  [[nodiscard]] Eigen::Index input_size() const { return sizes_.front(); }
  [[nodiscard]] Eigen::Index output_size() const { return sizes_.back(); }

  [[nodiscard]] Var forward(const TapeParams &params, Var x) const;
  /// Evaluates through a private tape so values match forward() exactly.
  [[nodiscard]] Matrix evaluate(const ParamVector &params, const Matrix &x) const;

private:
  std::string prefix_;
  std::vector<Eigen::Index> sizes_;
  bool activate_output_ = false;
};

} // namespace pimbpo::ad
