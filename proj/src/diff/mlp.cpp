#include "pimbpo/diff/mlp.hpp"

namespace pimbpo::ad {

Mlp::Mlp(std::string prefix, std::vector<Eigen::Index> sizes, bool activate_output)
    : prefix_(std::move(prefix)), sizes_(std::move(sizes)), activate_output_(activate_output) {
  if (sizes_.size() < 2) throw ContractViolation("Mlp needs at least input and output sizes");
}

std::vector<BlockShape> Mlp::shapes() const {
  std::vector<BlockShape> out;
  for (std::size_t i = 0; i + 1 < sizes_.size(); ++i) {
    out.push_back({prefix_ + "W" + std::to_string(i), sizes_[i], sizes_[i + 1], BlockRole::Weight});
    out.push_back({prefix_ + "b" + std::to_string(i), 1, sizes_[i + 1], BlockRole::Bias});
  }
  return out;
}

Var Mlp::forward(const TapeParams &params, Var x) const {
  if (x.cols() != sizes_.front()) throw ContractViolation("Mlp::forward: input width mismatch");
  Var h = x;
  const std::size_t layers = sizes_.size() - 1;
  for (std::size_t i = 0; i < layers; ++i) {
    const std::string idx = std::to_string(i);
    h = add_row(matmul(h, params[prefix_ + "W" + idx]), params[prefix_ + "b" + idx]);
    if (i + 1 < layers || activate_output_) h = tanh(h);
  }
  return h;
}

Matrix Mlp::evaluate(const ParamVector &params, const Matrix &x) const {
  Tape tape;
  TapeParams bound(tape, params);
  return forward(bound, tape.constant(x)).value();
}

} // namespace pimbpo::ad
