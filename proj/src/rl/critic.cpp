#include "pimbpo/rl/critic.hpp"

#include "pimbpo/diff/init.hpp"

#include <stdexcept>

namespace pimbpo::rl {

Eigen::RowVectorXd features(const cstr::Observation &obs) {
  if (obs.prices.size() < kHorizonPrices) throw std::invalid_argument("observation carries too few prices");
  const Eigen::VectorXd horizon = obs.prices.head(kHorizonPrices);
  Eigen::RowVectorXd f(kFeatureWidth);
  f << obs.x_scaled[0], obs.x_scaled[1], obs.storage, horizon[0], horizon.maxCoeff() - horizon.minCoeff(),
      horizon.transpose();
  return f;
}

Matrix features(const std::vector<cstr::Observation> &obs) {
  Matrix out(static_cast<Eigen::Index>(obs.size()), kFeatureWidth);
  for (std::size_t i = 0; i < obs.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = features(obs[i]);
  return out;
}

BranchedNet::BranchedNet(std::string prefix, Eigen::Index outputs)
    : state_(prefix + "x.", {2, 24, 24}, true), storage_(prefix + "l.", {1, 8, 8}, true),
      summary_(prefix + "p.", {2, 8, 8}, true), horizon_(prefix + "h.", {kHorizonPrices, 24, 24}, true),
      trunk_(prefix + "t.", {64, 64, 64, outputs}) {}

std::vector<ad::BlockShape> BranchedNet::shapes() const {
  std::vector<ad::BlockShape> out;
  for (const ad::Mlp *m : {&state_, &storage_, &summary_, &horizon_, &trunk_}) {
    const auto s = m->shapes();
    out.insert(out.end(), s.begin(), s.end());
  }
  return out;
}

ParamVector BranchedNet::init(std::uint64_t seed) const { return ad::uniform_fan_in_init(shapes(), seed); }

ad::Var BranchedNet::branch(const ad::TapeParams &p, Branch b, ad::Var f) const {
  switch (b) {
  case Branch::State: return state_.forward(p, ad::cols(f, 0, 2));
  case Branch::Storage: return storage_.forward(p, ad::cols(f, 2, 1));
  case Branch::PriceSummary: return summary_.forward(p, ad::cols(f, 3, 2));
  case Branch::Horizon: return horizon_.forward(p, ad::cols(f, 5, kHorizonPrices));
  }
  throw std::logic_error("unknown branch");
}

ad::Var BranchedNet::forward(const ad::TapeParams &p, ad::Var f) const {
  if (f.cols() != kFeatureWidth) throw std::invalid_argument("BranchedNet: feature width mismatch");
  ad::Var joined = ad::hcat(ad::hcat(branch(p, Branch::State, f), branch(p, Branch::Storage, f)),
                            ad::hcat(branch(p, Branch::PriceSummary, f), branch(p, Branch::Horizon, f)));
  return trunk_.forward(p, joined);
}

Matrix BranchedNet::evaluate(const ParamVector &p, const Matrix &f) const {
  ad::Tape tape;
  ad::TapeParams bound(tape, p);
  return forward(bound, tape.constant(f)).value();
}

Matrix BranchedNet::branch_output(const ParamVector &p, Branch b, const Matrix &f) const {
  ad::Tape tape;
  ad::TapeParams bound(tape, p);
  return branch(bound, b, tape.constant(f)).value();
}

} // namespace pimbpo::rl
