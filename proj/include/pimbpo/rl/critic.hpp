#pragma once

#include "pimbpo/cstr/env.hpp"
#include "pimbpo/diff/mlp.hpp"

#include <vector>

namespace pimbpo::rl {

using ad::Matrix;
using ad::ParamVector;

/// Feature row layout shared by the critic and the MLP policy:
/// [c, T (scaled) | storage | p_t, max-min of the horizon | 10 horizon prices].
/// Storage and prices stay in natural units.
inline constexpr Eigen::Index kHorizonPrices = 10;
inline constexpr Eigen::Index kFeatureWidth = 5 + kHorizonPrices;

[[nodiscard]] Eigen::RowVectorXd features(const cstr::Observation &obs);
[[nodiscard]] Matrix features(const std::vector<cstr::Observation> &obs);

/// Four input branches (state 24-24, storage 8-8, price summary 8-8, price
/// horizon 24-24) whose second hidden layers are concatenated and fed to a
/// 64-64 trunk with a linear output layer. tanh everywhere else.
class BranchedNet {
public:
  enum class Branch { State, Storage, PriceSummary, Horizon };

  explicit BranchedNet(std::string prefix = "v.", Eigen::Index outputs = 1);

  [[nodiscard]] Eigen::Index outputs() const { return trunk_.output_size(); }
  [[nodiscard]] std::vector<ad::BlockShape> shapes() const;
  [[nodiscard]] ParamVector init(std::uint64_t seed) const;

  [[nodiscard]] ad::Var forward(const ad::TapeParams &p, ad::Var features) const;
  [[nodiscard]] Matrix evaluate(const ParamVector &p, const Matrix &features) const;
  /// Output of one branch's second hidden layer.
  [[nodiscard]] Matrix branch_output(const ParamVector &p, Branch b, const Matrix &features) const;

private:
  [[nodiscard]] ad::Var branch(const ad::TapeParams &p, Branch b, ad::Var features) const;

  ad::Mlp state_, storage_, summary_, horizon_, trunk_;
};

} // namespace pimbpo::rl
