#pragma once

#include "pimbpo/mbpo/run.hpp"

namespace pimbpo::bench {

/// Fixed action regardless of the observation; used for baselines.
class ConstantPolicy final : public rl::Policy {
public:
  explicit ConstantPolicy(const cstr::Action &u);

  [[nodiscard]] std::string kind() const override { return "constant"; }
  [[nodiscard]] ad::ParamVector &params() override { return params_; }
  [[nodiscard]] const ad::ParamVector &params() const override { return params_; }
  [[nodiscard]] Eigen::Vector2d mean(const cstr::Observation &) const override { return u_; }
  [[nodiscard]] rl::MeanBatch means(const std::vector<cstr::Observation> &obs, bool with_gradient) const override;
  [[nodiscard]] std::unique_ptr<rl::Policy> clone() const override;

private:
  Eigen::Vector2d u_;
  ad::ParamVector params_;
};

/// Uniform random actions over the box; each call to mean() draws anew, so
/// a fresh instance with the same seed replays the same actions.
class UniformRandomPolicy final : public rl::Policy {
public:
  explicit UniformRandomPolicy(std::uint64_t seed) : rng_(seed) {}

  [[nodiscard]] std::string kind() const override { return "uniform_random"; }
  [[nodiscard]] ad::ParamVector &params() override { return params_; }
  [[nodiscard]] const ad::ParamVector &params() const override { return params_; }
  [[nodiscard]] Eigen::Vector2d mean(const cstr::Observation &) const override;
  [[nodiscard]] rl::MeanBatch means(const std::vector<cstr::Observation> &obs, bool with_gradient) const override;
  [[nodiscard]] std::unique_ptr<rl::Policy> clone() const override;

private:
  mutable std::mt19937_64 rng_;
  ad::ParamVector params_;
};

/// Nominal production: steady-state flow and coolant at every hour.
[[nodiscard]] ConstantPolicy steady_state_controller();
/// Coolant switched off, production at the nominal rate.
[[nodiscard]] ConstantPolicy zero_cooling_controller();

/// Copies `base` and switches it to the named variant. Only the variant
/// switches (controller class, ensemble loss, policy optimization) change.
[[nodiscard]] mbpo::MbpoConfig make_variant(const std::string &name, const mbpo::MbpoConfig &base);

} // namespace pimbpo::bench
