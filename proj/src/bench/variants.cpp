#include "pimbpo/bench/variants.hpp"

namespace pimbpo::bench {

ConstantPolicy::ConstantPolicy(const cstr::Action &u) : u_(cstr::scale_action(cstr::clip_action(u))) {}

rl::MeanBatch ConstantPolicy::means(const std::vector<cstr::Observation> &obs, bool with_gradient) const {
  rl::MeanBatch out;
  out.means = u_.transpose().replicate(static_cast<Eigen::Index>(obs.size()), 1);
  if (with_gradient) out.vjp = [](const ad::Matrix &) { return ad::ParamVector(); };
  return out;
}

std::unique_ptr<rl::Policy> ConstantPolicy::clone() const { return std::make_unique<ConstantPolicy>(*this); }

Eigen::Vector2d UniformRandomPolicy::mean(const cstr::Observation &) const {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const double rho = u(rng_);
  return {rho, u(rng_)};
}

rl::MeanBatch UniformRandomPolicy::means(const std::vector<cstr::Observation> &obs, bool with_gradient) const {
  rl::MeanBatch out;
  out.means.resize(static_cast<Eigen::Index>(obs.size()), 2);
  for (Eigen::Index i = 0; i < out.means.rows(); ++i) out.means.row(i) = mean(obs[static_cast<std::size_t>(i)]).transpose();
  if (with_gradient) out.vjp = [](const ad::Matrix &) { return ad::ParamVector(); };
  return out;
}

std::unique_ptr<rl::Policy> UniformRandomPolicy::clone() const { return std::make_unique<UniformRandomPolicy>(*this); }

ConstantPolicy steady_state_controller() { return ConstantPolicy(cstr::kSteadyAction); }

ConstantPolicy zero_cooling_controller() { return ConstantPolicy({cstr::kProduction.ss, 0.0}); }

mbpo::MbpoConfig make_variant(const std::string &name, const mbpo::MbpoConfig &base) {
  mbpo::MbpoConfig c = base;
  c.variant = mbpo::VariantSpec::from_name(name);
  c.ensemble.kind =
      c.variant.ensemble == mbpo::EnsembleKind::Vanilla ? pinn::ModelKind::Vanilla : pinn::ModelKind::Pinn;
  return c;
}

} // namespace pimbpo::bench
