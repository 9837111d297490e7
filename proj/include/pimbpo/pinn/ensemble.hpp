#pragma once

#include "pimbpo/pinn/pinn.hpp"

#include <json.hpp>

#include <random>

namespace pimbpo::pinn {

struct EnsembleConfig {
  ModelKind kind = ModelKind::Pinn;
  int members = 10;
  int collocation_points = 2000;
  int init_points = 100;
  double reset_probability = 1.0 / 3.0;
  TrainConfig train;
};

/// Independent dynamics models; each member owns its parameters, sets and
/// loss weights.
class Ensemble {
public:
  Ensemble(EnsembleConfig config, std::uint64_t seed);

  [[nodiscard]] const EnsembleConfig &config() const { return config_; }
  [[nodiscard]] const DynamicsNet &net() const { return net_; }
  [[nodiscard]] std::size_t size() const { return members_.size(); }
  [[nodiscard]] Member &member(std::size_t i) { return members_.at(i); }
  [[nodiscard]] const Member &member(std::size_t i) const { return members_.at(i); }

  /// Re-initializes each member independently with the configured
  /// probability. Returns which members were reset.
  std::vector<bool> maybe_reset();

  /// Trains every member on the same data with per-member shuffling seeds.
  std::vector<TrainHistory> train(const cstr::TransitionSet &train, const cstr::TransitionSet &val);

  /// Scaled one-hour prediction of member `i`, rows of [c, T].
  [[nodiscard]] Matrix predict(std::size_t i, const Matrix &x_scaled, const Matrix &u_scaled) const;
  [[nodiscard]] cstr::SysState predict_step(std::size_t i, const cstr::SysState &x, const cstr::Action &u) const;

  [[nodiscard]] nlohmann::json to_json() const;
  static Ensemble from_json(const nlohmann::json &j);

  [[nodiscard]] std::mt19937_64 &rng() { return rng_; }

private:
  EnsembleConfig config_;
  DynamicsNet net_;
  std::vector<Member> members_;
  std::mt19937_64 rng_;
};

[[nodiscard]] nlohmann::json ensemble_config_to_json(const EnsembleConfig &c);
[[nodiscard]] EnsembleConfig ensemble_config_from_json(const nlohmann::json &j);

/// Serializes a standard RNG engine through its textual state.
template <typename Engine> std::string rng_state(const Engine &e);
template <typename Engine> void restore_rng(Engine &e, const std::string &state);

} // namespace pimbpo::pinn

#include <sstream>

template <typename Engine> std::string pimbpo::pinn::rng_state(const Engine &e) {
  std::ostringstream os;
  os << e;
  return os.str();
}

template <typename Engine> void pimbpo::pinn::restore_rng(Engine &e, const std::string &state) {
  std::istringstream is(state);
  is >> e;
  if (!is) throw std::runtime_error("corrupt RNG state");
}
