#include "pimbpo/pinn/ensemble.hpp"

#include "pimbpo/diff/checkpoint.hpp"

namespace pimbpo::pinn {

Ensemble::Ensemble(EnsembleConfig config, std::uint64_t seed)
    : config_(std::move(config)), net_(config_.kind), rng_(seed) {
  if (config_.members < 1) throw cstr::ConfigError("ensemble needs at least one member");
  for (int i = 0; i < config_.members; ++i)
    members_.push_back(make_member(net_, rng_(), config_.collocation_points, config_.init_points));
}

std::vector<bool> Ensemble::maybe_reset() {
  std::bernoulli_distribution coin(config_.reset_probability);
  std::vector<bool> reset;
  for (auto &m : members_) {
    const bool r = coin(rng_);
    if (r) reinitialize(net_, m);
    reset.push_back(r);
  }
  return reset;
}

std::vector<TrainHistory> Ensemble::train(const cstr::TransitionSet &train, const cstr::TransitionSet &val) {
  std::vector<TrainHistory> out;
  for (auto &m : members_) {
    const std::uint64_t seed = rng_();
    out.push_back(train_two_stage(net_, m, train, val, config_.train, seed));
  }
  return out;
}

Matrix Ensemble::predict(std::size_t i, const Matrix &x_scaled, const Matrix &u_scaled) const {
  return net_.predict(members_.at(i).params, x_scaled, u_scaled);
}

cstr::SysState Ensemble::predict_step(std::size_t i, const cstr::SysState &x, const cstr::Action &u) const {
  const Matrix y = predict(i, cstr::scale_state(x).transpose(), cstr::scale_action(u).transpose());
  return cstr::unscale_state(y.row(0).transpose());
}

nlohmann::json ensemble_config_to_json(const EnsembleConfig &c) {
  return {{"kind", c.kind == ModelKind::Pinn ? "pinn" : "vanilla"},
          {"members", c.members},
          {"collocation_points", c.collocation_points},
          {"init_points", c.init_points},
          {"reset_probability", c.reset_probability},
          {"adam_epochs", c.train.adam_epochs},
          {"adam_learning_rate", c.train.adam_learning_rate},
          {"batch_size", c.train.batch_size},
          {"lbfgs_max_iterations", c.train.lbfgs_max_iterations},
          {"lbfgs_patience", c.train.lbfgs_patience},
          {"lbfgs_history", c.train.lbfgs.history}};
}

EnsembleConfig ensemble_config_from_json(const nlohmann::json &j) {
  EnsembleConfig c;
  const std::string kind = j.value("kind", "pinn");
  if (kind != "pinn" && kind != "vanilla") throw cstr::ConfigError("ensemble kind must be 'pinn' or 'vanilla'");
  c.kind = kind == "pinn" ? ModelKind::Pinn : ModelKind::Vanilla;
  c.members = j.value("members", c.members);
  c.collocation_points = j.value("collocation_points", c.collocation_points);
  c.init_points = j.value("init_points", c.init_points);
  c.reset_probability = j.value("reset_probability", c.reset_probability);
  c.train.adam_epochs = j.value("adam_epochs", c.train.adam_epochs);
  c.train.adam_learning_rate = j.value("adam_learning_rate", c.train.adam_learning_rate);
  c.train.batch_size = j.value("batch_size", c.train.batch_size);
  c.train.lbfgs_max_iterations = j.value("lbfgs_max_iterations", c.train.lbfgs_max_iterations);
  c.train.lbfgs_patience = j.value("lbfgs_patience", c.train.lbfgs_patience);
  c.train.lbfgs.history = j.value("lbfgs_history", c.train.lbfgs.history);
  return c;
}

nlohmann::json Ensemble::to_json() const {
  nlohmann::json members = nlohmann::json::array();
  for (const auto &m : members_)
    members.push_back({{"params", ad::to_json(m.params)},
                       {"collocation", ad::matrix_to_json(m.collocation)},
                       {"init_inputs", ad::matrix_to_json(m.init_inputs)},
                       {"weights", {m.weights.data, m.weights.init, m.weights.ema}},
                       {"stream", m.stream},
                       {"draws", m.draws}});
  return {{"config", ensemble_config_to_json(config_)}, {"rng", rng_state(rng_)}, {"members", members}};
}

Ensemble Ensemble::from_json(const nlohmann::json &j) {
  EnsembleConfig cfg = ensemble_config_from_json(j.at("config"));
  const auto &jm = j.at("members");
  cfg.members = static_cast<int>(jm.size());
  // Build with a throwaway layout, then overwrite every member.
  EnsembleConfig light = cfg;
  light.collocation_points = 1;
  light.init_points = 1;
  Ensemble e(light, 0);
  e.config_ = cfg;
  for (std::size_t i = 0; i < jm.size(); ++i) {
    Member &m = e.members_[i];
    m.params = ad::params_from_json(jm[i].at("params"));
    m.collocation = ad::matrix_from_json(jm[i].at("collocation"));
    m.init_inputs = ad::matrix_from_json(jm[i].at("init_inputs"));
    const auto &w = jm[i].at("weights");
    m.weights = {w.at(0).get<double>(), w.at(1).get<double>(), w.at(2).get<double>()};
    m.stream = jm[i].at("stream").get<std::uint64_t>();
    m.draws = jm[i].at("draws").get<std::uint64_t>();
  }
  restore_rng(e.rng_, j.at("rng").get<std::string>());
  return e;
}

} // namespace pimbpo::pinn
