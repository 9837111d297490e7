#include "pimbpo/mbpo/run.hpp"

#include "pimbpo/diff/checkpoint.hpp"
#include "pimbpo/diff/errors.hpp"

#include <chrono>
#include <fstream>
#include <stdexcept>

namespace pimbpo::mbpo {

namespace {

// Stream tags for derive_seed.
enum SeedTag : std::uint64_t {
  kEnvSeed = 1,
  kSamplingSeed,
  kSplitSeed,
  kSiSeed,
  kPpoSeed,
  kSurrogateSeed,
  kValidationSeed,
  kEnsembleSeed,
  kCriticSeed,
  kMlpSeed,
  kKoopmanSeed,
};

std::vector<cstr::SysState> start_states(const cstr::TransitionSet &data) {
  std::vector<cstr::SysState> out;
  out.reserve(data.size());
  for (const cstr::Transition &t : data) out.push_back(t.x);
  return out;
}

std::string padded(long v, int width) {
  std::string s = std::to_string(v);
  return std::string(static_cast<std::size_t>(std::max(0, width - static_cast<int>(s.size()))), '0') + s;
}

} // namespace

const std::vector<VariantSpec> &VariantSpec::all() {
  static const std::vector<VariantSpec> v = {
      {kMainVariant, ControllerKind::KoopmanMpc, EnsembleKind::Pinn, true},
      {"SI_Koop+RL_Bounds", ControllerKind::KoopmanMpc, EnsembleKind::Vanilla, true},
      {"SI_Koop", ControllerKind::KoopmanMpc, EnsembleKind::None, false},
      {"PIRL_MLP", ControllerKind::Mlp, EnsembleKind::Pinn, true},
      {"RL_MLP", ControllerKind::Mlp, EnsembleKind::Vanilla, true},
  };
  return v;
}

VariantSpec VariantSpec::from_name(const std::string &name) {
  for (const VariantSpec &v : all())
    if (v.name == name) return v;
  throw std::invalid_argument("unknown variant '" + name + "'");
}

// ---------------------------------------------------------------------------
// Configuration

nlohmann::json to_json(const MbpoConfig &c) {
  nlohmann::json j;
  j["variant"] = c.variant.name;
  j["schedule"] = to_json(c.schedule);
  j["env"] = {{"max_steps", c.env.max_steps},
              {"forecast_length", c.env.forecast_length},
              {"substeps", c.env.substeps},
              {"termination_limit", c.env.termination_limit},
              {"storage_reset_low", c.env.storage_reset_low},
              {"storage_reset_high", c.env.storage_reset_high},
              {"alpha", c.env.reward.cost_weight},
              {"violation_weight", c.env.reward.violation_weight},
              {"violation_flag_penalty", c.env.reward.violation_flag_penalty},
              {"survival_bonus", c.env.reward.survival_bonus}};
  j["ensemble"] = pinn::ensemble_config_to_json(c.ensemble);
  j["koopman_si"] = {{"learning_rate", c.si.learning_rate},
                     {"batch_size", c.si.batch_size},
                     {"max_epochs", c.si.max_epochs},
                     {"patience", c.si.patience},
                     {"weight_decay", c.si.weight_decay},
                     {"grad_clip_norm", c.si.grad_clip_norm}};
  j["ocp"] = {{"horizon", c.ocp.horizon},
              {"slack_penalty", c.ocp.slack_penalty},
              {"control_regularization", c.ocp.control_regularization},
              {"cost_scale", c.ocp.cost_scale},
              {"dt", c.ocp.dt}};
  j["ppo"] = rl::to_json(c.policy.ppo);
  j["ppo"]["max_iterations"] = c.policy.max_iterations;
  j["improvement"] = {{"check_every", c.policy.improvement.check_every},
                      {"episodes", c.policy.improvement.episodes},
                      {"window", c.policy.improvement.window},
                      {"threshold", c.policy.improvement.threshold},
                      {"seed", c.policy.improvement.seed}};
  j["surrogate"] = {{"max_steps", c.surrogate.max_steps},
                    {"storage_reset_low", c.surrogate.storage_reset_low},
                    {"storage_reset_high", c.surrogate.storage_reset_high},
                    {"termination_limit", c.surrogate.termination_limit}};
  j["train_fraction"] = c.train_fraction;
  j["exploration_sigma_max"] = c.exploration_sigma_max;
  return j;
}

MbpoConfig mbpo_config_from_json(const nlohmann::json &j) {
  MbpoConfig c;
  if (j.contains("variant")) c.variant = VariantSpec::from_name(j.at("variant").get<std::string>());
  if (j.contains("schedule")) c.schedule = schedule_from_json(j.at("schedule"));
  if (j.contains("env")) {
    const auto &e = j.at("env");
    c.env.max_steps = e.value("max_steps", c.env.max_steps);
    c.env.forecast_length = e.value("forecast_length", c.env.forecast_length);
    c.env.substeps = e.value("substeps", c.env.substeps);
    c.env.termination_limit = e.value("termination_limit", c.env.termination_limit);
    c.env.storage_reset_low = e.value("storage_reset_low", c.env.storage_reset_low);
    c.env.storage_reset_high = e.value("storage_reset_high", c.env.storage_reset_high);
    c.env.reward.cost_weight = e.value("alpha", c.env.reward.cost_weight);
    c.env.reward.violation_weight = e.value("violation_weight", c.env.reward.violation_weight);
    c.env.reward.violation_flag_penalty = e.value("violation_flag_penalty", c.env.reward.violation_flag_penalty);
    c.env.reward.survival_bonus = e.value("survival_bonus", c.env.reward.survival_bonus);
  }
  if (j.contains("ensemble")) {
    nlohmann::json e = pinn::ensemble_config_to_json(c.ensemble);
    e.update(j.at("ensemble"));
    c.ensemble = pinn::ensemble_config_from_json(e);
  }
  if (j.contains("koopman_si")) {
    const auto &s = j.at("koopman_si");
    c.si.learning_rate = s.value("learning_rate", c.si.learning_rate);
    c.si.batch_size = s.value("batch_size", c.si.batch_size);
    c.si.max_epochs = s.value("max_epochs", c.si.max_epochs);
    c.si.patience = s.value("patience", c.si.patience);
    c.si.weight_decay = s.value("weight_decay", c.si.weight_decay);
    c.si.grad_clip_norm = s.value("grad_clip_norm", c.si.grad_clip_norm);
  }
  if (j.contains("ocp")) {
    const auto &o = j.at("ocp");
    c.ocp.horizon = o.value("horizon", c.ocp.horizon);
    c.ocp.slack_penalty = o.value("slack_penalty", c.ocp.slack_penalty);
    c.ocp.control_regularization = o.value("control_regularization", c.ocp.control_regularization);
    c.ocp.cost_scale = o.value("cost_scale", c.ocp.cost_scale);
    c.ocp.dt = o.value("dt", c.ocp.dt);
  }
  if (j.contains("ppo")) {
    nlohmann::json p = rl::to_json(c.policy.ppo);
    p.update(j.at("ppo"));
    c.policy.ppo = rl::ppo_config_from_json(p);
    c.policy.max_iterations = j.at("ppo").value("max_iterations", c.policy.max_iterations);
  }
  if (j.contains("improvement")) {
    const auto &i = j.at("improvement");
    c.policy.improvement.check_every = i.value("check_every", c.policy.improvement.check_every);
    c.policy.improvement.episodes = i.value("episodes", c.policy.improvement.episodes);
    c.policy.improvement.window = i.value("window", c.policy.improvement.window);
    c.policy.improvement.threshold = i.value("threshold", c.policy.improvement.threshold);
    c.policy.improvement.seed = i.value("seed", c.policy.improvement.seed);
  }
  if (j.contains("surrogate")) {
    const auto &s = j.at("surrogate");
    c.surrogate.max_steps = s.value("max_steps", c.surrogate.max_steps);
    c.surrogate.storage_reset_low = s.value("storage_reset_low", c.surrogate.storage_reset_low);
    c.surrogate.storage_reset_high = s.value("storage_reset_high", c.surrogate.storage_reset_high);
    c.surrogate.termination_limit = s.value("termination_limit", c.surrogate.termination_limit);
  }
  // The surrogate shares the reward and forecast of the real environment.
  c.surrogate.reward = c.env.reward;
  c.surrogate.forecast_length = c.env.forecast_length;
  c.train_fraction = j.value("train_fraction", c.train_fraction);
  c.exploration_sigma_max = j.value("exploration_sigma_max", c.exploration_sigma_max);
  if (c.ensemble.members < 1) throw std::invalid_argument("ensemble needs at least one member");
  c.ensemble.kind = c.variant.ensemble == EnsembleKind::Vanilla ? pinn::ModelKind::Vanilla : pinn::ModelKind::Pinn;
  return c;
}

// ---------------------------------------------------------------------------
// Sampling

SampleResult sample_data(cstr::CstrEnv &env, const rl::Policy *policy, int budget, long &episode_counter,
                         std::uint64_t split_seed, double sigma_max, double train_fraction, std::mt19937_64 &rng) {
  if (budget < 0) throw std::invalid_argument("sampling budget must be non-negative");
  SampleResult out;
  std::uniform_real_distribution<double> box(-1.0, 1.0);
  int taken = 0;
  while (taken < budget) {
    env.reset();
    EpisodeLog log;
    log.index = ++episode_counter;
    log.split = assign_split(log.index, split_seed, train_fraction);
    if (policy) log.sigma = std::uniform_real_distribution<double>(0.0, sigma_max)(rng);
    while (!env.state().done && taken < budget) {
      const cstr::Observation obs = env.observe();
      Eigen::Vector2d u;
      if (policy) {
        u = rl::sample_action(policy->mean(obs), Eigen::Vector2d::Constant(log.sigma), rng).clipped;
      } else {
        u = Eigen::Vector2d(box(rng), box(rng));
      }
      const cstr::SysState x = env.state().x;
      const cstr::StepResult r = env.step(cstr::unscale_action(u));
      const cstr::Transition t{x, r.applied, env.state().x};
      (log.split == Split::Train ? out.train : out.val).push_back(t);
      out.actions.push_back(cstr::scale_action(r.applied));
      cstr::EpisodeRecord rec;
      rec.step = env.state().step;
      rec.x = env.state().x;
      rec.storage = env.state().storage;
      rec.u = r.applied;
      rec.price = r.price;
      rec.reward = r.reward;
      rec.violations = r.violations;
      rec.terminated = r.terminated;
      rec.truncated = r.truncated;
      log.records.push_back(rec);
      ++taken;
    }
    out.episodes.push_back(std::move(log));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports and serialization helpers

nlohmann::json to_json(const IterationReport &r, bool with_timing) {
  nlohmann::json j = {{"iteration", r.iteration},
                      {"budget", r.budget},
                      {"cumulative_steps", r.cumulative_steps},
                      {"episodes", r.episodes},
                      {"train_size", r.train_size},
                      {"val_size", r.val_size},
                      {"val_fallback", r.val_fallback},
                      {"members_reset", r.members_reset},
                      {"member_val_loss", r.member_val_loss},
                      {"ppo_iterations", r.ppo_iterations},
                      {"ppo_stopped_by_ratio", r.ppo_stopped_by_ratio},
                      {"policy_params", std::vector<double>(r.policy_params.data(),
                                                            r.policy_params.data() + r.policy_params.size())}};
  j["koopman_val_loss"] = std::isfinite(r.koopman_val_loss) ? nlohmann::json(r.koopman_val_loss) : nullptr;
  if (with_timing) j["seconds"] = r.seconds;
  return j;
}

namespace {

IterationReport report_from_json(const nlohmann::json &j) {
  IterationReport r;
  r.iteration = j.at("iteration").get<int>();
  r.budget = j.at("budget").get<int>();
  r.cumulative_steps = j.at("cumulative_steps").get<long>();
  r.episodes = j.at("episodes").get<int>();
  r.train_size = j.at("train_size").get<std::size_t>();
  r.val_size = j.at("val_size").get<std::size_t>();
  r.val_fallback = j.at("val_fallback").get<bool>();
  r.members_reset = j.at("members_reset").get<std::vector<bool>>();
  r.member_val_loss = j.at("member_val_loss").get<std::vector<double>>();
  r.ppo_iterations = j.at("ppo_iterations").get<int>();
  r.ppo_stopped_by_ratio = j.at("ppo_stopped_by_ratio").get<bool>();
  const auto p = j.at("policy_params").get<std::vector<double>>();
  r.policy_params = Eigen::Map<const Eigen::VectorXd>(p.data(), static_cast<Eigen::Index>(p.size()));
  if (!j.at("koopman_val_loss").is_null()) r.koopman_val_loss = j.at("koopman_val_loss").get<double>();
  return r;
}

} // namespace

nlohmann::json adam_to_json(const ad::AdamState &s) {
  return {{"learning_rate", s.config.learning_rate},
          {"beta1", s.config.beta1},
          {"beta2", s.config.beta2},
          {"epsilon", s.config.epsilon},
          {"step", s.step},
          {"first_moment", ad::to_json(s.first_moment)},
          {"second_moment", ad::to_json(s.second_moment)}};
}

ad::AdamState adam_from_json(const nlohmann::json &j) {
  ad::AdamState s;
  s.config.learning_rate = j.at("learning_rate").get<double>();
  s.config.beta1 = j.at("beta1").get<double>();
  s.config.beta2 = j.at("beta2").get<double>();
  s.config.epsilon = j.at("epsilon").get<double>();
  s.step = j.at("step").get<long>();
  s.first_moment = ad::params_from_json(j.at("first_moment"));
  s.second_moment = ad::params_from_json(j.at("second_moment"));
  return s;
}

nlohmann::json agent_to_json(const rl::PpoAgent &agent) {
  return {{"policy_kind", agent.policy().kind()},
          {"policy", ad::to_json(agent.policy().params())},
          {"log_std", ad::to_json(agent.log_std())},
          {"critic", ad::to_json(agent.critic_params())},
          {"policy_adam", adam_to_json(agent.policy_adam)},
          {"log_std_adam", adam_to_json(agent.log_std_adam)},
          {"critic_adam", adam_to_json(agent.critic_adam)}};
}

// ---------------------------------------------------------------------------
// The run

MbpoRun::MbpoRun(MbpoConfig config, std::shared_ptr<const cstr::PriceSeries> prices, std::uint64_t seed)
    : config_(std::move(config)), prices_(std::move(prices)), seed_(seed) {
  if (!prices_) throw cstr::ConfigError("MBPO run needs a price series");
  const VariantSpec &v = config_.variant;
  if (v.policy_optimization && v.ensemble == EnsembleKind::None)
    throw cstr::ConfigError("policy optimization needs a dynamics ensemble");
  if (v.controller == ControllerKind::Mlp && !v.policy_optimization)
    throw cstr::ConfigError("an MLP controller is only trained by policy optimization");
  config_.surrogate.reward = config_.env.reward;
  config_.surrogate.forecast_length = config_.env.forecast_length;

  if (v.ensemble != EnsembleKind::None) {
    config_.ensemble.kind = v.ensemble == EnsembleKind::Vanilla ? pinn::ModelKind::Vanilla : pinn::ModelKind::Pinn;
    ensemble_ = std::make_shared<pinn::Ensemble>(config_.ensemble, derive_seed(seed_, kEnsembleSeed));
  }
  std::unique_ptr<rl::Policy> policy;
  if (v.controller == ControllerKind::KoopmanMpc) {
    theta_k_ = model_.init(derive_seed(seed_, kKoopmanSeed));
    policy = std::make_unique<rl::MpcBoundsPolicy>(ocp::MpcPolicy(model_, theta_k_, config_.ocp));
  } else {
    policy = std::make_unique<rl::MlpPolicy>(derive_seed(seed_, kMlpSeed));
  }
  agent_ = std::make_unique<rl::PpoAgent>(std::move(policy), config_.policy.ppo, derive_seed(seed_, kCriticSeed));
}

void MbpoRun::set_run_directory(std::filesystem::path dir) {
  std::filesystem::create_directories(dir / "checkpoints");
  std::filesystem::create_directories(dir / "episodes");
  std::filesystem::create_directories(dir / "metrics");
  run_dir_ = std::move(dir);
}

void MbpoRun::rebuild_controller() {
  if (config_.variant.controller != ControllerKind::KoopmanMpc) return;
  const auto &current = dynamic_cast<const rl::MpcBoundsPolicy &>(agent_->policy());
  agent_->replace_policy(
      std::make_unique<rl::MpcBoundsPolicy>(ocp::MpcPolicy(model_, theta_k_, config_.ocp), current.theta()));
}

IterationReport MbpoRun::run_iteration() {
  if (finished()) throw ad::ContractViolation("MBPO schedule already exhausted");
  const auto started = std::chrono::steady_clock::now();
  const int k = iteration_;
  const auto uk = static_cast<std::uint64_t>(k);
  IterationReport rep;
  rep.iteration = k + 1;
  rep.budget = config_.schedule.budget(k);

  // (1) Real-environment sampling: uniform actions in the first iteration,
  // the current controller with per-episode exploration noise afterwards.
  cstr::CstrEnv env(config_.env, prices_, derive_seed(seed_, kEnvSeed, uk));
  std::mt19937_64 sampling_rng(derive_seed(seed_, kSamplingSeed, uk));
  const rl::Policy *behaviour = k == 0 ? nullptr : &agent_->policy();
  SampleResult sample = sample_data(env, behaviour, rep.budget, episodes_, derive_seed(seed_, kSplitSeed),
                                    config_.exploration_sigma_max, config_.train_fraction, sampling_rng);
  train_.insert(train_.end(), sample.train.begin(), sample.train.end());
  val_.insert(val_.end(), sample.val.begin(), sample.val.end());
  cumulative_ += rep.budget;
  step_counts_.push_back(rep.budget);
  rep.cumulative_steps = cumulative_;
  rep.episodes = static_cast<int>(sample.episodes.size());
  rep.train_size = train_.size();
  rep.val_size = val_.size();
  rep.val_fallback = val_.empty();
  const cstr::TransitionSet &val = val_.empty() ? train_ : val_;

  // (2) Model fitting. The controller's own parameters must not move here.
  const std::uint64_t policy_hash = agent_->policy().params().hash();
  if (ensemble_) {
    rep.members_reset = k == 0 ? std::vector<bool>(ensemble_->size(), false) : ensemble_->maybe_reset();
    for (const pinn::TrainHistory &h : ensemble_->train(train_, val)) {
      double best = std::numeric_limits<double>::quiet_NaN();
      if (!h.stage2_val.empty()) best = *std::min_element(h.stage2_val.begin(), h.stage2_val.end());
      rep.member_val_loss.push_back(best);
    }
  }
  if (config_.variant.controller == ControllerKind::KoopmanMpc) {
    koopman::SiResult si = koopman::train_si(model_, theta_k_, train_, val, config_.si, derive_seed(seed_, kSiSeed, uk));
    theta_k_ = std::move(si.params);
    if (!si.history.best_val.empty()) rep.koopman_val_loss = si.history.best_val.back();
    rebuild_controller();
  }
  if (agent_->policy().params().hash() != policy_hash)
    throw ad::ContractViolation("controller parameters changed during model fitting");

  // (3) Policy optimization on the surrogate. Models must not move here.
  std::vector<rl::PpoIterationStats> ppo_stats;
  if (config_.variant.policy_optimization) {
    std::uint64_t model_hash = theta_k_.size() > 0 ? theta_k_.hash() : 0;
    for (std::size_t m = 0; m < ensemble_->size(); ++m)
      model_hash = ad::fnv1a(&model_hash, sizeof(model_hash), ensemble_->member(m).params.hash());
    const std::shared_ptr<const pinn::Ensemble> ens = ensemble_;
    const std::vector<cstr::SysState> pool = start_states(train_);
    rl::SurrogateEnv surrogate(ens, pool, prices_, config_.surrogate, derive_seed(seed_, kSurrogateSeed, uk));
    std::vector<rl::SurrogateEnv> validation;
    for (std::size_t m = 0; m < ens->size(); ++m)
      validation.emplace_back(ens, pool, prices_, config_.surrogate,
                              derive_seed(seed_, kValidationSeed, uk * 1024 + m), m);
    std::mt19937_64 ppo_rng(derive_seed(seed_, kPpoSeed, uk));
    const rl::PolicyOptimizationResult res = rl::optimize_policy(*agent_, surrogate, validation, config_.policy, ppo_rng);
    rep.ppo_iterations = res.iterations;
    rep.ppo_stopped_by_ratio = res.stopped_by_ratio;
    ppo_stats = res.history;

    std::uint64_t after = theta_k_.size() > 0 ? theta_k_.hash() : 0;
    for (std::size_t m = 0; m < ensemble_->size(); ++m)
      after = ad::fnv1a(&after, sizeof(after), ensemble_->member(m).params.hash());
    if (after != model_hash) throw ad::ContractViolation("model parameters changed during policy optimization");
  }
  if (config_.variant.controller == ControllerKind::KoopmanMpc) rep.policy_params = agent_->policy().params().flatten();

  ++iteration_;
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  reports_.push_back(rep);
  if (run_dir_) write_outputs(sample, rep, ppo_stats);
  return rep;
}

void MbpoRun::run(const std::function<void(const MbpoRun &, const IterationReport &)> &after_iteration) {
  while (!finished()) {
    const IterationReport rep = run_iteration();
    if (after_iteration) after_iteration(*this, rep);
  }
}

void MbpoRun::write_outputs(const SampleResult &sample, const IterationReport &report,
                            const std::vector<rl::PpoIterationStats> &ppo) const {
  const std::filesystem::path &dir = *run_dir_;
  const std::string tag = padded(report.iteration, 3);
  for (const EpisodeLog &e : sample.episodes) {
    std::ofstream os(dir / "episodes" / ("iter_" + tag + "_episode_" + padded(e.index, 5) + ".csv"));
    cstr::write_episode_csv(os, e.records);
  }
  if (!ppo.empty()) {
    std::ofstream os(dir / "metrics" / ("ppo_iter_" + tag + ".csv"));
    rl::write_metrics_csv_header(os);
    for (const rl::PpoIterationStats &s : ppo) rl::write_metrics_csv_row(os, s);
  }
  {
    std::ofstream os(dir / "iterations.jsonl", std::ios::app);
    os << to_json(report).dump() << '\n';
  }
  std::ofstream os(dir / "checkpoints" / ("iter_" + tag + ".json"));
  os << checkpoint().dump();
  if (!os) throw std::runtime_error("failed to write checkpoint to " + dir.string());
}

nlohmann::json MbpoRun::checkpoint() const {
  nlohmann::json j;
  j["format"] = "pimbpo-run";
  j["version"] = kArchiveVersion;
  j["seed"] = seed_;
  j["config"] = to_json(config_);
  j["iteration"] = iteration_;
  j["cumulative_steps"] = cumulative_;
  j["episodes"] = episodes_;
  j["step_counts"] = step_counts_;
  j["train"] = cstr::transitions_to_json(train_);
  j["val"] = cstr::transitions_to_json(val_);
  j["theta_k"] = theta_k_.size() > 0 ? ad::to_json(theta_k_) : nlohmann::json(nullptr);
  j["ensemble"] = ensemble_ ? ensemble_->to_json() : nlohmann::json(nullptr);
  j["agent"] = agent_to_json(*agent_);
  nlohmann::json reps = nlohmann::json::array();
  for (const IterationReport &r : reports_) reps.push_back(to_json(r, false));
  j["reports"] = reps;
  return j;
}

MbpoRun MbpoRun::restore(const nlohmann::json &a, std::shared_ptr<const cstr::PriceSeries> prices) {
  if (!a.is_object() || a.value("format", "") != "pimbpo-run") throw ArchiveError("not an MBPO run archive");
  const int version = a.value("version", -1);
  if (version != kArchiveVersion)
    throw ArchiveError("archive version " + std::to_string(version) + " is not supported (expected " +
                       std::to_string(kArchiveVersion) + ")");
  try {
    MbpoRun run(mbpo_config_from_json(a.at("config")), std::move(prices), a.at("seed").get<std::uint64_t>());
    run.iteration_ = a.at("iteration").get<int>();
    run.cumulative_ = a.at("cumulative_steps").get<long>();
    run.episodes_ = a.at("episodes").get<long>();
    run.step_counts_ = a.at("step_counts").get<std::vector<int>>();
    run.train_ = cstr::transitions_from_json(a.at("train"));
    run.val_ = cstr::transitions_from_json(a.at("val"));
    if (!a.at("theta_k").is_null()) run.theta_k_ = ad::params_from_json(a.at("theta_k"));
    if (!a.at("ensemble").is_null())
      run.ensemble_ = std::make_shared<pinn::Ensemble>(pinn::Ensemble::from_json(a.at("ensemble")));
    const nlohmann::json &ag = a.at("agent");
    if (ag.at("policy_kind").get<std::string>() != run.agent_->policy().kind())
      throw ArchiveError("archived policy kind does not match the variant");
    const ad::ParamVector policy_params = ad::params_from_json(ag.at("policy"));
    if (run.config_.variant.controller == ControllerKind::KoopmanMpc) {
      run.agent_->replace_policy(std::make_unique<rl::MpcBoundsPolicy>(
          ocp::MpcPolicy(run.model_, run.theta_k_, run.config_.ocp),
          ocp::BoundParams::from_vector(policy_params["theta_B"].row(0).transpose())));
    } else {
      run.agent_->replace_policy(std::make_unique<rl::MlpPolicy>(policy_params));
    }
    run.agent_->log_std() = ad::params_from_json(ag.at("log_std"));
    run.agent_->critic_params() = ad::params_from_json(ag.at("critic"));
    run.agent_->policy_adam = adam_from_json(ag.at("policy_adam"));
    run.agent_->log_std_adam = adam_from_json(ag.at("log_std_adam"));
    run.agent_->critic_adam = adam_from_json(ag.at("critic_adam"));
    for (const auto &r : a.at("reports")) run.reports_.push_back(report_from_json(r));
    if (static_cast<int>(run.step_counts_.size()) != run.iteration_)
      throw ArchiveError("archive step counts do not match its iteration");
    return run;
  } catch (const nlohmann::json::exception &e) {
    throw ArchiveError(std::string("malformed run archive: ") + e.what());
  }
}

} // namespace pimbpo::mbpo
