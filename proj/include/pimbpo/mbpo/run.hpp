#pragma once

#include "pimbpo/cstr/dataset.hpp"
#include "pimbpo/koopman/koopman.hpp"
#include "pimbpo/mbpo/schedule.hpp"
#include "pimbpo/rl/ppo.hpp"

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace pimbpo::mbpo {

enum class ControllerKind { KoopmanMpc, Mlp };
enum class EnsembleKind { Pinn, Vanilla, None };

/// The five controller variants differ only in these three switches.
struct VariantSpec {
  std::string name;
  ControllerKind controller = ControllerKind::KoopmanMpc;
  EnsembleKind ensemble = EnsembleKind::Pinn;
  bool policy_optimization = true;

  static const std::vector<VariantSpec> &all();
  /// Throws std::invalid_argument for an unknown name.
  static VariantSpec from_name(const std::string &name);
};

inline const std::string kMainVariant = "SI_Koop+PIRL_Bounds";

struct MbpoConfig {
  VariantSpec variant = VariantSpec::from_name(kMainVariant);
  MbpoSchedule schedule = MbpoSchedule::full();
  cstr::EnvConfig env;
  pinn::EnsembleConfig ensemble;
  koopman::SiConfig si;
  ocp::OcpConfig ocp;
  rl::PolicyOptimizationConfig policy;
  rl::SurrogateConfig surrogate;
  double train_fraction = 0.75;
  double exploration_sigma_max = 0.1;
};

[[nodiscard]] nlohmann::json to_json(const MbpoConfig &c);
/// Missing keys keep their defaults.
[[nodiscard]] MbpoConfig mbpo_config_from_json(const nlohmann::json &j);

struct EpisodeLog {
  long index = 0; // 1-based over the whole run
  Split split = Split::Train;
  double sigma = 0.0;
  std::vector<cstr::EpisodeRecord> records;
};

struct SampleResult {
  cstr::TransitionSet train;
  cstr::TransitionSet val;
  std::vector<Eigen::Vector2d> actions; // applied, scaled, in order
  std::vector<EpisodeLog> episodes;
};

/// Collects exactly `budget` real transitions. Every call starts a fresh
/// episode; an episode cut by the budget keeps its transitions. Without a
/// policy the actions are uniform over the scaled box; otherwise
/// u ~ N(u*, sigma^2) with sigma ~ U[0, sigma_max] drawn per episode.
[[nodiscard]] SampleResult sample_data(cstr::CstrEnv &env, const rl::Policy *policy, int budget,
                                       long &episode_counter, std::uint64_t split_seed, double sigma_max,
                                       double train_fraction, std::mt19937_64 &rng);

struct IterationReport {
  int iteration = 0; // 1-based
  int budget = 0;
  long cumulative_steps = 0;
  int episodes = 0;
  std::size_t train_size = 0;
  std::size_t val_size = 0;
  bool val_fallback = false; // no validation data yet; training data used instead
  std::vector<bool> members_reset;
  std::vector<double> member_val_loss;
  double koopman_val_loss = std::numeric_limits<double>::quiet_NaN();
  int ppo_iterations = 0;
  bool ppo_stopped_by_ratio = false;
  Eigen::VectorXd policy_params; // theta_B for the eNMPC; empty for the MLP
  double seconds = 0.0;          // wall clock; not part of checkpoints
};

[[nodiscard]] nlohmann::json to_json(const IterationReport &r, bool with_timing = true);

class ArchiveError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kArchiveVersion = 1;

/// One MBPO training run: real-environment sampling, model fitting and
/// policy optimization in a loop over the schedule.
class MbpoRun {
public:
  MbpoRun(MbpoConfig config, std::shared_ptr<const cstr::PriceSeries> prices, std::uint64_t seed);

  /// Optional output directory for episode logs, PPO metrics, iteration
  /// summaries and per-iteration checkpoints.
  void set_run_directory(std::filesystem::path dir);

  [[nodiscard]] bool finished() const { return iteration_ >= config_.schedule.iterations(); }
  IterationReport run_iteration();
  void run(const std::function<void(const MbpoRun &, const IterationReport &)> &after_iteration = {});

  [[nodiscard]] const MbpoConfig &config() const { return config_; }
  [[nodiscard]] std::uint64_t seed() const { return seed_; }
  [[nodiscard]] int iteration() const { return iteration_; }
  [[nodiscard]] long cumulative_steps() const { return cumulative_; }
  [[nodiscard]] const std::vector<int> &step_counts() const { return step_counts_; }
  [[nodiscard]] const cstr::TransitionSet &train_data() const { return train_; }
  [[nodiscard]] const cstr::TransitionSet &val_data() const { return val_; }
  [[nodiscard]] const ad::ParamVector &theta_k() const { return theta_k_; }
  [[nodiscard]] const koopman::KoopmanModel &koopman_model() const { return model_; }
  [[nodiscard]] const pinn::Ensemble *ensemble() const { return ensemble_.get(); }
  [[nodiscard]] const rl::PpoAgent &agent() const { return *agent_; }
  [[nodiscard]] const rl::Policy &controller() const { return agent_->policy(); }
  [[nodiscard]] const std::vector<IterationReport> &reports() const { return reports_; }
  [[nodiscard]] std::shared_ptr<const cstr::PriceSeries> prices() const { return prices_; }

  [[nodiscard]] nlohmann::json checkpoint() const;
  /// Throws ArchiveError on a format or version mismatch.
  [[nodiscard]] static MbpoRun restore(const nlohmann::json &archive, std::shared_ptr<const cstr::PriceSeries> prices);

private:
  void rebuild_controller();
  void write_outputs(const SampleResult &sample, const IterationReport &report,
                     const std::vector<rl::PpoIterationStats> &ppo) const;

  MbpoConfig config_;
  std::shared_ptr<const cstr::PriceSeries> prices_;
  std::uint64_t seed_;
  std::optional<std::filesystem::path> run_dir_;

  int iteration_ = 0;
  long cumulative_ = 0;
  long episodes_ = 0;
  std::vector<int> step_counts_;
  cstr::TransitionSet train_, val_;
  koopman::KoopmanModel model_;
  ad::ParamVector theta_k_;
  std::shared_ptr<pinn::Ensemble> ensemble_;
  std::unique_ptr<rl::PpoAgent> agent_;
  std::vector<IterationReport> reports_;
};

/// Agent state (policy, log-std, critic and all Adam moments).
[[nodiscard]] nlohmann::json agent_to_json(const rl::PpoAgent &agent);
[[nodiscard]] nlohmann::json adam_to_json(const ad::AdamState &s);
[[nodiscard]] ad::AdamState adam_from_json(const nlohmann::json &j);

} // namespace pimbpo::mbpo
