#pragma once

#include "pimbpo/cstr/env.hpp"
#include "pimbpo/pinn/ensemble.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <vector>

namespace pimbpo::bench {

/// Bound offsets of one run after one MBPO iteration (0 = before training).
struct ThetaRow {
  std::uint64_t seed = 0;
  int iteration = 0;
  long cumulative_steps = 0;
  Eigen::Matrix<double, 6, 1> theta = Eigen::Matrix<double, 6, 1>::Zero();
};

/// Reads the latest checkpoint of a run directory, or of every run below it
/// (one subdirectory per seed), and returns one row per completed iteration
/// plus the zero row of iteration 0, ordered by seed then iteration. Runs of
/// an MLP variant have no offsets and are skipped.
[[nodiscard]] std::vector<ThetaRow> export_theta_B_history(const std::filesystem::path &run_dir);

/// CSV header: seed,iteration,cumulative_steps,c_lower,T_lower,l_lower,c_upper,T_upper,l_upper
void write_theta_csv(std::ostream &os, const std::vector<ThetaRow> &rows);

/// Directories holding a run (a `checkpoints` folder), the argument itself
/// included, in path order.
[[nodiscard]] std::vector<std::filesystem::path> find_runs(const std::filesystem::path &root);

struct ClosedLoopConfig {
  int steps = 168;
  /// Standard deviation of the scaled-action noise around steady state.
  double noise = 0.1;
  std::uint64_t seed = 7;
  /// Absolute index of the first price, inside the training partition; only
  /// the reward depends on it.
  std::size_t window_start = 0;
};

/// A reference trajectory of the real plant and each member's chained
/// prediction driven by the same actions, from the same initial state.
struct ClosedLoopPrediction {
  std::vector<cstr::Action> actions;
  std::vector<cstr::SysState> real;                    // steps + 1 states
  std::vector<std::vector<cstr::SysState>> predicted;  // per member, steps + 1
  /// Per member: mean over steps of the squared scaled state error.
  std::vector<double> mse;
  /// Per member: mean over steps and both states of the absolute scaled error.
  std::vector<double> mae;
  [[nodiscard]] double mean_mse() const;
};

/// The plant runs without termination so the reference covers every step.
[[nodiscard]] ClosedLoopPrediction closed_loop_predictions(const pinn::Ensemble &ensemble,
                                                           const cstr::PriceSeries &prices,
                                                           const ClosedLoopConfig &config = {});

/// CSV header: step,source,c,T,rho,F where source is `real` or `member_<i>`.
/// The action columns hold the action applied after that state (empty on
/// the last row).
void write_closed_loop_csv(std::ostream &os, const ClosedLoopPrediction &p);

} // namespace pimbpo::bench
