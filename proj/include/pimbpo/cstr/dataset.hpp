#pragma once

#include "pimbpo/cstr/env.hpp"

#include <Eigen/Core>
#include <json.hpp>

#include <iosfwd>
#include <vector>

namespace pimbpo::cstr {

/// One observed plant hour, physical units. Rewards are not stored.
struct Transition {
  SysState x;
  Action u;
  SysState next;
};

using TransitionSet = std::vector<Transition>;

/// Row-major batches in scaled units: [c, T], [rho, F], [c', T'].
struct ScaledBatch {
  Eigen::MatrixXd x;
  Eigen::MatrixXd u;
  Eigen::MatrixXd next;
};

[[nodiscard]] ScaledBatch to_scaled(const TransitionSet &data);
[[nodiscard]] ScaledBatch to_scaled(const TransitionSet &data, const std::vector<std::size_t> &rows);

[[nodiscard]] nlohmann::json transitions_to_json(const TransitionSet &data);
[[nodiscard]] TransitionSet transitions_from_json(const nlohmann::json &j);

/// Transitions CSV: header `c,T,rho,F,c_next,T_next`, physical units.
void write_transitions_csv(std::ostream &os, const TransitionSet &data);
/// Throws std::runtime_error naming the line of a malformed row.
[[nodiscard]] TransitionSet read_transitions_csv(std::istream &is);

/// One row of an episode log.
struct EpisodeRecord {
  int step = 0; // index of the state after the transition, 1-based
  SysState x;
  double storage = 0.0;
  Action u;
  double price = 0.0;
  RewardBreakdown reward;
  Violations violations;
  bool terminated = false;
  bool truncated = false;
};

/// Episode log CSV, one header line then one row per step:
///   step,c,T,l,rho,F,p,r_cost,r_con_rel,r_con_bool,r_total,viol_c,viol_T,viol_l,terminated,truncated
/// `c,T,l` are the state after the step; `rho,F,p` the applied action and the
/// price of that hour. Reals are printed with %.17g so they round-trip
/// exactly; flags are 0/1 and `viol_*` are the (non-negative) distances
/// beyond the bound.
void write_episode_csv(std::ostream &os, const std::vector<EpisodeRecord> &records);
[[nodiscard]] std::vector<EpisodeRecord> read_episode_csv(std::istream &is);

} // namespace pimbpo::cstr
