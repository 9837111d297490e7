#pragma once

#include <json.hpp>

#include <cstdint>
#include <vector>

namespace pimbpo::mbpo {

struct ScheduleStage {
  int steps = 0;      // real-environment steps per MBPO iteration
  int iterations = 0; // iterations at this budget
};

/// Per-iteration sampling budgets, expanded from stages.
class MbpoSchedule {
public:
  MbpoSchedule() = default;
  explicit MbpoSchedule(std::vector<ScheduleStage> stages);

  /// 20 x 10, 50 x 6, 250 x 8: 2500 steps in 24 iterations.
  static MbpoSchedule full();
  /// 20 x 5, 50 x 6: 400 steps in 11 iterations.
  static MbpoSchedule desk();

  [[nodiscard]] const std::vector<ScheduleStage> &stages() const { return stages_; }
  [[nodiscard]] int iterations() const { return static_cast<int>(budgets_.size()); }
  /// Budget of 0-based iteration k.
  [[nodiscard]] int budget(int k) const { return budgets_.at(static_cast<std::size_t>(k)); }
  /// Steps collected once iteration k has finished.
  [[nodiscard]] long cumulative(int k) const { return cumulative_.at(static_cast<std::size_t>(k)); }
  [[nodiscard]] long total_steps() const { return cumulative_.empty() ? 0 : cumulative_.back(); }
  [[nodiscard]] const std::vector<int> &budgets() const { return budgets_; }

private:
  std::vector<ScheduleStage> stages_;
  std::vector<int> budgets_;
  std::vector<long> cumulative_;
};

[[nodiscard]] nlohmann::json to_json(const MbpoSchedule &s);
[[nodiscard]] MbpoSchedule schedule_from_json(const nlohmann::json &j);

enum class Split { Train, Val };

/// Episode 1 goes to training data and episode 2 to validation data; later
/// episodes are training data with probability `train_fraction`. Pure in
/// (episode, seed).
[[nodiscard]] Split assign_split(long episode, std::uint64_t seed, double train_fraction = 0.75);

/// Mixes a run seed with a purpose tag and an index into an independent
/// stream seed.
[[nodiscard]] std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag, std::uint64_t index = 0);

} // namespace pimbpo::mbpo
