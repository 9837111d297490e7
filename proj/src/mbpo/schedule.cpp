#include "pimbpo/mbpo/schedule.hpp"

#include <random>
#include <stdexcept>

namespace pimbpo::mbpo {

MbpoSchedule::MbpoSchedule(std::vector<ScheduleStage> stages) : stages_(std::move(stages)) {
  long total = 0;
  for (const ScheduleStage &s : stages_) {
    if (s.steps < 1 || s.iterations < 1) throw std::invalid_argument("schedule stages need positive steps and iterations");
    for (int i = 0; i < s.iterations; ++i) {
      budgets_.push_back(s.steps);
      total += s.steps;
      cumulative_.push_back(total);
    }
  }
  if (budgets_.empty()) throw std::invalid_argument("schedule is empty");
}

MbpoSchedule MbpoSchedule::full() { return MbpoSchedule({{20, 10}, {50, 6}, {250, 8}}); }

MbpoSchedule MbpoSchedule::desk() { return MbpoSchedule({{20, 5}, {50, 6}}); }

nlohmann::json to_json(const MbpoSchedule &s) {
  nlohmann::json stages = nlohmann::json::array();
  for (const ScheduleStage &st : s.stages()) stages.push_back({{"steps", st.steps}, {"iterations", st.iterations}});
  return stages;
}

MbpoSchedule schedule_from_json(const nlohmann::json &j) {
  std::vector<ScheduleStage> stages;
  for (const auto &s : j) stages.push_back({s.at("steps").get<int>(), s.at("iterations").get<int>()});
  return MbpoSchedule(std::move(stages));
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag, std::uint64_t index) {
  // splitmix64 finalizer over a simple combination
  std::uint64_t z = seed ^ (tag * 0x9e3779b97f4a7c15ull) ^ (index * 0xbf58476d1ce4e5b9ull + 0x94d049bb133111ebull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

Split assign_split(long episode, std::uint64_t seed, double train_fraction) {
  if (episode < 1) throw std::invalid_argument("episodes are numbered from 1");
  if (episode == 1) return Split::Train;
  if (episode == 2) return Split::Val;
  std::mt19937_64 rng(derive_seed(seed, 0x5711ull, static_cast<std::uint64_t>(episode)));
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < train_fraction ? Split::Train : Split::Val;
}

} // namespace pimbpo::mbpo
