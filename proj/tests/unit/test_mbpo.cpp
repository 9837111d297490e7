#include "pimbpo/mbpo/archive.hpp"

#include <doctest.h>

#include <array>
#include <cmath>
#include <filesystem>
#include <random>
#include <set>

using namespace pimbpo;
using mbpo::MbpoConfig;
using mbpo::MbpoRun;

namespace {

std::shared_ptr<const cstr::PriceSeries> prices() {
  static const auto p = std::make_shared<const cstr::PriceSeries>(cstr::synthetic_prices());
  return p;
}

// Every phase runs, but only for a handful of updates.
MbpoConfig tiny(const std::string &variant = mbpo::kMainVariant) {
  nlohmann::json j = {{"variant", variant},
                      {"schedule", {{{"steps", 12}, {"iterations", 1}}, {{"steps", 8}, {"iterations", 2}}}},
                      {"ensemble",
                       {{"members", 2},
                        {"collocation_points", 40},
                        {"init_points", 8},
                        {"adam_epochs", 3},
                        {"lbfgs_max_iterations", 3}}},
                      {"koopman_si", {{"max_epochs", 4}}},
                      {"ppo", {{"steps_per_iteration", 24}, {"minibatch", 12}, {"epochs", 1}, {"max_iterations", 2}}},
                      {"improvement", {{"check_every", 1}, {"episodes", 1}}}};
  return mbpo::mbpo_config_from_json(j);
}

std::filesystem::path scratch(const std::string &name) {
  auto dir = std::filesystem::temp_directory_path() / ("pimbpo_test_mbpo_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

} // namespace

TEST_CASE("schedule budgets replay exactly") {
  const auto full = mbpo::MbpoSchedule::full();
  std::vector<int> expected;
  for (int i = 0; i < 10; ++i) expected.push_back(20);
  for (int i = 0; i < 6; ++i) expected.push_back(50);
  for (int i = 0; i < 8; ++i) expected.push_back(250);
  CHECK(full.budgets() == expected);
  CHECK(full.iterations() == 24);
  CHECK(full.total_steps() == 2500);
  CHECK(full.cumulative(9) == 200);
  CHECK(full.cumulative(15) == 500);

  const auto desk = mbpo::MbpoSchedule::desk();
  CHECK(desk.iterations() == 11);
  CHECK(desk.total_steps() == 400);

  const auto back = mbpo::schedule_from_json(mbpo::to_json(full));
  CHECK(back.budgets() == full.budgets());
}

TEST_CASE("first two episodes split train then validation; the rest at three to one") {
  for (std::uint64_t seed : {0ull, 7ull, 123456789ull}) {
    CHECK(mbpo::assign_split(1, seed) == mbpo::Split::Train);
    CHECK(mbpo::assign_split(2, seed) == mbpo::Split::Val);
  }
  const int n = 20000;
  int train = 0;
  for (long e = 3; e < 3 + n; ++e) {
    const auto s = mbpo::assign_split(e, 99);
    CHECK(s == mbpo::assign_split(e, 99));
    train += s == mbpo::Split::Train ? 1 : 0;
  }
  const double frac = static_cast<double>(train) / n;
  CHECK(frac >= 0.72);
  CHECK(frac <= 0.78);
}

TEST_CASE("derived seeds differ across tags and indices") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t tag = 0; tag < 12; ++tag)
    for (std::uint64_t i = 0; i < 30; ++i) seen.insert(mbpo::derive_seed(5, tag, i));
  CHECK(seen.size() == 12 * 30);
  CHECK(mbpo::derive_seed(5, 1, 2) == mbpo::derive_seed(5, 1, 2));
  CHECK(mbpo::derive_seed(5, 1, 2) != mbpo::derive_seed(6, 1, 2));
}

TEST_CASE("first-iteration sampling is uniform over the action box and spends the exact budget") {
  cstr::CstrEnv env({}, prices(), 3);
  std::mt19937_64 rng(11);
  long episodes = 0;
  const int budget = 3000;
  const auto s = mbpo::sample_data(env, nullptr, budget, episodes, 17, 0.1, 0.75, rng);
  REQUIRE(s.actions.size() == static_cast<std::size_t>(budget));
  CHECK(s.train.size() + s.val.size() == static_cast<std::size_t>(budget));

  // Chi-squared on 10 equal bins per action dimension; 27.88 is the 0.999
  // quantile with nine degrees of freedom.
  for (int d = 0; d < 2; ++d) {
    std::array<int, 10> bins{};
    for (const auto &a : s.actions) bins[static_cast<std::size_t>(std::min(9, static_cast<int>((a(d) + 1.0) * 5.0)))]++;
    const double expected = budget / 10.0;
    double chi2 = 0.0;
    for (int b : bins) chi2 += (b - expected) * (b - expected) / expected;
    CHECK(chi2 < 27.88);
  }

  long total = 0;
  for (std::size_t i = 0; i < s.episodes.size(); ++i) {
    CHECK(s.episodes[i].index == static_cast<long>(i) + 1);
    CHECK(s.episodes[i].split == mbpo::assign_split(s.episodes[i].index, 17));
    total += static_cast<long>(s.episodes[i].records.size());
  }
  CHECK(total == budget);
  CHECK(episodes == static_cast<long>(s.episodes.size()));
}

TEST_CASE("a budget cut keeps the partial episode and the next call starts afresh") {
  cstr::CstrEnv env({}, prices(), 4);
  std::mt19937_64 rng(2);
  long episodes = 0;
  const auto a = mbpo::sample_data(env, nullptr, 5, episodes, 1, 0.1, 0.75, rng);
  REQUIRE(a.episodes.size() == 1);
  CHECK(a.episodes[0].records.size() == 5);
  CHECK(a.train.size() == 5); // episode 1 is always training data
  const auto b = mbpo::sample_data(env, nullptr, 5, episodes, 1, 0.1, 0.75, rng);
  REQUIRE(b.episodes.size() == 1);
  CHECK(b.episodes[0].index == 2);
  CHECK(b.episodes[0].records.front().step == 1);
  CHECK(b.val.size() == 5);
}

TEST_CASE("noise-free sampling applies the controller's action") {
  cstr::CstrEnv env({}, prices(), 5);
  cstr::CstrEnv twin({}, prices(), 5);
  const rl::MlpPolicy policy(8);
  std::mt19937_64 rng(3);
  long episodes = 0;
  const auto s = mbpo::sample_data(env, &policy, 40, episodes, 1, 0.0, 0.75, rng);
  for (const auto &e : s.episodes) CHECK(e.sigma == 0.0);

  // Replaying the same resets with the deterministic controller reproduces
  // every applied action.
  std::size_t i = 0;
  while (i < s.actions.size()) {
    twin.reset();
    while (!twin.state().done && i < s.actions.size()) {
      const Eigen::Vector2d u = policy.mean(twin.observe()).cwiseMax(-1.0).cwiseMin(1.0);
      CHECK((s.actions[i] - u).cwiseAbs().maxCoeff() < 1e-12);
      (void)twin.step(cstr::unscale_action(u));
      ++i;
    }
  }
}

TEST_CASE("variant switches are validated") {
  CHECK_THROWS_AS((void)mbpo::VariantSpec::from_name("nope"), std::invalid_argument);
  CHECK(mbpo::VariantSpec::all().size() == 5);
  MbpoConfig c = tiny();
  c.variant = {"bad", mbpo::ControllerKind::KoopmanMpc, mbpo::EnsembleKind::None, true};
  CHECK_THROWS_AS(MbpoRun(c, prices(), 1), cstr::ConfigError);
  c.variant = {"bad", mbpo::ControllerKind::Mlp, mbpo::EnsembleKind::None, false};
  CHECK_THROWS_AS(MbpoRun(c, prices(), 1), cstr::ConfigError);
}

TEST_CASE("config survives a JSON round trip") {
  const MbpoConfig c = tiny("RL_MLP");
  const nlohmann::json j = mbpo::to_json(c);
  CHECK(mbpo::to_json(mbpo::mbpo_config_from_json(j)) == j);
  CHECK(j.at("ensemble").at("kind") == "vanilla");
}

TEST_CASE("without policy optimization the bound offsets stay at zero") {
  MbpoRun run(tiny("SI_Koop"), prices(), 3);
  run.run();
  CHECK(run.cumulative_steps() == 28);
  for (const auto &r : run.reports()) {
    CHECK(r.ppo_iterations == 0);
    REQUIRE(r.policy_params.size() == 6);
    CHECK(r.policy_params.isZero(0.0));
    CHECK(r.member_val_loss.empty());
  }
  CHECK(run.ensemble() == nullptr);
}

TEST_CASE("main variant: one iteration touches every phase") {
  MbpoRun run(tiny(), prices(), 4);
  const ad::ParamVector theta_k0 = run.theta_k();
  const auto r = run.run_iteration();
  CHECK(r.iteration == 1);
  CHECK(r.budget == 12);
  CHECK(r.train_size + r.val_size == 12);
  CHECK(r.members_reset == std::vector<bool>{false, false});
  CHECK(r.member_val_loss.size() == 2);
  CHECK(r.ppo_iterations >= 1);
  CHECK(std::isfinite(r.koopman_val_loss));
  CHECK(run.theta_k().hash() != theta_k0.hash());
}

TEST_CASE("an empty validation split falls back to training data") {
  MbpoConfig c = tiny("SI_Koop");
  c.schedule = mbpo::MbpoSchedule({{5, 1}});
  MbpoRun run(c, prices(), 2);
  const auto r = run.run_iteration();
  CHECK(r.val_size == 0);
  CHECK(r.val_fallback);
  CHECK(std::isfinite(r.koopman_val_loss));
}

TEST_CASE("checkpoints round-trip and resuming matches an uninterrupted run") {
  const MbpoConfig c = tiny();
  MbpoRun straight(c, prices(), 9);
  straight.run_iteration();
  straight.run_iteration();

  MbpoRun first(c, prices(), 9);
  first.run_iteration();
  const nlohmann::json saved = first.checkpoint();
  const std::string text = saved.dump();
  MbpoRun resumed = MbpoRun::restore(nlohmann::json::parse(text), prices());
  CHECK(resumed.checkpoint().dump() == text);
  resumed.run_iteration();
  CHECK(resumed.checkpoint().dump() == straight.checkpoint().dump());
}

TEST_CASE("MLP variant checkpoints restore the network") {
  MbpoRun run(tiny("PIRL_MLP"), prices(), 5);
  run.run_iteration();
  const MbpoRun back = MbpoRun::restore(run.checkpoint(), prices());
  CHECK(back.controller().kind() == "mlp");
  CHECK(back.controller().params().hash() == run.controller().params().hash());
  CHECK(back.agent().critic_params().hash() == run.agent().critic_params().hash());
}

TEST_CASE("archives with a foreign format or version are refused") {
  MbpoRun run(tiny("SI_Koop"), prices(), 1);
  nlohmann::json j = run.checkpoint();
  j["version"] = mbpo::kArchiveVersion + 1;
  CHECK_THROWS_AS((void)MbpoRun::restore(j, prices()), mbpo::ArchiveError);
  j = run.checkpoint();
  j["format"] = "something-else";
  CHECK_THROWS_AS((void)MbpoRun::restore(j, prices()), mbpo::ArchiveError);
  j = run.checkpoint();
  j.erase("agent");
  CHECK_THROWS_AS((void)MbpoRun::restore(j, prices()), mbpo::ArchiveError);
}

TEST_CASE("run directory holds logs, metrics and one checkpoint per iteration") {
  const auto dir = scratch("run_dir");
  MbpoRun run(tiny(), prices(), 6);
  run.set_run_directory(dir);
  run.run();
  const auto checkpoints = mbpo::list_checkpoints(dir);
  REQUIRE(checkpoints.size() == 3);
  CHECK(mbpo::latest_checkpoint(dir).filename() == "iter_003.json");
  CHECK(std::filesystem::exists(dir / "metrics" / "ppo_iter_001.csv"));
  CHECK(std::filesystem::exists(dir / "iterations.jsonl"));
  int episode_logs = 0;
  for (const auto &e : std::filesystem::directory_iterator(dir / "episodes")) episode_logs += e.is_regular_file();
  CHECK(episode_logs >= 3);

  const MbpoRun back = mbpo::load_archive(checkpoints.back(), prices());
  CHECK(back.finished());
  CHECK(back.checkpoint().dump() == run.checkpoint().dump());

  const auto copy = dir / "copy.json";
  mbpo::save_archive(copy, run);
  CHECK(mbpo::read_archive(copy).dump() == run.checkpoint().dump());
  std::filesystem::remove_all(dir);
}
