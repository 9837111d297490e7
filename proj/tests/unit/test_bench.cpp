#include "pimbpo/bench/cli.hpp"
#include "pimbpo/bench/config.hpp"
#include "pimbpo/bench/export.hpp"
#include "pimbpo/bench/variants.hpp"
#include "pimbpo/diff/checkpoint.hpp"
#include "pimbpo/mbpo/archive.hpp"

#include <doctest.h>

#include <fstream>
#include <sstream>

using namespace pimbpo;
namespace fs = std::filesystem;

namespace {

const cstr::PriceSeries &prices() {
  static const cstr::PriceSeries p = cstr::synthetic_prices();
  return p;
}

std::shared_ptr<const cstr::PriceSeries> shared_prices() {
  static const auto p = std::make_shared<const cstr::PriceSeries>(prices());
  return p;
}

fs::path scratch(const std::string &name) {
  auto dir = fs::temp_directory_path() / ("pimbpo_test_bench_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

nlohmann::json tiny_run_config(const fs::path &output) {
  return {{"variant", mbpo::kMainVariant},
          {"seeds", {1}},
          {"output_dir", output.string()},
          {"schedule", {{{"steps", 10}, {"iterations", 2}}}},
          {"ensemble",
           {{"members", 2},
            {"collocation_points", 40},
            {"init_points", 8},
            {"adam_epochs", 3},
            {"lbfgs_max_iterations", 3}}},
          {"koopman_si", {{"max_epochs", 4}}},
          {"ppo", {{"steps_per_iteration", 24}, {"minibatch", 12}, {"epochs", 1}, {"max_iterations", 2}}},
          {"improvement", {{"check_every", 1}, {"episodes", 1}}},
          {"eval", {{"episodes", 2}}}};
}

struct CliResult {
  int code = 0;
  std::string out, err;
};

CliResult cli(std::vector<std::string> args) {
  args.insert(args.begin(), "pimbpo");
  std::vector<const char *> argv;
  for (const auto &a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = bench::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

bool one_error_line(const std::string &err) {
  return err.starts_with("error: ") && err.find('\n') == err.size() - 1;
}

} // namespace

TEST_CASE("steady-state production costs exactly the nominal cost") {
  const auto m = bench::evaluate(bench::steady_state_controller(), prices());
  REQUIRE(m.episodes.size() == 10);
  for (const auto &e : m.episodes) {
    CHECK(e.steps == 168);
    CHECK(std::abs(e.relative_cost - 1.0) < 1e-9);
    CHECK(e.violations == 0);
  }
  CHECK(m.violations.mean == 0.0);
}

TEST_CASE("switching the coolant off is cheap but leaves the temperature band") {
  const auto m = bench::evaluate(bench::zero_cooling_controller(), prices());
  for (const auto &e : m.episodes) {
    CHECK(e.relative_cost < 1.0);
    CHECK(e.violations > 0);
  }
}

TEST_CASE("test weeks are the first ten back-to-back windows of held-out prices") {
  const auto w = bench::test_windows(prices(), {});
  REQUIRE(w.size() == 10);
  CHECK(w.front() == prices().begin(cstr::Partition::Eval));
  for (std::size_t i = 1; i < w.size(); ++i) CHECK(w[i] - w[i - 1] == 178);
}

TEST_CASE("stored nominal cost matches an independent recomputation") {
  const auto m = bench::evaluate(bench::UniformRandomPolicy(3), prices());
  for (const auto &e : m.episodes) {
    double nominal = 0.0;
    for (std::size_t t = e.window_start; t < e.window_start + 168; ++t) nominal += 390.0 * prices().prices[t];
    CHECK(std::abs(e.nominal_cost - nominal) <= 1e-9 * nominal);
    CHECK(std::abs(e.relative_cost - e.cost / nominal) < 1e-12);
  }
}

TEST_CASE("evaluation is deterministic") {
  const rl::MlpPolicy mlp(4);
  CHECK(bench::to_json(bench::evaluate(mlp, prices())) == bench::to_json(bench::evaluate(mlp, prices())));
  CHECK(bench::to_json(bench::evaluate(bench::UniformRandomPolicy(5), prices())) ==
        bench::to_json(bench::evaluate(bench::UniformRandomPolicy(5), prices())));
}

TEST_CASE("a uniform-random controller violates constraints in most hours") {
  const auto m = bench::evaluate(bench::UniformRandomPolicy(1), prices());
  CHECK(m.violations.mean > 50.0);
}

TEST_CASE("pooling averages episodes across runs") {
  const auto a = bench::evaluate(bench::steady_state_controller(), prices());
  const auto b = bench::evaluate(bench::zero_cooling_controller(), prices());
  const auto p = bench::pool({a, b});
  CHECK(p.episodes.size() == 20);
  CHECK(std::abs(p.relative_cost.mean - 0.5 * (a.relative_cost.mean + b.relative_cost.mean)) < 1e-12);
}

TEST_CASE("variants differ only along the declared axes") {
  const mbpo::MbpoConfig base = mbpo::mbpo_config_from_json(nlohmann::json::object());
  const nlohmann::json reference = mbpo::to_json(base);
  for (const auto &spec : mbpo::VariantSpec::all()) {
    nlohmann::json j = mbpo::to_json(bench::make_variant(spec.name, base));
    CHECK(j.at("variant") == spec.name);
    const std::string kind = spec.ensemble == mbpo::EnsembleKind::Vanilla ? "vanilla" : "pinn";
    CHECK(j.at("ensemble").at("kind") == kind);
    j["variant"] = reference.at("variant");
    j["ensemble"]["kind"] = reference.at("ensemble").at("kind");
    CHECK(j == reference);
  }
  CHECK_THROWS_AS((void)bench::make_variant("MPC_Only", base), std::invalid_argument);
}

TEST_CASE("run config round-trips and rejects unknown keys") {
  const fs::path dir = scratch("config");
  const bench::RunConfig c = bench::run_config_from_json(tiny_run_config(dir));
  CHECK(bench::to_json(bench::run_config_from_json(bench::to_json(c))) == bench::to_json(c));
  CHECK(c.eval.episodes == 2);
  nlohmann::json bad = tiny_run_config(dir);
  bad["ppo_epochs"] = 3;
  CHECK_THROWS_AS((void)bench::run_config_from_json(bad), std::invalid_argument);
}

TEST_CASE("shipped presets load") {
  for (const char *name : {"desk.json", "full.json"}) {
    const bench::RunConfig c = bench::load_run_config(fs::path(PIMBPO_CONFIG_DIR) / name);
    CHECK(c.mbpo.variant.name == mbpo::kMainVariant);
  }
  CHECK(bench::load_run_config(fs::path(PIMBPO_CONFIG_DIR) / "full.json").mbpo.schedule.total_steps() == 2500);
  CHECK(bench::load_run_config(fs::path(PIMBPO_CONFIG_DIR) / "desk.json").mbpo.schedule.total_steps() == 400);
}

TEST_CASE("transitions CSV round-trips and names bad lines") {
  cstr::TransitionSet data = {{{0.1, 0.7}, {1.0, 390.0}, {0.12, 0.71}}, {{0.2, 0.75}, {0.9, 0.0}, {0.3, 0.8}}};
  std::stringstream ss;
  cstr::write_transitions_csv(ss, data);
  const auto back = cstr::read_transitions_csv(ss);
  REQUIRE(back.size() == 2);
  CHECK(back[1].u.F == 0.0);
  CHECK(back[0].next.T == 0.71);
  std::stringstream bad("c,T,rho,F,c_next,T_next\n1,2,3\n");
  CHECK_THROWS_WITH_AS((void)cstr::read_transitions_csv(bad), doctest::Contains("line 2"), std::runtime_error);
}

TEST_CASE("closed-loop predictions share the start state and the applied actions") {
  pinn::EnsembleConfig cfg;
  cfg.members = 2;
  cfg.collocation_points = 40;
  cfg.init_points = 8;
  const pinn::Ensemble ens(cfg, 2);
  bench::ClosedLoopConfig loop;
  loop.steps = 20;
  const auto p = bench::closed_loop_predictions(ens, prices(), loop);
  REQUIRE(p.real.size() == 21);
  REQUIRE(p.predicted.size() == 2);
  for (const auto &traj : p.predicted) {
    REQUIRE(traj.size() == 21);
    CHECK(traj[0].c == p.real[0].c);
  }
  double sq = 0.0, abs = 0.0;
  for (int t = 1; t <= 20; ++t) {
    const Eigen::Vector2d e = cstr::scale_state(p.predicted[1][t]) - cstr::scale_state(p.real[t]);
    sq += e(0) * e(0) + e(1) * e(1);
    abs += (std::abs(e(0)) + std::abs(e(1))) / 2.0;
  }
  CHECK(std::abs(p.mse[1] - sq / 20.0) < 1e-12);
  CHECK(std::abs(p.mae[1] - abs / 20.0) < 1e-12);

  // Steady actions with no noise keep the plant at steady state.
  loop.noise = 0.0;
  const auto still = bench::closed_loop_predictions(ens, prices(), loop);
  CHECK(std::abs(still.real.back().T - cstr::kSteadyState.T) < 1e-3);
  std::stringstream csv;
  bench::write_closed_loop_csv(csv, still);
  std::string header;
  std::getline(csv, header);
  CHECK(header == "step,source,c,T,rho,F");
}

TEST_CASE("bound-offset history starts from zeros and has one row per iteration") {
  const fs::path dir = scratch("theta");
  bench::RunConfig c = bench::run_config_from_json(tiny_run_config(dir));
  c.mbpo.schedule = mbpo::MbpoSchedule({{8, 3}});
  mbpo::MbpoRun run(c.mbpo, shared_prices(), 3);
  run.set_run_directory(dir / "seed_3");
  run.run();
  const auto rows = bench::export_theta_B_history(dir);
  REQUIRE(rows.size() == 4);
  CHECK(rows[0].iteration == 0);
  CHECK(rows[0].theta.isZero(0.0));
  for (int k = 1; k <= 3; ++k) {
    CHECK(rows[static_cast<std::size_t>(k)].iteration == k);
    CHECK(rows[static_cast<std::size_t>(k)].theta == run.reports()[static_cast<std::size_t>(k - 1)].policy_params);
  }
  std::stringstream csv;
  bench::write_theta_csv(csv, rows);
  int lines = 0;
  for (std::string l; std::getline(csv, l);) ++lines;
  CHECK(lines == 5);
  fs::remove_all(dir);
}

TEST_CASE("cli: usage errors exit 2 with one error line") {
  auto r = cli({"frobnicate"});
  CHECK(r.code == bench::kExitUsage);
  CHECK(one_error_line(r.err));
  r = cli({});
  CHECK(r.code == bench::kExitUsage);
  r = cli({"train", "--seed", "1"});
  CHECK(r.code == bench::kExitUsage);
  CHECK(one_error_line(r.err));
  r = cli({"evaluate"});
  CHECK(r.code == bench::kExitUsage);
  r = cli({"evaluate", "--baseline", "steady", "--checkpoint", "x.json"});
  CHECK(r.code == bench::kExitUsage);
  r = cli({"train", "--config", "/nonexistent/config.json"});
  CHECK(r.code == bench::kExitUsage);
}

TEST_CASE("cli: help documents every subcommand") {
  const auto r = cli({"--help"});
  CHECK(r.code == bench::kExitOk);
  for (const char *sub : {"train", "evaluate", "sysid", "ensemble-eval", "export-metrics"})
    CHECK(r.out.find(sub) != std::string::npos);
  const auto t = cli({"train", "--help"});
  CHECK(t.code == bench::kExitOk);
  CHECK(t.out.find("--resume") != std::string::npos);
}

TEST_CASE("cli: baselines evaluate from the command line") {
  auto r = cli({"evaluate", "--baseline", "steady"});
  REQUIRE(r.code == bench::kExitOk);
  auto j = nlohmann::json::parse(r.out);
  CHECK(std::abs(j.at("relative_cost").at("mean").get<double>() - 1.0) < 1e-9);
  r = cli({"evaluate", "--baseline", "random", "--episodes", "3"});
  REQUIRE(r.code == bench::kExitOk);
  j = nlohmann::json::parse(r.out);
  CHECK(j.at("episodes").size() == 3);
  CHECK(j.at("violations").at("mean").get<double>() > 50.0);
}

TEST_CASE("cli: runtime failures exit 1 with one error line") {
  const fs::path dir = scratch("runtime");
  {
    std::ofstream os(dir / "broken.json");
    os << "{\"format\": \"pimbpo-run\", \"version\": 99}";
  }
  const auto r = cli({"evaluate", "--checkpoint", (dir / "broken.json").string()});
  CHECK(r.code == bench::kExitFailure);
  CHECK(one_error_line(r.err));
  CHECK(r.err.starts_with("error: runtime: "));
  fs::remove_all(dir);
}

TEST_CASE("cli: train, evaluate, ensemble-eval and export-metrics on a tiny run") {
  const fs::path dir = scratch("train");
  const fs::path config = dir / "tiny.json";
  {
    std::ofstream os(config);
    os << tiny_run_config(dir / "runs").dump(2);
  }
  auto r = cli({"train", "--config", config.string(), "--seed", "1"});
  REQUIRE_MESSAGE(r.code == bench::kExitOk, r.err);
  const fs::path run_dir = dir / "runs" / mbpo::kMainVariant / "seed_1";
  CHECK(mbpo::list_checkpoints(run_dir).size() == 2);
  CHECK(fs::exists(run_dir / "config.json"));
  CHECK(fs::exists(run_dir / "eval.json"));

  // Training again into the same directory needs an explicit resume.
  r = cli({"train", "--config", config.string(), "--seed", "1"});
  CHECK(r.code == bench::kExitFailure);
  r = cli({"train", "--config", config.string(), "--seed", "1", "--resume"});
  CHECK(r.code == bench::kExitOk);

  r = cli({"evaluate", "--checkpoint", run_dir.string()});
  REQUIRE_MESSAGE(r.code == bench::kExitOk, r.err);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j.at("controller") == mbpo::kMainVariant);
  CHECK(j.at("episodes").size() == 2);
  // Evaluating the checkpoint reproduces the metrics written after training.
  std::ifstream is(run_dir / "eval.json");
  const auto stored = nlohmann::json::parse(is);
  CHECK(stored.at("relative_cost") == j.at("relative_cost"));

  r = cli({"evaluate", "--checkpoint", run_dir.string(), "--variant", "RL_MLP"});
  CHECK(r.code == bench::kExitFailure);
  CHECK(r.err.find("SI_Koop+PIRL_Bounds") != std::string::npos);

  const fs::path csv = dir / "pred.csv";
  r = cli({"ensemble-eval", "--checkpoint", run_dir.string(), "--output", csv.string(), "--steps", "12"});
  REQUIRE_MESSAGE(r.code == bench::kExitOk, r.err);
  CHECK(nlohmann::json::parse(r.out).at("member_mse").size() == 2);
  int lines = 0;
  {
    std::ifstream in(csv);
    for (std::string l; std::getline(in, l);) ++lines;
  }
  CHECK(lines == 1 + 3 * 13);

  r = cli({"export-metrics", "--run", (dir / "runs").string(), "--output", (dir / "export").string()});
  REQUIRE_MESSAGE(r.code == bench::kExitOk, r.err);
  CHECK(fs::exists(dir / "export" / "theta_B_history.csv"));
  CHECK(fs::exists(dir / "export" / "iterations.csv"));
  std::ifstream m(dir / "export" / "metrics.json");
  const auto metrics = nlohmann::json::parse(m);
  CHECK(metrics.at("runs").size() == 1);
  CHECK(metrics.at("pooled_eval").at("episodes") == 2);
  fs::remove_all(dir);
}

TEST_CASE("cli: sysid fits a Koopman model to a transitions file") {
  const fs::path dir = scratch("sysid");
  cstr::CstrEnv env({}, shared_prices(), 1);
  std::mt19937_64 rng(1);
  long episodes = 0;
  const auto s = mbpo::sample_data(env, nullptr, 60, episodes, 1, 0.1, 0.75, rng);
  cstr::TransitionSet all = s.train;
  all.insert(all.end(), s.val.begin(), s.val.end());
  {
    std::ofstream os(dir / "transitions.csv");
    cstr::write_transitions_csv(os, all);
  }
  const fs::path out = dir / "koopman.json";
  const auto r = cli({"sysid", "--transitions", (dir / "transitions.csv").string(), "--output", out.string(),
                      "--max-epochs", "5", "--seed", "2"});
  REQUIRE_MESSAGE(r.code == bench::kExitOk, r.err);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j.at("train_size").get<int>() + j.at("val_size").get<int>() == 60);
  const ad::ParamVector p = ad::load_params(out);
  CHECK(p.same_layout(koopman::KoopmanModel().init(0)));
  fs::remove_all(dir);
}
