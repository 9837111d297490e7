#include "pimbpo/bench/cli.hpp"

#include "pimbpo/bench/config.hpp"
#include "pimbpo/bench/evaluate.hpp"
#include "pimbpo/bench/export.hpp"
#include "pimbpo/bench/variants.hpp"
#include "pimbpo/diff/checkpoint.hpp"
#include "pimbpo/mbpo/archive.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <ostream>
#include <random>

namespace pimbpo::bench {

namespace fs = std::filesystem;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  std::replace(s.begin(), s.end(), '\r', ' ');
  return s;
}

void write_json(const fs::path &path, const nlohmann::json &j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

template <class Fn> void write_file(const fs::path &path, Fn &&fn) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  fn(os);
}

/// A checkpoint argument may name an archive file or a run directory, in
/// which case its latest checkpoint is used.
fs::path resolve_checkpoint(const fs::path &arg) {
  if (fs::is_directory(arg)) return mbpo::latest_checkpoint(arg);
  if (!fs::exists(arg)) throw std::runtime_error("checkpoint " + arg.string() + " does not exist");
  return arg;
}

/// Price and evaluation settings: an explicit config wins, then the config
/// snapshot stored next to the checkpoint, then the defaults.
RunConfig context_config(const std::string &config_path, const fs::path &checkpoint) {
  if (!config_path.empty()) return load_run_config(config_path);
  if (!checkpoint.empty()) {
    const fs::path snapshot = checkpoint.parent_path().parent_path() / "config.json";
    if (fs::exists(snapshot)) return load_run_config(snapshot);
  }
  return {};
}

// --------------------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::vector<std::uint64_t> seeds;
  std::string output;
  std::string variant;
  bool resume = false;
};

fs::path run_directory(const RunConfig &cfg, std::uint64_t seed) {
  return fs::path(cfg.output_dir) / cfg.mbpo.variant.name / ("seed_" + std::to_string(seed));
}

void train(const TrainArgs &args, std::ostream &out) {
  RunConfig cfg = load_run_config(args.config);
  if (!args.variant.empty()) cfg.mbpo = make_variant(args.variant, cfg.mbpo);
  if (!args.output.empty()) cfg.output_dir = args.output;
  if (!args.seeds.empty()) cfg.seeds = args.seeds;
  const auto prices = load_prices(cfg.prices);

  for (std::uint64_t seed : cfg.seeds) {
    const fs::path dir = run_directory(cfg, seed);
    RunConfig snapshot = cfg;
    snapshot.seeds = {seed};
    std::unique_ptr<mbpo::MbpoRun> run;
    if (args.resume && !mbpo::list_checkpoints(dir).empty()) {
      run = std::make_unique<mbpo::MbpoRun>(mbpo::load_archive(mbpo::latest_checkpoint(dir), prices));
      if (run->config().variant.name != cfg.mbpo.variant.name)
        throw std::runtime_error("checkpoint in " + dir.string() + " belongs to variant " +
                                 run->config().variant.name);
    } else {
      if (!mbpo::list_checkpoints(dir).empty())
        throw std::runtime_error("run directory " + dir.string() + " already holds checkpoints; pass --resume");
      run = std::make_unique<mbpo::MbpoRun>(cfg.mbpo, prices, seed);
    }
    run->set_run_directory(dir);
    write_json(dir / "config.json", to_json(snapshot));

    run->run([&](const mbpo::MbpoRun &r, const mbpo::IterationReport &report) {
      nlohmann::json line = {{"seed", seed}, {"report", mbpo::to_json(report)}};
      if (cfg.evaluate_each_iteration) {
        const EvalMetrics m = evaluate(r.controller(), *prices, cfg.eval);
        line["eval"] = to_json(m);
        std::ofstream os(dir / "eval_history.jsonl", std::ios::app);
        os << nlohmann::json{{"iteration", report.iteration},
                             {"cumulative_steps", report.cumulative_steps},
                             {"eval", to_json(m)}}
                  .dump()
           << '\n';
      }
      out << line.dump() << std::endl;
    });

    const EvalMetrics metrics = evaluate(run->controller(), *prices, cfg.eval);
    write_json(dir / "eval.json", to_json(metrics));
    out << nlohmann::json{{"seed", seed},
                          {"run_directory", dir.string()},
                          {"cumulative_steps", run->cumulative_steps()},
                          {"relative_cost", metrics.relative_cost.mean},
                          {"violations", metrics.violations.mean}}
               .dump()
        << std::endl;
  }
}

// --------------------------------------------------------------------------

struct EvaluateArgs {
  std::string checkpoint;
  std::string baseline;
  std::string config;
  std::string prices;
  std::string variant;
  std::uint64_t seed = 0;
  int episodes = 0;
  std::string output;
  std::string episodes_csv;
};

void evaluate_cmd(const EvaluateArgs &args, std::ostream &out) {
  if (args.checkpoint.empty() == args.baseline.empty())
    throw UsageError("evaluate needs exactly one of --checkpoint and --baseline");
  const fs::path checkpoint = args.checkpoint.empty() ? fs::path() : resolve_checkpoint(args.checkpoint);
  RunConfig cfg = context_config(args.config, checkpoint);
  if (!args.prices.empty()) cfg.prices.path = args.prices;
  if (args.episodes > 0) cfg.eval.episodes = args.episodes;
  const auto prices = load_prices(cfg.prices);

  std::unique_ptr<rl::Policy> controller;
  std::string label;
  if (!checkpoint.empty()) {
    const mbpo::MbpoRun run = mbpo::load_archive(checkpoint, prices);
    if (!args.variant.empty() && args.variant != run.config().variant.name)
      throw std::runtime_error("checkpoint holds variant " + run.config().variant.name + ", not " + args.variant);
    controller = run.controller().clone();
    label = run.config().variant.name;
  } else if (args.baseline == "steady") {
    controller = std::make_unique<ConstantPolicy>(steady_state_controller());
  } else if (args.baseline == "zero-cooling") {
    controller = std::make_unique<ConstantPolicy>(zero_cooling_controller());
  } else if (args.baseline == "random") {
    controller = std::make_unique<UniformRandomPolicy>(args.seed);
  } else if (args.baseline == "untrained-mlp") {
    controller = std::make_unique<rl::MlpPolicy>(args.seed);
  }
  if (label.empty()) label = args.baseline;

  const EvalMetrics m = evaluate(*controller, *prices, cfg.eval);
  nlohmann::json j = to_json(m);
  j["controller"] = label;
  if (!checkpoint.empty()) j["checkpoint"] = checkpoint.string();
  if (!args.output.empty()) write_json(args.output, j);
  if (!args.episodes_csv.empty()) {
    write_file(args.episodes_csv, [&](std::ostream &os) {
      os << "episode,window_start,steps,total_reward,violations,cost,nominal_cost,relative_cost\n";
      for (std::size_t i = 0; i < m.episodes.size(); ++i) {
        const EpisodeMetrics &e = m.episodes[i];
        os << i << ',' << e.window_start << ',' << e.steps << ',' << e.total_reward << ',' << e.violations << ','
           << e.cost << ',' << e.nominal_cost << ',' << e.relative_cost << '\n';
      }
    });
  }
  out << j.dump() << std::endl;
}

// --------------------------------------------------------------------------

struct SysidArgs {
  std::string transitions;
  std::string output;
  std::uint64_t seed = 0;
  double val_fraction = 0.25;
  koopman::SiConfig si;
};

void sysid(const SysidArgs &args, std::ostream &out) {
  std::ifstream is(args.transitions);
  if (!is) throw std::runtime_error("cannot open transitions " + args.transitions);
  cstr::TransitionSet all = cstr::read_transitions_csv(is);
  if (all.size() < 2) throw std::runtime_error("system identification needs at least two transitions");

  std::vector<std::size_t> order(all.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(mbpo::derive_seed(args.seed, 0x5151, 0));
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_val = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::lround(args.val_fraction * static_cast<double>(all.size()))), 1,
      all.size() - 1);
  cstr::TransitionSet train, val;
  for (std::size_t i = 0; i < order.size(); ++i) (i < n_val ? val : train).push_back(all[order[i]]);

  const koopman::KoopmanModel model;
  const koopman::SiResult r =
      koopman::train_si(model, model.init(mbpo::derive_seed(args.seed, 0x5152, 0)), train, val, args.si, args.seed);
  ad::save_params(args.output, r.params);
  const int best = r.history.best_epoch;
  out << nlohmann::json{{"output", args.output},
                        {"train_size", train.size()},
                        {"val_size", val.size()},
                        {"epochs", r.history.val_loss.size()},
                        {"best_epoch", best},
                        {"best_val_loss", best >= 0 ? r.history.val_loss[static_cast<std::size_t>(best)] : NAN},
                        {"early_stopped", r.history.early_stopped}}
             .dump()
      << std::endl;
}

// --------------------------------------------------------------------------

struct EnsembleEvalArgs {
  std::string checkpoint;
  std::string config;
  std::string output;
  ClosedLoopConfig loop;
};

void ensemble_eval(const EnsembleEvalArgs &args, std::ostream &out) {
  const fs::path checkpoint = resolve_checkpoint(args.checkpoint);
  const RunConfig cfg = context_config(args.config, checkpoint);
  const auto prices = load_prices(cfg.prices);
  const mbpo::MbpoRun run = mbpo::load_archive(checkpoint, prices);
  if (!run.ensemble() || run.ensemble()->size() == 0)
    throw std::runtime_error("checkpoint " + checkpoint.string() + " holds no trained ensemble");
  const ClosedLoopPrediction p = closed_loop_predictions(*run.ensemble(), *prices, args.loop);
  if (!args.output.empty()) write_file(args.output, [&](std::ostream &os) { write_closed_loop_csv(os, p); });
  out << nlohmann::json{{"checkpoint", checkpoint.string()},
                        {"steps", args.loop.steps},
                        {"member_mse", p.mse},
                        {"member_mae", p.mae},
                        {"mean_mse", p.mean_mse()}}
             .dump()
      << std::endl;
}

// --------------------------------------------------------------------------

struct ExportArgs {
  std::string run;
  std::string output;
};

void export_metrics(const ExportArgs &args, std::ostream &out) {
  const fs::path root = args.run;
  const auto runs = find_runs(root);
  if (runs.empty()) throw std::runtime_error("no run directories with checkpoints below " + root.string());
  const fs::path dest = args.output.empty() ? root : fs::path(args.output);

  const std::vector<ThetaRow> theta = export_theta_B_history(root);
  write_file(dest / "theta_B_history.csv", [&](std::ostream &os) { write_theta_csv(os, theta); });

  nlohmann::json summary = {{"runs", nlohmann::json::array()}};
  std::vector<EvalMetrics> evals;
  write_file(dest / "iterations.csv", [&](std::ostream &os) {
    os << "run,seed,iteration,budget,cumulative_steps,train_size,val_size,val_fallback,koopman_val_loss,"
          "mean_member_val_loss,ppo_iterations,ppo_stopped_by_ratio\n";
    for (const fs::path &dir : runs) {
      const nlohmann::json a = mbpo::read_archive(mbpo::latest_checkpoint(dir));
      const auto seed = a.at("seed").get<std::uint64_t>();
      for (const auto &r : a.at("reports")) {
        double member = 0.0;
        const auto losses = r.at("member_val_loss").get<std::vector<double>>();
        for (double l : losses) member += l;
        if (!losses.empty()) member /= static_cast<double>(losses.size());
        const auto koop = r.at("koopman_val_loss");
        os << dir.string() << ',' << seed << ',' << r.at("iteration").get<int>() << ','
           << r.at("budget").get<int>() << ',' << r.at("cumulative_steps").get<long>() << ','
           << r.at("train_size").get<std::size_t>() << ',' << r.at("val_size").get<std::size_t>() << ','
           << (r.at("val_fallback").get<bool>() ? 1 : 0) << ','
           << (koop.is_number() ? koop.get<double>() : NAN) << ',' << (losses.empty() ? NAN : member) << ','
           << r.at("ppo_iterations").get<int>() << ',' << (r.at("ppo_stopped_by_ratio").get<bool>() ? 1 : 0)
           << '\n';
      }
      nlohmann::json entry = {{"run", dir.string()},
                              {"seed", seed},
                              {"variant", a.at("config").at("variant")},
                              {"iterations", a.at("iteration")},
                              {"cumulative_steps", a.at("cumulative_steps")}};
      if (fs::exists(dir / "eval.json")) {
        std::ifstream is(dir / "eval.json");
        const nlohmann::json e = nlohmann::json::parse(is);
        entry["eval"] = {{"reward", e.at("reward")},
                         {"violations", e.at("violations")},
                         {"relative_cost", e.at("relative_cost")}};
        EvalMetrics m;
        for (const auto &ep : e.at("episodes")) {
          EpisodeMetrics em;
          em.window_start = ep.at("window_start").get<std::size_t>();
          em.steps = ep.at("steps").get<int>();
          em.total_reward = ep.at("total_reward").get<double>();
          em.violations = ep.at("violations").get<int>();
          em.cost = ep.at("cost").get<double>();
          em.nominal_cost = ep.at("nominal_cost").get<double>();
          em.relative_cost = ep.at("relative_cost").get<double>();
          m.episodes.push_back(em);
        }
        evals.push_back(std::move(m));
      }
      summary["runs"].push_back(entry);
    }
  });
  if (!evals.empty()) {
    const EvalMetrics pooled = pool(evals);
    summary["pooled_eval"] = {{"episodes", pooled.episodes.size()},
                              {"reward", {{"mean", pooled.reward.mean}, {"std", pooled.reward.std}}},
                              {"violations", {{"mean", pooled.violations.mean}, {"std", pooled.violations.std}}},
                              {"relative_cost",
                               {{"mean", pooled.relative_cost.mean}, {"std", pooled.relative_cost.std}}}};
  }
  write_json(dest / "metrics.json", summary);
  out << nlohmann::json{{"runs", runs.size()},
                        {"theta_rows", theta.size()},
                        {"theta_B_history", (dest / "theta_B_history.csv").string()},
                        {"iterations", (dest / "iterations.csv").string()},
                        {"metrics", (dest / "metrics.json").string()}}
             .dump()
      << std::endl;
}

} // namespace

int run_cli(int argc, const char *const *argv, std::ostream &out, std::ostream &err) {
  CLI::App app{"Koopman eNMPC training with model-based policy optimization on a CSTR demand-response task",
               "pimbpo"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto *train_cmd = app.add_subcommand("train", "Run MBPO training; one run directory per seed");
  train_cmd->add_option("--config", train_args.config, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--seed", train_args.seeds, "Seed(s) to train; defaults to the config's seeds");
  train_cmd->add_option("--output", train_args.output, "Output root; overrides output_dir of the config");
  train_cmd->add_option("--variant", train_args.variant, "Controller variant; overrides the config")
      ->check(CLI::IsMember({"SI_Koop+PIRL_Bounds", "SI_Koop+RL_Bounds", "SI_Koop", "PIRL_MLP", "RL_MLP"}));
  train_cmd->add_flag("--resume", train_args.resume, "Continue from the latest checkpoint of each run directory");

  EvaluateArgs eval_args;
  auto *eval_cmd = app.add_subcommand("evaluate", "Noise-free evaluation on the held-out test weeks");
  auto *ck = eval_cmd->add_option("--checkpoint", eval_args.checkpoint,
                                  "Run archive, or a run directory to use its latest checkpoint");
  auto *bl = eval_cmd->add_option("--baseline", eval_args.baseline, "Built-in controller instead of a checkpoint")
                 ->check(CLI::IsMember({"steady", "zero-cooling", "random", "untrained-mlp"}));
  ck->excludes(bl);
  eval_cmd->add_option("--config", eval_args.config, "Run configuration for prices and evaluation settings")
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--prices", eval_args.prices, "Price CSV (timestamp,price); overrides the config")
      ->check(CLI::ExistingFile);
  eval_cmd->add_option("--variant", eval_args.variant, "Expected variant of the checkpoint");
  eval_cmd->add_option("--seed", eval_args.seed, "Seed of the random and untrained-mlp baselines");
  eval_cmd->add_option("--episodes", eval_args.episodes, "Number of test weeks")->check(CLI::PositiveNumber);
  eval_cmd->add_option("--output", eval_args.output, "Write the metrics JSON here as well");
  eval_cmd->add_option("--episodes-csv", eval_args.episodes_csv, "Write per-episode metrics as CSV");

  SysidArgs sysid_args;
  auto *sysid_cmd = app.add_subcommand("sysid", "Fit a Koopman model to a transitions CSV");
  sysid_cmd->add_option("--transitions", sysid_args.transitions, "CSV with header c,T,rho,F,c_next,T_next")
      ->required()
      ->check(CLI::ExistingFile);
  sysid_cmd->add_option("--output", sysid_args.output, "Parameter checkpoint; .json or binary by extension")
      ->required();
  sysid_cmd->add_option("--seed", sysid_args.seed, "Seed for the split, initialization and minibatches");
  sysid_cmd->add_option("--val-fraction", sysid_args.val_fraction, "Share of transitions held out")
      ->check(CLI::Range(0.01, 0.99));
  sysid_cmd->add_option("--learning-rate", sysid_args.si.learning_rate, "Adam learning rate")
      ->check(CLI::PositiveNumber);
  sysid_cmd->add_option("--batch-size", sysid_args.si.batch_size, "Minibatch size")->check(CLI::PositiveNumber);
  sysid_cmd->add_option("--max-epochs", sysid_args.si.max_epochs, "Epoch limit")->check(CLI::PositiveNumber);
  sysid_cmd->add_option("--patience", sysid_args.si.patience, "Early-stopping patience in epochs")
      ->check(CLI::PositiveNumber);

  EnsembleEvalArgs ens_args;
  auto *ens_cmd = app.add_subcommand("ensemble-eval", "Chained ensemble predictions along a real trajectory");
  ens_cmd->add_option("--checkpoint", ens_args.checkpoint, "Run archive or run directory")->required();
  ens_cmd->add_option("--config", ens_args.config, "Run configuration for prices")->check(CLI::ExistingFile);
  ens_cmd->add_option("--output", ens_args.output, "Prediction CSV (step,source,c,T,rho,F)");
  ens_cmd->add_option("--steps", ens_args.loop.steps, "Trajectory length in hours")->check(CLI::PositiveNumber);
  ens_cmd->add_option("--noise", ens_args.loop.noise, "Scaled action noise around steady state")
      ->check(CLI::NonNegativeNumber);
  ens_cmd->add_option("--seed", ens_args.loop.seed, "Seed of the action noise");
  ens_cmd->add_option("--window-start", ens_args.loop.window_start, "First price index of the trajectory");

  ExportArgs export_args;
  auto *export_cmd = app.add_subcommand("export-metrics", "Write bound-offset history and iteration metrics");
  export_cmd->add_option("--run", export_args.run, "Run directory, or a directory holding several runs")
      ->required()
      ->check(CLI::ExistingDirectory);
  export_cmd->add_option("--output", export_args.output, "Destination directory; defaults to --run");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError &e) {
    err << "error: usage: " << one_line(e.what()) << std::endl;
    return kExitUsage;
  }

  try {
    if (*train_cmd) train(train_args, out);
    else if (*eval_cmd) evaluate_cmd(eval_args, out);
    else if (*sysid_cmd) sysid(sysid_args, out);
    else if (*ens_cmd) ensemble_eval(ens_args, out);
    else if (*export_cmd) export_metrics(export_args, out);
  } catch (const UsageError &e) {
    err << "error: usage: " << one_line(e.what()) << std::endl;
    return kExitUsage;
  } catch (const std::exception &e) {
    err << "error: runtime: " << one_line(e.what()) << std::endl;
    return kExitFailure;
  }
  return kExitOk;
}

} // namespace pimbpo::bench
