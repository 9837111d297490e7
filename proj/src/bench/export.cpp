#include "pimbpo/bench/export.hpp"

#include "pimbpo/mbpo/archive.hpp"

#include <algorithm>
#include <cstdio>
#include <random>

namespace pimbpo::bench {

namespace {

std::string real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

} // namespace

std::vector<std::filesystem::path> find_runs(const std::filesystem::path &root) {
  std::vector<std::filesystem::path> runs;
  if (std::filesystem::is_directory(root / "checkpoints")) runs.push_back(root);
  if (!std::filesystem::is_directory(root)) return runs;
  for (const auto &entry : std::filesystem::recursive_directory_iterator(root)) {
    if (entry.is_directory() && entry.path().filename() != "checkpoints" &&
        std::filesystem::is_directory(entry.path() / "checkpoints"))
      runs.push_back(entry.path());
  }
  std::sort(runs.begin(), runs.end());
  runs.erase(std::unique(runs.begin(), runs.end()), runs.end());
  return runs;
}

std::vector<ThetaRow> export_theta_B_history(const std::filesystem::path &run_dir) {
  std::vector<ThetaRow> rows;
  for (const auto &run : find_runs(run_dir)) {
    const auto checkpoints = mbpo::list_checkpoints(run);
    if (checkpoints.empty()) continue;
    const nlohmann::json a = mbpo::read_archive(checkpoints.back());
    if (a.at("agent").at("policy_kind").get<std::string>() != "koopman_enmpc") continue;
    ThetaRow zero;
    zero.seed = a.at("seed").get<std::uint64_t>();
    std::vector<ThetaRow> run_rows{zero};
    for (const auto &r : a.at("reports")) {
      ThetaRow row;
      row.seed = zero.seed;
      row.iteration = r.at("iteration").get<int>();
      row.cumulative_steps = r.at("cumulative_steps").get<long>();
      const auto values = r.at("policy_params").get<std::vector<double>>();
      if (values.size() != 6) throw std::runtime_error("iteration report lacks the six bound offsets");
      for (int i = 0; i < 6; ++i) row.theta(i) = values[static_cast<std::size_t>(i)];
      run_rows.push_back(row);
    }
    rows.insert(rows.end(), run_rows.begin(), run_rows.end());
  }
  std::stable_sort(rows.begin(), rows.end(), [](const ThetaRow &a, const ThetaRow &b) {
    return a.seed != b.seed ? a.seed < b.seed : a.iteration < b.iteration;
  });
  return rows;
}

void write_theta_csv(std::ostream &os, const std::vector<ThetaRow> &rows) {
  os << "seed,iteration,cumulative_steps,c_lower,T_lower,l_lower,c_upper,T_upper,l_upper\n";
  for (const ThetaRow &r : rows) {
    os << r.seed << ',' << r.iteration << ',' << r.cumulative_steps;
    for (int i = 0; i < 6; ++i) os << ',' << real(r.theta(i));
    os << '\n';
  }
}

double ClosedLoopPrediction::mean_mse() const {
  if (mse.empty()) return 0.0;
  double s = 0.0;
  for (double m : mse) s += m;
  return s / static_cast<double>(mse.size());
}

ClosedLoopPrediction closed_loop_predictions(const pinn::Ensemble &ensemble, const cstr::PriceSeries &prices,
                                             const ClosedLoopConfig &config) {
  cstr::EnvConfig env_config;
  env_config.max_steps = config.steps;
  env_config.terminate_on_violation = false;
  env_config.partition = cstr::Partition::Train;
  cstr::CstrEnv env(env_config, std::make_shared<const cstr::PriceSeries>(prices), config.seed);
  env.reset_at(config.window_start, 1.5);

  ClosedLoopPrediction out;
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> noise(0.0, config.noise);
  const Eigen::Vector2d steady = cstr::scale_action(cstr::kSteadyAction);
  out.real.push_back(env.state().x);
  for (int t = 0; t < config.steps; ++t) {
    Eigen::Vector2d u = steady;
    u(0) += noise(rng);
    u(1) += noise(rng);
    const cstr::Action a = cstr::unscale_action(u.cwiseMax(-1.0).cwiseMin(1.0));
    const cstr::StepResult r = env.step(a);
    out.actions.push_back(r.applied);
    out.real.push_back(env.state().x);
  }

  for (std::size_t m = 0; m < ensemble.size(); ++m) {
    std::vector<cstr::SysState> traj{out.real.front()};
    double sq = 0.0, abs = 0.0;
    for (int t = 0; t < config.steps; ++t) {
      const auto ti = static_cast<std::size_t>(t);
      traj.push_back(ensemble.predict_step(m, traj.back(), out.actions[ti]));
      const Eigen::Vector2d e = cstr::scale_state(traj.back()) - cstr::scale_state(out.real[ti + 1]);
      sq += e.squaredNorm();
      abs += 0.5 * e.cwiseAbs().sum();
    }
    out.predicted.push_back(std::move(traj));
    out.mse.push_back(sq / static_cast<double>(config.steps));
    out.mae.push_back(abs / static_cast<double>(config.steps));
  }
  return out;
}

void write_closed_loop_csv(std::ostream &os, const ClosedLoopPrediction &p) {
  os << "step,source,c,T,rho,F\n";
  auto emit = [&](const std::string &source, const std::vector<cstr::SysState> &traj) {
    for (std::size_t t = 0; t < traj.size(); ++t) {
      os << t << ',' << source << ',' << real(traj[t].c) << ',' << real(traj[t].T) << ',';
      if (t < p.actions.size()) os << real(p.actions[t].rho) << ',' << real(p.actions[t].F);
      else os << ',';
      os << '\n';
    }
  };
  emit("real", p.real);
  for (std::size_t m = 0; m < p.predicted.size(); ++m) emit("member_" + std::to_string(m), p.predicted[m]);
}

} // namespace pimbpo::bench
