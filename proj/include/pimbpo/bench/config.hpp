#pragma once

#include "pimbpo/bench/evaluate.hpp"
#include "pimbpo/cstr/prices.hpp"
#include "pimbpo/mbpo/run.hpp"

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace pimbpo::bench {

/// Where prices come from: a `timestamp,price` CSV, or the built-in
/// synthetic series when no path is given.
struct PriceSource {
  std::string path;
  std::string eval_boundary = "2018-03-26";
  cstr::SyntheticPriceConfig synthetic;
};

/// Everything a training run needs; a run is reproducible from this plus a
/// seed.
struct RunConfig {
  mbpo::MbpoConfig mbpo;
  std::vector<std::uint64_t> seeds = {1};
  PriceSource prices;
  EvalConfig eval;
  std::string output_dir = "runs";
  /// Evaluate on the test weeks after every MBPO iteration.
  bool evaluate_each_iteration = false;
};

[[nodiscard]] nlohmann::json to_json(const RunConfig &c);
/// Unknown top-level keys are rejected so that typos do not pass silently.
[[nodiscard]] RunConfig run_config_from_json(const nlohmann::json &j);
[[nodiscard]] RunConfig load_run_config(const std::filesystem::path &path);

[[nodiscard]] std::shared_ptr<const cstr::PriceSeries> load_prices(const PriceSource &source);

} // namespace pimbpo::bench
