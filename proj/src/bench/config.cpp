#include "pimbpo/bench/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

namespace pimbpo::bench {

namespace {

const std::set<std::string> kRunKeys = {"seeds", "prices", "eval", "output_dir", "evaluate_each_iteration"};
const std::set<std::string> kMbpoKeys = {"variant", "schedule", "env", "ensemble", "koopman_si", "ocp", "ppo",
                                         "improvement", "surrogate", "train_fraction", "exploration_sigma_max"};

} // namespace

nlohmann::json to_json(const RunConfig &c) {
  nlohmann::json j = mbpo::to_json(c.mbpo);
  j["seeds"] = c.seeds;
  j["prices"] = {{"path", c.prices.path},
                 {"eval_boundary", c.prices.eval_boundary},
                 {"synthetic_seed", c.prices.synthetic.seed}};
  j["eval"] = to_json(c.eval);
  j["output_dir"] = c.output_dir;
  j["evaluate_each_iteration"] = c.evaluate_each_iteration;
  return j;
}

RunConfig run_config_from_json(const nlohmann::json &j) {
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  for (const auto &[key, value] : j.items())
    if (!kRunKeys.contains(key) && !kMbpoKeys.contains(key))
      throw std::invalid_argument("unknown config key '" + key + "'");
  RunConfig c;
  c.mbpo = mbpo::mbpo_config_from_json(j);
  if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  if (j.contains("prices")) {
    const auto &p = j.at("prices");
    c.prices.path = p.value("path", c.prices.path);
    c.prices.eval_boundary = p.value("eval_boundary", c.prices.eval_boundary);
    c.prices.synthetic.seed = p.value("synthetic_seed", c.prices.synthetic.seed);
  }
  if (j.contains("eval")) c.eval = eval_config_from_json(j.at("eval"));
  c.output_dir = j.value("output_dir", c.output_dir);
  c.evaluate_each_iteration = j.value("evaluate_each_iteration", c.evaluate_each_iteration);
  if (c.seeds.empty()) throw std::invalid_argument("config lists no seeds");
  return c;
}

RunConfig load_run_config(const std::filesystem::path &path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is, nullptr, true, true); // comments allowed
  } catch (const nlohmann::json::exception &e) {
    throw std::invalid_argument("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

std::shared_ptr<const cstr::PriceSeries> load_prices(const PriceSource &source) {
  if (source.path.empty()) {
    cstr::SyntheticPriceConfig synth = source.synthetic;
    synth.eval_boundary = source.eval_boundary;
    return std::make_shared<const cstr::PriceSeries>(cstr::synthetic_prices(synth));
  }
  return std::make_shared<const cstr::PriceSeries>(cstr::ingest_prices(source.path, source.eval_boundary));
}

} // namespace pimbpo::bench
