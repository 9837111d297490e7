#include "pimbpo/cstr/dataset.hpp"

#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

namespace pimbpo::cstr {

ScaledBatch to_scaled(const TransitionSet &data, const std::vector<std::size_t> &rows) {
  const auto n = static_cast<Eigen::Index>(rows.size());
  ScaledBatch b{Eigen::MatrixXd(n, 2), Eigen::MatrixXd(n, 2), Eigen::MatrixXd(n, 2)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const Transition &t = data.at(rows[static_cast<std::size_t>(i)]);
    b.x.row(i) = scale_state(t.x).transpose();
    b.u.row(i) = scale_action(t.u).transpose();
    b.next.row(i) = scale_state(t.next).transpose();
  }
  return b;
}

ScaledBatch to_scaled(const TransitionSet &data) {
  std::vector<std::size_t> rows(data.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return to_scaled(data, rows);
}

nlohmann::json transitions_to_json(const TransitionSet &data) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto &t : data) out.push_back({t.x.c, t.x.T, t.u.rho, t.u.F, t.next.c, t.next.T});
  return out;
}

TransitionSet transitions_from_json(const nlohmann::json &j) {
  TransitionSet out;
  out.reserve(j.size());
  for (const auto &row : j) {
    if (row.size() != 6) throw std::runtime_error("transition record must have 6 values");
    out.push_back({{row[0].get<double>(), row[1].get<double>()},
                   {row[2].get<double>(), row[3].get<double>()},
                   {row[4].get<double>(), row[5].get<double>()}});
  }
  return out;
}

namespace {

constexpr const char *kEpisodeHeader =
    "step,c,T,l,rho,F,p,r_cost,r_con_rel,r_con_bool,r_total,viol_c,viol_T,viol_l,terminated,truncated";

std::string real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<double> split_reals(const std::string &line) {
  std::vector<double> v;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) v.push_back(std::stod(cell));
  return v;
}

constexpr const char *kTransitionHeader = "c,T,rho,F,c_next,T_next";

} // namespace

void write_transitions_csv(std::ostream &os, const TransitionSet &data) {
  os << kTransitionHeader << '\n';
  for (const Transition &t : data)
    os << real(t.x.c) << ',' << real(t.x.T) << ',' << real(t.u.rho) << ',' << real(t.u.F) << ','
       << real(t.next.c) << ',' << real(t.next.T) << '\n';
}

TransitionSet read_transitions_csv(std::istream &is) {
  std::string line;
  if (!std::getline(is, line) || line != kTransitionHeader)
    throw std::runtime_error(std::string("transitions header must be '") + kTransitionHeader + "'");
  TransitionSet out;
  int number = 1;
  while (std::getline(is, line)) {
    ++number;
    if (line.empty()) continue;
    std::vector<double> v;
    try {
      v = split_reals(line);
    } catch (const std::exception &) {
      throw std::runtime_error("transitions line " + std::to_string(number) + " is not numeric");
    }
    if (v.size() != 6) throw std::runtime_error("transitions line " + std::to_string(number) + " needs 6 fields");
    out.push_back({{v[0], v[1]}, {v[2], v[3]}, {v[4], v[5]}});
  }
  return out;
}

void write_episode_csv(std::ostream &os, const std::vector<EpisodeRecord> &records) {
  os << kEpisodeHeader << '\n';
  for (const auto &r : records) {
    os << r.step << ',' << real(r.x.c) << ',' << real(r.x.T) << ',' << real(r.storage) << ','
       << real(r.u.rho) << ',' << real(r.u.F) << ',' << real(r.price) << ',' << real(r.reward.cost) << ','
       << real(r.reward.con_rel) << ',' << real(r.reward.con_bool) << ',' << real(r.reward.total) << ','
       << real(r.violations.c) << ',' << real(r.violations.T) << ',' << real(r.violations.storage) << ','
       << (r.terminated ? 1 : 0) << ',' << (r.truncated ? 1 : 0) << '\n';
  }
}

std::vector<EpisodeRecord> read_episode_csv(std::istream &is) {
  std::string line;
  if (!std::getline(is, line) || line != kEpisodeHeader)
    throw std::runtime_error("episode log header does not match the expected schema");
  std::vector<EpisodeRecord> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const std::vector<double> v = split_reals(line);
    if (v.size() != 16) throw std::runtime_error("episode log row has " + std::to_string(v.size()) + " fields");
    EpisodeRecord r;
    r.step = static_cast<int>(v[0]);
    r.x = {v[1], v[2]};
    r.storage = v[3];
    r.u = {v[4], v[5]};
    r.price = v[6];
    r.reward = {v[7], v[8], v[9], v[10]};
    r.violations = {v[11], v[12], v[13]};
    r.terminated = v[14] != 0.0;
    r.truncated = v[15] != 0.0;
    out.push_back(r);
  }
  return out;
}

} // namespace pimbpo::cstr
