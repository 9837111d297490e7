#include "pimbpo/cstr/prices.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

namespace pimbpo::cstr {

namespace {

int read_int(std::string_view text, std::size_t pos, std::size_t len) {
  if (pos + len > text.size()) throw PriceDataError("timestamp too short: '" + std::string(text) + "'");
  int value = 0;
  const char *first = text.data() + pos;
  auto [ptr, ec] = std::from_chars(first, first + len, value);
  if (ec != std::errc{} || ptr != first + len)
    throw PriceDataError("malformed timestamp: '" + std::string(text) + "'");
  return value;
}

void expect(std::string_view text, std::size_t pos, char c) {
  if (pos >= text.size() || text[pos] != c)
    throw PriceDataError("malformed timestamp: '" + std::string(text) + "'");
}

std::int64_t days_from_civil(std::string_view text, int y, int m, int d) {
  using namespace std::chrono;
  const year_month_day ymd{year{y}, month{static_cast<unsigned>(m)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) throw PriceDataError("invalid calendar date: '" + std::string(text) + "'");
  return sys_days(ymd).time_since_epoch().count();
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

} // namespace

std::int64_t parse_hour(std::string_view text) {
  text = trim(text);
  const int y = read_int(text, 0, 4);
  expect(text, 4, '-');
  const int mo = read_int(text, 5, 2);
  expect(text, 7, '-');
  const int d = read_int(text, 8, 2);
  if (text.size() < 11 || (text[10] != 'T' && text[10] != ' '))
    throw PriceDataError("malformed timestamp: '" + std::string(text) + "'");
  const int hh = read_int(text, 11, 2);
  expect(text, 13, ':');
  const int mm = read_int(text, 14, 2);
  std::size_t pos = 16;
  int ss = 0;
  if (pos < text.size() && text[pos] == ':') {
    ss = read_int(text, pos + 1, 2);
    pos += 3;
  }
  int offset_minutes = 0;
  if (pos < text.size()) {
    const char tz = text[pos];
    if (tz == 'Z' && pos + 1 == text.size()) {
    } else if ((tz == '+' || tz == '-') && text.size() == pos + 6 && text[pos + 3] == ':') {
      offset_minutes = read_int(text, pos + 1, 2) * 60 + read_int(text, pos + 4, 2);
      if (tz == '-') offset_minutes = -offset_minutes;
    } else {
      throw PriceDataError("malformed timestamp: '" + std::string(text) + "'");
    }
  }
  if (hh > 23 || mm > 59 || ss > 59) throw PriceDataError("invalid time of day: '" + std::string(text) + "'");
  const std::int64_t minutes = days_from_civil(text, y, mo, d) * 1440 + hh * 60 + mm - offset_minutes;
  if (ss != 0 || minutes % 60 != 0)
    throw PriceDataError("timestamp is not on the hour: '" + std::string(text) + "'");
  return minutes / 60;
}

std::int64_t parse_boundary(std::string_view text) {
  text = trim(text);
  if (text.size() == 10) return days_from_civil(text, read_int(text, 0, 4), read_int(text, 5, 2), read_int(text, 8, 2)) * 24;
  return parse_hour(text);
}

std::string format_hour(std::int64_t hour) {
  using namespace std::chrono;
  const std::int64_t day = hour >= 0 ? hour / 24 : (hour - 23) / 24;
  const int hh = static_cast<int>(hour - day * 24);
  const year_month_day ymd{sys_days(days(day))};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:00:00Z", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()), hh);
  return buf;
}

PriceSeries read_prices(std::istream &is, std::string_view eval_boundary) {
  const std::int64_t boundary = parse_boundary(eval_boundary);
  PriceSeries series;
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> bad_rows;
  bool header_seen = false;
  while (std::getline(is, line)) {
    ++line_no;
    const std::string_view row = trim(line);
    if (row.empty()) continue;
    if (!header_seen) {
      header_seen = true;
      if (row.rfind("timestamp", 0) == 0) continue;
    }
    const auto comma = row.find(',');
    if (comma == std::string_view::npos) {
      bad_rows.push_back("line " + std::to_string(line_no) + ": expected 'timestamp,price'");
      continue;
    }
    try {
      const std::int64_t hour = parse_hour(row.substr(0, comma));
      const std::string_view price_text = trim(row.substr(comma + 1));
      double price = 0.0;
      auto [ptr, ec] = std::from_chars(price_text.data(), price_text.data() + price_text.size(), price);
      if (price_text.empty() || ec != std::errc{} || ptr != price_text.data() + price_text.size() ||
          !std::isfinite(price))
        throw PriceDataError("unparseable price '" + std::string(price_text) + "'");
      series.hours.push_back(hour);
      series.prices.push_back(price);
    } catch (const PriceDataError &e) {
      bad_rows.push_back("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!bad_rows.empty()) {
    std::ostringstream msg;
    msg << bad_rows.size() << " unparseable price row(s):";
    for (std::size_t i = 0; i < bad_rows.size() && i < 20; ++i) msg << "\n  " << bad_rows[i];
    throw PriceDataError(msg.str());
  }
  if (series.prices.empty()) throw PriceDataError("price file contains no rows");

  std::vector<std::string> gaps;
  for (std::size_t i = 1; i < series.hours.size(); ++i) {
    const std::int64_t prev = series.hours[i - 1], cur = series.hours[i];
    if (cur <= prev)
      throw PriceDataError("timestamps not strictly increasing at " + format_hour(cur));
    for (std::int64_t h = prev + 1; h < cur; ++h) gaps.push_back(format_hour(h));
  }
  if (!gaps.empty()) {
    std::ostringstream msg;
    msg << gaps.size() << " missing hour(s):";
    for (std::size_t i = 0; i < gaps.size() && i < 20; ++i) msg << ' ' << gaps[i];
    if (gaps.size() > 20) msg << " ...";
    throw PriceDataError(msg.str());
  }

  std::size_t split = 0;
  while (split < series.hours.size() && series.hours[split] < boundary) ++split;
  series.eval_start = split;
  return series;
}

PriceSeries ingest_prices(const std::filesystem::path &path, std::string_view eval_boundary) {
  std::ifstream is(path);
  if (!is) throw PriceDataError("cannot open price file " + path.string());
  return read_prices(is, eval_boundary);
}

void write_prices(std::ostream &os, const PriceSeries &series) {
  os << "timestamp,price\n";
  char buf[64];
  for (std::size_t i = 0; i < series.prices.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", series.prices[i]);
    os << format_hour(series.hours[i]) << ',' << buf << '\n';
  }
}

PriceSeries synthetic_prices(const SyntheticPriceConfig &config) {
  const std::int64_t start = parse_hour(config.start);
  const std::int64_t end = parse_hour(config.end);
  const std::int64_t boundary = parse_boundary(config.eval_boundary);
  if (end <= start) throw PriceDataError("synthetic price range is empty");
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> noise(0.0, config.noise_std);
  PriceSeries series;
  constexpr double two_pi = 2.0 * std::numbers::pi;
  for (std::int64_t h = start; h < end; ++h) {
    // Peak in the early evening, trough at night; weekends cheaper.
    const double daily = -std::cos(two_pi * static_cast<double>((h - 6) % 24) / 24.0);
    const double weekly = std::cos(two_pi * static_cast<double>((h + 72) % 168) / 168.0);
    series.hours.push_back(h);
    series.prices.push_back(config.base + config.daily_amplitude * daily +
                            config.weekly_amplitude * weekly + noise(rng));
    if (h < boundary) series.eval_start = series.hours.size();
  }
  return series;
}

std::vector<std::size_t> consecutive_windows(const PriceSeries &series, Partition part, std::size_t count,
                                             std::size_t length) {
  if (series.size(part) < count * length)
    throw PriceDataError("partition holds " + std::to_string(series.size(part)) + " hours, need " +
                         std::to_string(count * length));
  std::vector<std::size_t> starts;
  for (std::size_t i = 0; i < count; ++i) starts.push_back(series.begin(part) + i * length);
  return starts;
}

} // namespace pimbpo::cstr
