#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace pimbpo::cstr {

enum class Partition { Train, Eval };

class PriceDataError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Hourly price series split at a boundary. Hours are counted from the Unix
/// epoch (UTC). Train covers [0, eval_start), eval covers [eval_start, size).
struct PriceSeries {
  std::vector<std::int64_t> hours;
  std::vector<double> prices;
  std::size_t eval_start = 0;

  [[nodiscard]] std::size_t begin(Partition part) const { return part == Partition::Train ? 0 : eval_start; }
  [[nodiscard]] std::size_t end(Partition part) const {
    return part == Partition::Train ? eval_start : prices.size();
  }
  [[nodiscard]] std::size_t size(Partition part) const { return end(part) - begin(part); }
  [[nodiscard]] std::span<const double> partition(Partition part) const {
    return std::span<const double>(prices).subspan(begin(part), size(part));
  }
};

/// Parses `YYYY-MM-DD[T ]HH:MM[:SS][Z|+hh:mm|-hh:mm]` to whole UTC hours.
/// Timestamps that are not on the hour are rejected.
[[nodiscard]] std::int64_t parse_hour(std::string_view text);
/// Accepts either a date (`YYYY-MM-DD`, midnight UTC) or a full timestamp.
[[nodiscard]] std::int64_t parse_boundary(std::string_view text);
[[nodiscard]] std::string format_hour(std::int64_t hour);

/// Reads a `timestamp,price` CSV. Missing hours and unparseable rows raise
/// PriceDataError naming the offending timestamps or line numbers.
[[nodiscard]] PriceSeries read_prices(std::istream &is, std::string_view eval_boundary);
[[nodiscard]] PriceSeries ingest_prices(const std::filesystem::path &path, std::string_view eval_boundary);
void write_prices(std::ostream &os, const PriceSeries &series);

struct SyntheticPriceConfig {
  std::string start = "2015-03-29T00:00:00Z";
  std::string eval_boundary = "2018-03-26";
  std::string end = "2018-10-01T00:00:00Z"; // exclusive
  double base = 40.0;
  double daily_amplitude = 12.0;
  double weekly_amplitude = 6.0;
  double noise_std = 4.0;
  std::uint64_t seed = 20150329;
};

/// Daily and weekly sinusoids plus Gaussian noise; deterministic in the seed.
[[nodiscard]] PriceSeries synthetic_prices(const SyntheticPriceConfig &config = {});

/// Start indices (absolute) of the first `count` non-overlapping windows of
/// `length` hours inside a partition.
[[nodiscard]] std::vector<std::size_t> consecutive_windows(const PriceSeries &series, Partition part,
                                                           std::size_t count, std::size_t length);

} // namespace pimbpo::cstr
