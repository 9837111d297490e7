#pragma once

#include "pimbpo/mbpo/run.hpp"

#include <filesystem>

namespace pimbpo::mbpo {

/// Run archive on disk: the checkpoint JSON of MbpoRun, written atomically
/// through a temporary file.
void save_archive(const std::filesystem::path &path, const MbpoRun &run);
[[nodiscard]] nlohmann::json read_archive(const std::filesystem::path &path);
[[nodiscard]] MbpoRun load_archive(const std::filesystem::path &path, std::shared_ptr<const cstr::PriceSeries> prices);

/// Latest checkpoint in a run directory, by iteration number.
[[nodiscard]] std::filesystem::path latest_checkpoint(const std::filesystem::path &run_dir);
/// All checkpoints in a run directory in iteration order.
[[nodiscard]] std::vector<std::filesystem::path> list_checkpoints(const std::filesystem::path &run_dir);

} // namespace pimbpo::mbpo
