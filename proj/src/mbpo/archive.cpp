#include "pimbpo/mbpo/archive.hpp"

#include <algorithm>
#include <fstream>

namespace pimbpo::mbpo {

void save_archive(const std::filesystem::path &path, const MbpoRun &run) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp);
    os << run.checkpoint().dump();
    if (!os) throw ArchiveError("failed to write " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

nlohmann::json read_archive(const std::filesystem::path &path) {
  std::ifstream is(path);
  if (!is) throw ArchiveError("cannot open archive " + path.string());
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception &e) {
    throw ArchiveError("archive " + path.string() + " is not valid JSON: " + e.what());
  }
}

MbpoRun load_archive(const std::filesystem::path &path, std::shared_ptr<const cstr::PriceSeries> prices) {
  return MbpoRun::restore(read_archive(path), std::move(prices));
}

std::vector<std::filesystem::path> list_checkpoints(const std::filesystem::path &run_dir) {
  std::vector<std::filesystem::path> out;
  const std::filesystem::path dir = run_dir / "checkpoints";
  if (!std::filesystem::is_directory(dir)) return out;
  for (const auto &entry : std::filesystem::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.starts_with("iter_") && entry.path().extension() == ".json") out.push_back(entry.path());
  }
  // Names carry zero-padded iteration numbers.
  std::sort(out.begin(), out.end());
  return out;
}

std::filesystem::path latest_checkpoint(const std::filesystem::path &run_dir) {
  const auto all = list_checkpoints(run_dir);
  if (all.empty()) throw ArchiveError("no checkpoints in " + run_dir.string());
  return all.back();
}

} // namespace pimbpo::mbpo
