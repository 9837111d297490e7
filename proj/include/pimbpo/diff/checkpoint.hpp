#pragma once

#include "pimbpo/diff/params.hpp"

#include <json.hpp>

#include <filesystem>
#include <iosfwd>
#include <stdexcept>

namespace pimbpo::ad {

/// Parameter checkpoint formats.
///
/// JSON (version 1):
///   {"format": "pimbpo-params", "version": 1,
///    "blocks": [{"name": str, "rows": int, "cols": int, "values": [row-major f64]}]}
///
/// Binary (version 1), all integers little-endian:
///   magic "PMBPPARM" (8 bytes), u32 version, u32 block count, then per block:
///   u32 name length, name bytes, u64 rows, u64 cols, rows*cols IEEE-754 f64
///   little-endian in row-major order.
inline constexpr int kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

nlohmann::json to_json(const ParamVector &params);
ParamVector params_from_json(const nlohmann::json &j);

void write_binary(std::ostream &os, const ParamVector &params);
ParamVector read_binary(std::istream &is);

void save_params(const std::filesystem::path &path, const ParamVector &params);
/// Dispatches on the file extension: `.json` or anything else as binary.
ParamVector load_params(const std::filesystem::path &path);

nlohmann::json matrix_to_json(const Matrix &m);
Matrix matrix_from_json(const nlohmann::json &j);

} // namespace pimbpo::ad
