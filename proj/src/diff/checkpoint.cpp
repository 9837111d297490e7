#include "pimbpo/diff/checkpoint.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>

namespace pimbpo::ad {

namespace {

constexpr std::array<char, 8> kMagic = {'P', 'M', 'B', 'P', 'P', 'A', 'R', 'M'};

template <typename T> void put_le(std::ostream &os, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::array<unsigned char, sizeof(T)> bytes{};
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big)
    std::reverse(bytes.begin(), bytes.end());
  os.write(reinterpret_cast<const char *>(bytes.data()), sizeof(T));
}

template <typename T> T get_le(std::istream &is) {
  std::array<unsigned char, sizeof(T)> bytes{};
  if (!is.read(reinterpret_cast<char *>(bytes.data()), sizeof(T)))
    throw CheckpointError("truncated binary checkpoint");
  if constexpr (std::endian::native == std::endian::big)
    std::reverse(bytes.begin(), bytes.end());
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

} // namespace

nlohmann::json matrix_to_json(const Matrix &m) {
  nlohmann::json values = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) values.push_back(m(r, c));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"values", std::move(values)}};
}

Matrix matrix_from_json(const nlohmann::json &j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto &values = j.at("values");
  if (static_cast<Eigen::Index>(values.size()) != rows * cols)
    throw CheckpointError("matrix value count does not match its shape");
  Matrix m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = values[k++].get<double>();
  return m;
}

nlohmann::json to_json(const ParamVector &params) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto &b : params.blocks()) {
    nlohmann::json jb = matrix_to_json(b.value);
    jb["name"] = b.name;
    blocks.push_back(std::move(jb));
  }
  return {{"format", "pimbpo-params"}, {"version", kCheckpointVersion}, {"blocks", blocks}};
}

ParamVector params_from_json(const nlohmann::json &j) {
  if (j.value("format", "") != "pimbpo-params")
    throw CheckpointError("not a pimbpo parameter checkpoint");
  const int version = j.at("version").get<int>();
  if (version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  ParamVector out;
  for (const auto &jb : j.at("blocks")) out.add(jb.at("name").get<std::string>(), matrix_from_json(jb));
  return out;
}

void write_binary(std::ostream &os, const ParamVector &params) {
  os.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(os, kCheckpointVersion);
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(params.block_count()));
  for (const auto &b : params.blocks()) {
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(b.name.size()));
    os.write(b.name.data(), static_cast<std::streamsize>(b.name.size()));
    put_le<std::uint64_t>(os, static_cast<std::uint64_t>(b.value.rows()));
    put_le<std::uint64_t>(os, static_cast<std::uint64_t>(b.value.cols()));
    for (Eigen::Index r = 0; r < b.value.rows(); ++r)
      for (Eigen::Index c = 0; c < b.value.cols(); ++c) put_le<double>(os, b.value(r, c));
  }
}

ParamVector read_binary(std::istream &is) {
  std::array<char, 8> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic)
    throw CheckpointError("bad checkpoint magic");
  const auto version = get_le<std::uint32_t>(is);
  if (version != kCheckpointVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  const auto count = get_le<std::uint32_t>(is);
  ParamVector out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = get_le<std::uint32_t>(is);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw CheckpointError("truncated block name");
    const auto rows = static_cast<Eigen::Index>(get_le<std::uint64_t>(is));
    const auto cols = static_cast<Eigen::Index>(get_le<std::uint64_t>(is));
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = get_le<double>(is);
    out.add(std::move(name), std::move(m));
  }
  return out;
}

void save_params(const std::filesystem::path &path, const ParamVector &params) {
  if (path.extension() == ".json") {
    std::ofstream os(path);
    if (!os) throw CheckpointError("cannot write " + path.string());
    os << to_json(params).dump(1);
    return;
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw CheckpointError("cannot write " + path.string());
  write_binary(os, params);
}

ParamVector load_params(const std::filesystem::path &path) {
  if (path.extension() == ".json") {
    std::ifstream is(path);
    if (!is) throw CheckpointError("cannot read " + path.string());
    return params_from_json(nlohmann::json::parse(is));
  }
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot read " + path.string());
  return read_binary(is);
}

} // namespace pimbpo::ad
