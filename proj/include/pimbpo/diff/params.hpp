#pragma once

#include "pimbpo/diff/tape.hpp"

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace pimbpo::ad {

struct ParamBlock {
  std::string name;
  Matrix value;
};

/// Ordered set of named parameter matrices. The layout (names and shapes)
/// never changes after construction; optimizers only touch values.
class ParamVector {
public:
  ParamVector() = default;

  void add(std::string name, Matrix value);
  [[nodiscard]] bool contains(const std::string &name) const;
  [[nodiscard]] Matrix &operator[](const std::string &name);
  [[nodiscard]] const Matrix &operator[](const std::string &name) const;

  [[nodiscard]] const std::vector<ParamBlock> &blocks() const { return blocks_; }
  [[nodiscard]] std::vector<ParamBlock> &blocks() { return blocks_; }
  [[nodiscard]] std::size_t block_count() const { return blocks_.size(); }
  /// Total number of scalars.
  [[nodiscard]] Eigen::Index size() const;

  [[nodiscard]] Eigen::VectorXd flatten() const;
  /// Overwrites values from a flat vector in block order (row-major per block).
  void assign(const Eigen::VectorXd &flat);

  [[nodiscard]] ParamVector zeros_like() const;
  [[nodiscard]] bool same_layout(const ParamVector &other) const;
  [[nodiscard]] bool all_finite() const;
  [[nodiscard]] double norm() const;
  /// FNV-1a over names, shapes and raw value bytes.
  [[nodiscard]] std::uint64_t hash() const;

  void scale(double k);
  void axpy(double k, const ParamVector &x);

private:
  std::vector<ParamBlock> blocks_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Parameters bound as leaves on a tape.
class TapeParams {
public:
  TapeParams(Tape &tape, const ParamVector &params);

  [[nodiscard]] Var operator[](const std::string &name) const;
  [[nodiscard]] const std::vector<Var> &leaves() const { return leaves_; }
  /// Collects the adjoints of every bound leaf into a ParamVector.
  [[nodiscard]] ParamVector gradient(const Gradients &grads) const;

private:
  std::vector<std::string> names_;
  std::vector<Var> leaves_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Row-major FNV-1a hash helper shared by ParamVector and instance hashing.
std::uint64_t fnv1a(const void *data, std::size_t bytes, std::uint64_t h = 14695981039346656037ull);

} // namespace pimbpo::ad
