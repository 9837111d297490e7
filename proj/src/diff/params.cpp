#include "pimbpo/diff/params.hpp"

#include <cmath>

namespace pimbpo::ad {

std::uint64_t fnv1a(const void *data, std::size_t bytes, std::uint64_t h) {
  const auto *p = static_cast<const unsigned char *>(data);
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

void ParamVector::add(std::string name, Matrix value) {
  if (index_.count(name) != 0) throw ContractViolation("duplicate parameter block " + name);
  index_.emplace(name, blocks_.size());
  blocks_.push_back(ParamBlock{std::move(name), std::move(value)});
}

bool ParamVector::contains(const std::string &name) const { return index_.count(name) != 0; }

Matrix &ParamVector::operator[](const std::string &name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractViolation("unknown parameter block " + name);
  return blocks_[it->second].value;
}

const Matrix &ParamVector::operator[](const std::string &name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractViolation("unknown parameter block " + name);
  return blocks_[it->second].value;
}

Eigen::Index ParamVector::size() const {
  Eigen::Index n = 0;
  for (const auto &b : blocks_) n += b.value.size();
  return n;
}

Eigen::VectorXd ParamVector::flatten() const {
  Eigen::VectorXd out(size());
  Eigen::Index k = 0;
  for (const auto &b : blocks_)
    for (Eigen::Index r = 0; r < b.value.rows(); ++r)
      for (Eigen::Index c = 0; c < b.value.cols(); ++c) out[k++] = b.value(r, c);
  return out;
}

void ParamVector::assign(const Eigen::VectorXd &flat) {
  if (flat.size() != size()) throw ContractViolation("assign: flat length mismatch");
  Eigen::Index k = 0;
  for (auto &b : blocks_)
    for (Eigen::Index r = 0; r < b.value.rows(); ++r)
      for (Eigen::Index c = 0; c < b.value.cols(); ++c) b.value(r, c) = flat[k++];
}

ParamVector ParamVector::zeros_like() const {
  ParamVector out;
  for (const auto &b : blocks_) out.add(b.name, Matrix::Zero(b.value.rows(), b.value.cols()));
  return out;
}

bool ParamVector::same_layout(const ParamVector &other) const {
  if (blocks_.size() != other.blocks_.size()) return false;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const auto &a = blocks_[i];
    const auto &b = other.blocks_[i];
    if (a.name != b.name || a.value.rows() != b.value.rows() || a.value.cols() != b.value.cols())
      return false;
  }
  return true;
}

bool ParamVector::all_finite() const {
  for (const auto &b : blocks_)
    if (!b.value.allFinite()) return false;
  return true;
}

double ParamVector::norm() const {
  double s = 0.0;
  for (const auto &b : blocks_) s += b.value.squaredNorm();
  return std::sqrt(s);
}

std::uint64_t ParamVector::hash() const {
  std::uint64_t h = 14695981039346656037ull;
  for (const auto &b : blocks_) {
    h = fnv1a(b.name.data(), b.name.size(), h);
    const std::int64_t shape[2] = {b.value.rows(), b.value.cols()};
    h = fnv1a(shape, sizeof(shape), h);
    h = fnv1a(b.value.data(), sizeof(double) * static_cast<std::size_t>(b.value.size()), h);
  }
  return h;
}

void ParamVector::scale(double k) {
  for (auto &b : blocks_) b.value *= k;
}

void ParamVector::axpy(double k, const ParamVector &x) {
  if (!same_layout(x)) throw ContractViolation("axpy: layout mismatch");
  for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i].value += k * x.blocks_[i].value;
}

TapeParams::TapeParams(Tape &tape, const ParamVector &params) {
  leaves_.reserve(params.block_count());
  for (const auto &b : params.blocks()) {
    index_.emplace(b.name, leaves_.size());
    names_.push_back(b.name);
    leaves_.push_back(tape.variable(b.value));
  }
}

Var TapeParams::operator[](const std::string &name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractViolation("unknown parameter block " + name);
  return leaves_[it->second];
}

ParamVector TapeParams::gradient(const Gradients &grads) const {
  ParamVector out;
  for (std::size_t i = 0; i < leaves_.size(); ++i) out.add(names_[i], grads[leaves_[i]]);
  return out;
}

} // namespace pimbpo::ad
