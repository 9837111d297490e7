#pragma once

#include "pimbpo/cstr/dataset.hpp"
#include "pimbpo/diff/mlp.hpp"
#include "pimbpo/diff/optim.hpp"
#include "pimbpo/diff/params.hpp"

#include <cstdint>
#include <vector>

namespace pimbpo::koopman {

using ad::Matrix;
using ad::ParamVector;

inline constexpr Eigen::Index kStateDim = 2;
inline constexpr Eigen::Index kControlDim = 2;
inline constexpr Eigen::Index kLatentDim = 8;

/// Lifted linear surrogate: z0 = encode(x0), z+ = A z + B u, x = C z.
/// Parameter blocks: encoder layers `enc.W<i>`/`enc.b<i>` (2-4-6-8, tanh
/// hidden) and `A` (8x8), `B` (8x2), `C` (2x8) in column-vector convention.
/// All inputs are in scaled units.
class KoopmanModel {
public:
  KoopmanModel();

  [[nodiscard]] std::vector<ad::BlockShape> shapes() const;
  /// Uniform(+-1/sqrt(fan_in)) for every block, A/B/C treated as bias-free
  /// linear maps.
  [[nodiscard]] ParamVector init(std::uint64_t seed) const;

  [[nodiscard]] ad::Var encode(const ad::TapeParams &p, ad::Var x) const;
  [[nodiscard]] Matrix encode(const ParamVector &p, const Matrix &x) const;

  /// Rows of A z + B u.
  [[nodiscard]] static ad::Var advance(const ad::TapeParams &p, ad::Var z, ad::Var u);
  /// Rows of C z.
  [[nodiscard]] static ad::Var decode(const ad::TapeParams &p, ad::Var z);

  /// One-step state prediction decode(A encode(x) + B u); shares the tape
  /// code path with si_losses.
  [[nodiscard]] Matrix predict(const ParamVector &p, const Matrix &x, const Matrix &u) const;

private:
  ad::Mlp encoder_;
};

struct SiLossVars {
  ad::Var reconstruction;
  ad::Var latent;
  ad::Var prediction;
  ad::Var prediction_values; // predicted next states, for reuse
};

struct SiLosses {
  double reconstruction = 0.0;
  double latent = 0.0;
  double prediction = 0.0;
  [[nodiscard]] double sum() const { return reconstruction + latent + prediction; }
};

/// Each loss is the batch mean of a squared L2 norm.
[[nodiscard]] SiLossVars si_loss_vars(const KoopmanModel &model, const ad::TapeParams &p, ad::Tape &tape,
                                      const cstr::ScaledBatch &batch);
[[nodiscard]] SiLosses si_losses(const KoopmanModel &model, const ParamVector &p,
                                 const cstr::ScaledBatch &batch);

struct SiConfig {
  double learning_rate = 1e-4;
  int batch_size = 64;
  int max_epochs = 5000;
  int patience = 25;
  double weight_decay = 0.0;   // L2 added to the gradient; off by default
  double grad_clip_norm = 0.0; // 0 disables clipping
};

struct SiHistory {
  std::vector<double> train_loss; // mean minibatch sum per epoch
  std::vector<double> val_loss;
  std::vector<double> best_val;   // best-so-far validation sum after each epoch
  int best_epoch = -1;
  bool early_stopped = false;
};

struct SiResult {
  ParamVector params; // parameters from the best validation epoch
  SiHistory history;
};

/// Adam on the equal-weight loss sum with validation early stopping.
/// Throws cstr::ConfigError if either partition is empty.
[[nodiscard]] SiResult train_si(const KoopmanModel &model, const ParamVector &init,
                                const cstr::TransitionSet &train, const cstr::TransitionSet &val,
                                const SiConfig &config, std::uint64_t seed);

} // namespace pimbpo::koopman
