#pragma once

#include "pimbpo/cstr/dataset.hpp"
#include "pimbpo/diff/mlp.hpp"
#include "pimbpo/diff/optim.hpp"
#include "pimbpo/diff/params.hpp"

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

namespace pimbpo::pinn {

using ad::Matrix;
using ad::ParamVector;
using ad::Var;

/// Network input columns, all scaled to [-1, 1]: hour fraction, c0, T0, rho, F.
/// The hour fraction tau in [0, 1] h enters as 2 tau - 1.
inline constexpr Eigen::Index kInputs = 5;
/// Network output columns: scaled c, scaled T, rate code r with R = kRateScale (1 + r).
inline constexpr Eigen::Index kOutputs = 3;
inline constexpr double kRateScale = 0.05;

enum class ModelKind { Pinn, Vanilla };

/// Maps a batch of network inputs to outputs on the tape.
using ModelFn = std::function<Var(Var inputs)>;

/// Physics-informed architecture (5-32-32-3) or the discrete-time vanilla
/// variant (4-32-32-2: scaled state and action to scaled next state).
class DynamicsNet {
public:
  explicit DynamicsNet(ModelKind kind = ModelKind::Pinn);

  [[nodiscard]] ModelKind kind() const { return kind_; }
  [[nodiscard]] const ad::Mlp &mlp() const { return mlp_; }
  [[nodiscard]] std::vector<ad::BlockShape> shapes() const { return mlp_.shapes(); }
  /// Xavier-normal weights, zero biases.
  [[nodiscard]] ParamVector init(std::uint64_t seed) const;
  [[nodiscard]] ModelFn bind(const ad::TapeParams &p) const;

  /// Scaled next state after one control hour, rows of [c, T].
  [[nodiscard]] Matrix predict(const ParamVector &p, const Matrix &x_scaled, const Matrix &u_scaled) const;

private:
  ModelKind kind_;
  ad::Mlp mlp_;
};

/// Inputs at a fixed hour fraction for each (x, u) row.
[[nodiscard]] Matrix pinn_inputs(double tau, const Matrix &x_scaled, const Matrix &u_scaled);

/// Collocation inputs: LHS over tau in [0, 1] h and the operating box, scaled.
[[nodiscard]] Matrix make_collocation_set(int count, std::uint64_t seed);
/// Initial-condition inputs at tau = 0: LHS over the state/action box, scaled.
[[nodiscard]] Matrix make_init_set(int count, std::uint64_t seed);

/// Residuals of the known-physics balance in scaled-state units per hour,
/// one row per collocation point, columns [c, T]. `inputs` becomes a leaf.
[[nodiscard]] Var physics_residuals(ad::Tape &tape, const ModelFn &model, const Matrix &inputs,
                                    const cstr::CstrParams &plant = {});

struct LossWeights {
  double data = 1.0;
  double init = 1.0;
  double ema = 0.9; // weight on the previous value
};

struct PinnLossVars {
  Var total;
  Var data;
  Var physics;
  Var init;
};

struct PinnLossValues {
  double total = 0.0;
  double data = 0.0;
  double physics = 0.0;
  double init = 0.0;
};

/// physics + weights.data * data + weights.init * init. Each term is a mean
/// over points and both state columns. Data compares outputs at tau = 1 h
/// with the observed next state; init compares tau = 0 outputs with the
/// initial state carried in the input columns.
[[nodiscard]] PinnLossVars pinn_loss_vars(ad::Tape &tape, const ModelFn &model, const cstr::ScaledBatch &data,
                                          const Matrix &collocation, const Matrix &init_inputs,
                                          const LossWeights &weights, const cstr::CstrParams &plant = {});
[[nodiscard]] PinnLossValues pinn_losses(const DynamicsNet &net, const ParamVector &p,
                                         const cstr::ScaledBatch &data, const Matrix &collocation,
                                         const Matrix &init_inputs, const LossWeights &weights);

/// Inverse-Dirichlet balancing: candidate weight for term k is
/// max_j std(grad_j) / std(grad_k), blended into the previous weight with
/// factor `ema`. A term whose gradient has zero spread keeps its weight.
[[nodiscard]] LossWeights inverse_dirichlet_update(const LossWeights &current, const Eigen::VectorXd &grad_physics,
                                                   const Eigen::VectorXd &grad_data, const Eigen::VectorXd &grad_init);

struct TrainConfig {
  int adam_epochs = 1000;
  double adam_learning_rate = 1e-3;
  int batch_size = 64;
  int lbfgs_max_iterations = 300;
  int lbfgs_patience = 25;
  ad::LbfgsConfig lbfgs;
};

struct TrainHistory {
  std::vector<double> stage1_loss;
  std::vector<LossWeights> stage1_weights;
  LossWeights stage1_exit_weights;
  LossWeights stage2_weights;
  std::vector<double> stage2_loss;
  std::vector<double> stage2_val;
  int best_iteration = -1; // -1: stage-1 exit state was best
  int lbfgs_iterations = 0;
  bool early_stopped = false;
  bool reinitialized = false;
};

class DivergenceError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// One member's trainable state. Its collocation and initial-condition sets
/// are drawn once and never change.
struct Member {
  ParamVector params;
  Matrix collocation;
  Matrix init_inputs;
  LossWeights weights;
  std::uint64_t stream = 0; // seed of the member's private RNG stream
  std::uint64_t draws = 0;  // re-initializations so far
};

[[nodiscard]] Member make_member(const DynamicsNet &net, std::uint64_t stream, int collocation_points = 2000,
                                 int init_points = 100);
/// Fresh Xavier parameters from the member's stream; sets stay untouched.
void reinitialize(const DynamicsNet &net, Member &m);

/// Adam stage with dynamic weights, then full-batch L-BFGS with frozen
/// weights and validation early stopping. Leaves the best-validation
/// parameters in `member`. A non-finite loss triggers one re-initialization;
/// a second divergence throws DivergenceError.
TrainHistory train_two_stage(const DynamicsNet &net, Member &member, const cstr::TransitionSet &train,
                             const cstr::TransitionSet &val, const TrainConfig &config, std::uint64_t seed);

} // namespace pimbpo::pinn
