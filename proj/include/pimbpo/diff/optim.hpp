#pragma once

#include "pimbpo/diff/params.hpp"

#include <deque>
#include <functional>
#include <limits>

namespace pimbpo::ad {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  ParamVector first_moment;
  ParamVector second_moment;
  long step = 0;

  AdamState() = default;
  AdamState(AdamConfig cfg, const ParamVector &layout);
};

/// One bias-corrected Adam update of `params` in place.
void adam_step(AdamState &state, ParamVector &params, const ParamVector &grads);

/// Rescales `grads` so that their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_grad_norm(ParamVector &grads, double max_norm);

struct LbfgsConfig {
  int history = 10;
  double armijo_c1 = 1e-4;
  double backtrack = 0.5;
  int max_line_search = 30;
  /// Gradient infinity-norm below which a step is treated as converged.
  double gradient_tolerance = 0.0;
};

struct LbfgsState {
  LbfgsConfig config;
  std::deque<Eigen::VectorXd> s_history;
  std::deque<Eigen::VectorXd> y_history;
  // Cached evaluation at the current iterate.
  bool has_cache = false;
  Eigen::VectorXd cached_x;
  double cached_loss = 0.0;
  Eigen::VectorXd cached_grad;

  LbfgsState() = default;
  explicit LbfgsState(LbfgsConfig cfg) : config(cfg) {}
  void reset_history();
};

/// Returns the loss at `x` and writes the gradient into `grad`.
using LossEvaluator = std::function<double(const Eigen::VectorXd &x, Eigen::VectorXd &grad)>;

struct LbfgsStepResult {
  double loss = 0.0;
  bool stalled = false;
  bool converged = false;
  int evaluations = 0;
};

/// One L-BFGS iteration: two-loop recursion direction followed by a
/// backtracking Armijo line search. On line-search failure `params` is left
/// unchanged and `stalled` is set.
LbfgsStepResult lbfgs_step(LbfgsState &state, Eigen::VectorXd &params,
                           const LossEvaluator &evaluate);

/// Patience-based early stopping on a monitored value (lower is better).
/// Epochs are 0-based; update() returns true once `patience` consecutive
/// epochs fail to set a new strict minimum.
class EarlyStopping {
public:
  explicit EarlyStopping(int patience) : patience_(patience) {}

  bool update(int epoch, double value) {
    if (value < best_) {
      best_ = value;
      best_epoch_ = epoch;
      stale_ = 0;
      return false;
    }
    return ++stale_ >= patience_;
  }

  [[nodiscard]] bool improved_at(int epoch) const { return best_epoch_ == epoch; }
  [[nodiscard]] double best() const { return best_; }
  [[nodiscard]] int best_epoch() const { return best_epoch_; }
  [[nodiscard]] int stale_epochs() const { return stale_; }

private:
  int patience_;
  double best_ = std::numeric_limits<double>::infinity();
  int best_epoch_ = -1;
  int stale_ = 0;
};

} // namespace pimbpo::ad
