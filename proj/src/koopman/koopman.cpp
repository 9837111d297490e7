#include "pimbpo/koopman/koopman.hpp"

#include <algorithm>
#include <numeric>
#include <random>

namespace pimbpo::koopman {

using ad::Tape;
using ad::TapeParams;
using ad::Var;

KoopmanModel::KoopmanModel() : encoder_("enc.", {kStateDim, 4, 6, kLatentDim}) {}

std::vector<ad::BlockShape> KoopmanModel::shapes() const {
  auto out = encoder_.shapes();
  out.push_back({"A", kLatentDim, kLatentDim, ad::BlockRole::Weight});
  out.push_back({"B", kLatentDim, kControlDim, ad::BlockRole::Weight});
  out.push_back({"C", kStateDim, kLatentDim, ad::BlockRole::Weight});
  return out;
}

ParamVector KoopmanModel::init(std::uint64_t seed) const {
  // The initializer expects fan_in x fan_out; A/B/C are stored out x in.
  std::vector<ad::BlockShape> layout = encoder_.shapes();
  for (const auto &s : shapes())
    if (s.name == "A" || s.name == "B" || s.name == "C") layout.push_back({s.name, s.cols, s.rows, s.role});
  ParamVector drawn = ad::uniform_fan_in_init(layout, seed);
  ParamVector out;
  for (const auto &b : drawn.blocks()) {
    const bool linear_map = b.name == "A" || b.name == "B" || b.name == "C";
    out.add(b.name, linear_map ? Matrix(b.value.transpose()) : b.value);
  }
  return out;
}

Var KoopmanModel::encode(const TapeParams &p, Var x) const { return encoder_.forward(p, x); }

Matrix KoopmanModel::encode(const ParamVector &p, const Matrix &x) const { return encoder_.evaluate(p, x); }

Var KoopmanModel::advance(const TapeParams &p, Var z, Var u) {
  return matmul(z, transpose(p["A"])) + matmul(u, transpose(p["B"]));
}

Var KoopmanModel::decode(const TapeParams &p, Var z) { return matmul(z, transpose(p["C"])); }

namespace {

// Mean over rows of the squared L2 norm of each row.
Var mean_row_sq_norm(Var diff) {
  return scale(sum(square(diff)), 1.0 / static_cast<double>(diff.rows()));
}

} // namespace

SiLossVars si_loss_vars(const KoopmanModel &model, const TapeParams &p, Tape &tape,
                        const cstr::ScaledBatch &batch) {
  Var x = tape.constant(batch.x);
  Var u = tape.constant(batch.u);
  Var next = tape.constant(batch.next);
  Var z = model.encode(p, x);
  Var z_next = model.encode(p, next);
  Var z_pred = KoopmanModel::advance(p, z, u);
  Var x_pred = KoopmanModel::decode(p, z_pred);
  return {mean_row_sq_norm(KoopmanModel::decode(p, z) - x), mean_row_sq_norm(z_pred - z_next),
          mean_row_sq_norm(x_pred - next), x_pred};
}

SiLosses si_losses(const KoopmanModel &model, const ParamVector &p, const cstr::ScaledBatch &batch) {
  Tape tape;
  TapeParams bound(tape, p);
  const SiLossVars v = si_loss_vars(model, bound, tape, batch);
  return {v.reconstruction.scalar(), v.latent.scalar(), v.prediction.scalar()};
}

Matrix KoopmanModel::predict(const ParamVector &p, const Matrix &x, const Matrix &u) const {
  Tape tape;
  TapeParams bound(tape, p);
  cstr::ScaledBatch batch{x, u, Matrix::Zero(x.rows(), x.cols())};
  return si_loss_vars(*this, bound, tape, batch).prediction_values.value();
}

SiResult train_si(const KoopmanModel &model, const ParamVector &init, const cstr::TransitionSet &train,
                  const cstr::TransitionSet &val, const SiConfig &config, std::uint64_t seed) {
  if (train.empty() || val.empty())
    throw cstr::ConfigError("Koopman system identification needs non-empty train and validation sets");
  if (config.batch_size < 1 || config.max_epochs < 1 || config.patience < 1)
    throw cstr::ConfigError("Koopman SI config values must be positive");

  std::mt19937_64 rng(seed);
  const cstr::ScaledBatch val_batch = cstr::to_scaled(val);
  ParamVector params = init;
  ad::AdamState adam(ad::AdamConfig{config.learning_rate}, params);
  ad::EarlyStopping stopper(config.patience);
  SiResult result{params, {}};

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t bs = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(start),
                                          order.begin() + static_cast<std::ptrdiff_t>(std::min(start + bs, order.size())));
      Tape tape;
      TapeParams bound(tape, params);
      const SiLossVars v = si_loss_vars(model, bound, tape, cstr::to_scaled(train, rows));
      Var total = v.reconstruction + v.latent + v.prediction;
      ParamVector grads = bound.gradient(tape.backward(total));
      if (config.weight_decay > 0.0) grads.axpy(config.weight_decay, params);
      if (config.grad_clip_norm > 0.0) (void)ad::clip_grad_norm(grads, config.grad_clip_norm);
      ad::adam_step(adam, params, grads);
      epoch_loss += total.scalar();
      ++batches;
    }
    const double val_sum = si_losses(model, params, val_batch).sum();
    result.history.train_loss.push_back(epoch_loss / batches);
    result.history.val_loss.push_back(val_sum);
    const bool stop = stopper.update(epoch, val_sum);
    if (stopper.improved_at(epoch)) result.params = params;
    result.history.best_val.push_back(stopper.best());
    if (stop) {
      result.history.early_stopped = true;
      break;
    }
  }
  result.history.best_epoch = stopper.best_epoch();
  return result;
}

} // namespace pimbpo::koopman
