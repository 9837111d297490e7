#include "pimbpo/pinn/pinn.hpp"

#include "pimbpo/pinn/lhs.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace pimbpo::pinn {

using ad::Tape;
using ad::TapeParams;

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

Matrix select_rows(const Matrix &m, const std::vector<std::size_t> &rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

cstr::ScaledBatch select_rows(const cstr::ScaledBatch &b, const std::vector<std::size_t> &rows) {
  return {select_rows(b.x, rows), select_rows(b.u, rows), select_rows(b.next, rows)};
}

Matrix to_scaled_box(const Matrix &physical, const std::vector<cstr::Bounds> &boxes) {
  Matrix out(physical.rows(), physical.cols());
  for (Eigen::Index c = 0; c < physical.cols(); ++c)
    for (Eigen::Index r = 0; r < physical.rows(); ++r)
      out(r, c) = boxes[static_cast<std::size_t>(c)].scale(physical(r, c));
  return out;
}

double population_std(const Eigen::VectorXd &g) {
  if (g.size() == 0) return 0.0;
  const double mean = g.mean();
  return std::sqrt((g.array() - mean).square().mean());
}

// Vanilla discrete-time loss: mean squared one-hour prediction error.
Var vanilla_loss(Tape &tape, const ModelFn &model, const cstr::ScaledBatch &data) {
  Matrix in(data.x.rows(), 4);
  in << data.x, data.u;
  return mean(square(model(tape.constant(in)) - tape.constant(data.next)));
}

} // namespace

DynamicsNet::DynamicsNet(ModelKind kind)
    : kind_(kind), mlp_(kind == ModelKind::Pinn ? ad::Mlp("pinn.", {kInputs, 32, 32, kOutputs})
                                                : ad::Mlp("nn.", {4, 32, 32, 2})) {}

ParamVector DynamicsNet::init(std::uint64_t seed) const { return ad::xavier_normal_init(shapes(), seed); }

ModelFn DynamicsNet::bind(const TapeParams &p) const {
  return [this, &p](Var in) { return mlp_.forward(p, in); };
}

Matrix pinn_inputs(double tau, const Matrix &x_scaled, const Matrix &u_scaled) {
  Matrix in(x_scaled.rows(), kInputs);
  in.col(0).setConstant(2.0 * tau - 1.0);
  in.middleCols(1, 2) = x_scaled;
  in.middleCols(3, 2) = u_scaled;
  return in;
}

Matrix DynamicsNet::predict(const ParamVector &p, const Matrix &x_scaled, const Matrix &u_scaled) const {
  if (kind_ == ModelKind::Pinn) return mlp_.evaluate(p, pinn_inputs(1.0, x_scaled, u_scaled)).leftCols(2);
  Matrix in(x_scaled.rows(), 4);
  in << x_scaled, u_scaled;
  return mlp_.evaluate(p, in);
}

Matrix make_collocation_set(int count, std::uint64_t seed) {
  Eigen::VectorXd lb(5), ub(5);
  lb << 0.0, cstr::kConcentration.lb, cstr::kTemperature.lb, cstr::kProduction.lb, cstr::kCoolant.lb;
  ub << 1.0, cstr::kConcentration.ub, cstr::kTemperature.ub, cstr::kProduction.ub, cstr::kCoolant.ub;
  const cstr::Bounds hour{0.0, 1.0, 0.5};
  return to_scaled_box(lhs_sample(count, lb, ub, seed),
                       {hour, cstr::kConcentration, cstr::kTemperature, cstr::kProduction, cstr::kCoolant});
}

Matrix make_init_set(int count, std::uint64_t seed) {
  Eigen::VectorXd lb(4), ub(4);
  lb << cstr::kConcentration.lb, cstr::kTemperature.lb, cstr::kProduction.lb, cstr::kCoolant.lb;
  ub << cstr::kConcentration.ub, cstr::kTemperature.ub, cstr::kProduction.ub, cstr::kCoolant.ub;
  const Matrix s = to_scaled_box(lhs_sample(count, lb, ub, seed),
                                 {cstr::kConcentration, cstr::kTemperature, cstr::kProduction, cstr::kCoolant});
  return pinn_inputs(0.0, s.leftCols(2), s.rightCols(2));
}

Var physics_residuals(Tape &tape, const ModelFn &model, const Matrix &inputs, const cstr::CstrParams &plant) {
  using cstr::kConcentration;
  using cstr::kTemperature;
  Var in = tape.variable(inputs);
  Var out = model(in);
  Matrix seed = Matrix::Zero(inputs.rows(), inputs.cols());
  seed.col(0).setOnes();
  // d/d tau = 2 d/d tau_scaled
  Var rate = scale(ad::input_derivative(tape, {out}, in, seed)[0], 2.0);

  const double wc = kConcentration.width(), wT = kTemperature.width();
  Var c = add_scalar(scale(cols(out, 0, 1), 0.5 * wc), kConcentration.lb + 0.5 * wc);
  Var T = add_scalar(scale(cols(out, 1, 1), 0.5 * wT), kTemperature.lb + 0.5 * wT);
  Var R = add_scalar(scale(cols(out, 2, 1), kRateScale), kRateScale);

  Matrix dilution(inputs.rows(), 1), cooling(inputs.rows(), 1);
  for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
    dilution(i, 0) = cstr::kProduction.unscale(inputs(i, 3)) / plant.volume;
    cooling(i, 0) = cstr::kCoolant.unscale(inputs(i, 4)) * plant.heat_transfer;
  }
  Var dil = tape.constant(dilution);
  Var cool = tape.constant(cooling);
  Var fc = mul(1.0 - c, dil) - R;
  Var fT = mul(plant.feed_temperature - T, dil) + R - mul(cool, T - plant.coolant_temperature);
  Var res_c = cols(rate, 0, 1) - scale(fc, 2.0 / wc);
  Var res_T = cols(rate, 1, 1) - scale(fT, 2.0 / wT);
  return hcat(res_c, res_T);
}

PinnLossVars pinn_loss_vars(Tape &tape, const ModelFn &model, const cstr::ScaledBatch &data,
                            const Matrix &collocation, const Matrix &init_inputs, const LossWeights &weights,
                            const cstr::CstrParams &plant) {
  PinnLossVars v;
  v.physics = mean(square(physics_residuals(tape, model, collocation, plant)));
  Var pred = model(tape.constant(pinn_inputs(1.0, data.x, data.u)));
  v.data = mean(square(cols(pred, 0, 2) - tape.constant(data.next)));
  Var at_start = model(tape.constant(init_inputs));
  v.init = mean(square(cols(at_start, 0, 2) - tape.constant(init_inputs.middleCols(1, 2))));
  v.total = v.physics + weights.data * v.data + weights.init * v.init;
  return v;
}

PinnLossValues pinn_losses(const DynamicsNet &net, const ParamVector &p, const cstr::ScaledBatch &data,
                           const Matrix &collocation, const Matrix &init_inputs, const LossWeights &weights) {
  Tape tape;
  TapeParams bound(tape, p);
  const PinnLossVars v = pinn_loss_vars(tape, net.bind(bound), data, collocation, init_inputs, weights);
  return {v.total.scalar(), v.data.scalar(), v.physics.scalar(), v.init.scalar()};
}

LossWeights inverse_dirichlet_update(const LossWeights &current, const Eigen::VectorXd &grad_physics,
                                     const Eigen::VectorXd &grad_data, const Eigen::VectorXd &grad_init) {
  const double sp = population_std(grad_physics);
  const double sd = population_std(grad_data);
  const double si = population_std(grad_init);
  const double top = std::max({sp, sd, si});
  LossWeights next = current;
  if (sd > 0.0) next.data = current.ema * current.data + (1.0 - current.ema) * (top / sd);
  if (si > 0.0) next.init = current.ema * current.init + (1.0 - current.ema) * (top / si);
  return next;
}

Member make_member(const DynamicsNet &net, std::uint64_t stream, int collocation_points, int init_points) {
  Member m;
  m.stream = stream;
  m.collocation = make_collocation_set(collocation_points, splitmix(stream ^ 0xC011ull));
  m.init_inputs = make_init_set(init_points, splitmix(stream ^ 0x1417ull));
  reinitialize(net, m);
  return m;
}

void reinitialize(const DynamicsNet &net, Member &m) {
  m.params = net.init(splitmix(m.stream + 0x5eedull * (m.draws + 1)));
  m.weights = LossWeights{};
  ++m.draws;
}

namespace {

struct StageOutcome {
  bool diverged = false;
};

std::vector<std::size_t> chunk(const std::vector<std::size_t> &perm, std::size_t b, std::size_t nb) {
  const std::size_t n = perm.size();
  return {perm.begin() + static_cast<std::ptrdiff_t>(b * n / nb),
          perm.begin() + static_cast<std::ptrdiff_t>((b + 1) * n / nb)};
}

StageOutcome adam_stage(const DynamicsNet &net, Member &member, const cstr::ScaledBatch &train,
                        const TrainConfig &config, std::mt19937_64 &rng, TrainHistory &history) {
  const bool physics = net.kind() == ModelKind::Pinn;
  ad::AdamState adam(ad::AdamConfig{config.adam_learning_rate}, member.params);
  const auto n = static_cast<std::size_t>(train.x.rows());
  const auto bs = static_cast<std::size_t>(config.batch_size);
  const std::size_t nb = (n + bs - 1) / bs;
  std::vector<std::size_t> order(n), phys(static_cast<std::size_t>(member.collocation.rows())),
      init(static_cast<std::size_t>(member.init_inputs.rows()));
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::iota(phys.begin(), phys.end(), std::size_t{0});
  std::iota(init.begin(), init.end(), std::size_t{0});

  for (int epoch = 0; epoch < config.adam_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    if (physics) {
      std::shuffle(phys.begin(), phys.end(), rng);
      std::shuffle(init.begin(), init.end(), rng);
    }
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < nb; ++b) {
      const std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(b * bs),
                                          order.begin() + static_cast<std::ptrdiff_t>(std::min(n, (b + 1) * bs)));
      Tape tape;
      TapeParams bound(tape, member.params);
      const ModelFn model = net.bind(bound);
      const cstr::ScaledBatch batch = select_rows(train, rows);
      ParamVector grads;
      double loss = 0.0;
      if (!physics) {
        Var l = vanilla_loss(tape, model, batch);
        loss = l.scalar();
        if (!std::isfinite(loss)) return {true};
        grads = bound.gradient(tape.backward(l));
      } else {
        const PinnLossVars v = pinn_loss_vars(tape, model, batch, select_rows(member.collocation, chunk(phys, b, nb)),
                                              select_rows(member.init_inputs, chunk(init, b, nb)), member.weights);
        if (!std::isfinite(v.total.scalar())) return {true};
        if (b == 0) {
          const Eigen::VectorXd gp = bound.gradient(tape.backward(v.physics)).flatten();
          const Eigen::VectorXd gd = bound.gradient(tape.backward(v.data)).flatten();
          const Eigen::VectorXd gi = bound.gradient(tape.backward(v.init)).flatten();
          member.weights = inverse_dirichlet_update(member.weights, gp, gd, gi);
          grads = member.params.zeros_like();
          grads.assign(gp + member.weights.data * gd + member.weights.init * gi);
          loss = v.physics.scalar() + member.weights.data * v.data.scalar() + member.weights.init * v.init.scalar();
        } else {
          grads = bound.gradient(tape.backward(v.total));
          loss = v.total.scalar();
        }
      }
      ad::adam_step(adam, member.params, grads);
      epoch_loss += loss;
    }
    if (!member.params.all_finite()) return {true};
    history.stage1_loss.push_back(epoch_loss / static_cast<double>(nb));
    history.stage1_weights.push_back(member.weights);
  }
  history.stage1_exit_weights = member.weights;
  return {false};
}

StageOutcome lbfgs_stage(const DynamicsNet &net, Member &member, const cstr::ScaledBatch &train,
                         const cstr::ScaledBatch &val, const TrainConfig &config, TrainHistory &history) {
  const bool physics = net.kind() == ModelKind::Pinn;
  const LossWeights frozen = member.weights;
  history.stage2_weights = frozen;
  ParamVector work = member.params;

  // Physics and init terms at the most recent evaluation point.
  Eigen::VectorXd last_x;
  double last_physics = 0.0, last_init = 0.0;
  auto evaluate = [&](const Eigen::VectorXd &x, Eigen::VectorXd &grad) {
    work.assign(x);
    Tape tape;
    TapeParams bound(tape, work);
    const ModelFn model = net.bind(bound);
    Var total;
    if (physics) {
      const PinnLossVars v = pinn_loss_vars(tape, model, train, member.collocation, member.init_inputs, frozen);
      total = v.total;
      last_physics = v.physics.scalar();
      last_init = v.init.scalar();
    } else {
      total = vanilla_loss(tape, model, train);
    }
    last_x = x;
    const double f = total.scalar();
    if (!std::isfinite(f)) {
      grad = Eigen::VectorXd::Constant(x.size(), std::numeric_limits<double>::quiet_NaN());
      return f;
    }
    grad = bound.gradient(tape.backward(total)).flatten();
    return f;
  };
  auto validation = [&](const Eigen::VectorXd &x) {
    if (last_x.size() != x.size() || last_x != x) {
      Eigen::VectorXd g;
      (void)evaluate(x, g);
    }
    work.assign(x);
    Tape tape;
    TapeParams bound(tape, work);
    const ModelFn model = net.bind(bound);
    if (!physics) return vanilla_loss(tape, model, val).scalar();
    Var pred = model(tape.constant(pinn_inputs(1.0, val.x, val.u)));
    const double data = mean(square(cols(pred, 0, 2) - tape.constant(val.next))).scalar();
    return last_physics + frozen.data * data + frozen.init * last_init;
  };

  Eigen::VectorXd x = member.params.flatten();
  ad::LbfgsState state(config.lbfgs);
  ad::EarlyStopping stopper(config.lbfgs_patience);
  Eigen::VectorXd best = x;
  const double start_val = validation(x);
  if (!std::isfinite(start_val)) return {true};
  stopper.update(-1, start_val);

  for (int it = 0; it < config.lbfgs_max_iterations; ++it) {
    const ad::LbfgsStepResult r = ad::lbfgs_step(state, x, evaluate);
    if (r.stalled || r.converged) break;
    const double v = validation(x);
    history.stage2_loss.push_back(r.loss);
    history.stage2_val.push_back(v);
    history.lbfgs_iterations = it + 1;
    const bool stop = stopper.update(it, v);
    if (stopper.improved_at(it)) best = x;
    if (stop) {
      history.early_stopped = true;
      break;
    }
  }
  history.best_iteration = stopper.best_epoch();
  member.params.assign(best);
  return {false};
}

} // namespace

TrainHistory train_two_stage(const DynamicsNet &net, Member &member, const cstr::TransitionSet &train,
                             const cstr::TransitionSet &val, const TrainConfig &config, std::uint64_t seed) {
  if (train.empty() || val.empty())
    throw cstr::ConfigError("ensemble training needs non-empty train and validation sets");
  const cstr::ScaledBatch train_batch = cstr::to_scaled(train);
  const cstr::ScaledBatch val_batch = cstr::to_scaled(val);
  std::mt19937_64 rng(seed);
  for (int attempt = 0; attempt < 2; ++attempt) {
    TrainHistory history;
    history.reinitialized = attempt > 0;
    const ParamVector start = member.params;
    const LossWeights start_weights = member.weights;
    if (!adam_stage(net, member, train_batch, config, rng, history).diverged &&
        !lbfgs_stage(net, member, train_batch, val_batch, config, history).diverged)
      return history;
    if (attempt == 0) {
      reinitialize(net, member);
    } else {
      member.params = start;
      member.weights = start_weights;
    }
  }
  throw DivergenceError("ensemble member diverged twice during training");
}

} // namespace pimbpo::pinn
