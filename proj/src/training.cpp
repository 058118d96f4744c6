#include "noctl/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <fmt/format.h>

namespace noctl {

void TrainConfig::validate(std::size_t set_size) const {
  if (epochs < 1) throw ConfigError("epochs", "must be at least 1");
  if (batch < 1) throw ConfigError("batch", "must be at least 1");
  if (static_cast<std::size_t>(batch) > set_size)
    throw ConfigError("batch", fmt::format("{} exceeds the training set size {}", batch, set_size));
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr", "must be positive");
  if (lr_step) {
    if (*lr_step < 1) throw ConfigError("lr_step", "must be at least 1");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma", "must lie in (0, 1]");
  }
}

AdamState AdamState::zeros(std::size_t n) {
  AdamState s;
  s.m.assign(n, 0.0);
  s.v.assign(n, 0.0);
  return s;
}

void adam_step(AdamState& s, std::span<double> params, std::span<const double> grads, double lr) {
  if (params.size() != grads.size() || s.m.size() != params.size() || s.v.size() != params.size())
    throw ArgumentError(fmt::format("adam_step: {} parameters, {} gradients, state of {}", params.size(), grads.size(),
                                    s.m.size()));
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, double(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, double(s.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * g;
    s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * g * g;
    const double mh = s.m[i] / c1;
    const double vh = s.v[i] / c2;
    params[i] -= lr * mh / (std::sqrt(vh) + s.eps);
  }
}

double lr_at(const TrainConfig& config, int epoch) {
  if (epoch < 0) throw ArgumentError("lr_at: negative epoch");
  if (!config.lr_step) return config.lr;
  return config.lr * std::pow(config.gamma, double(epoch / *config.lr_step));
}

namespace {

struct Terms {
  ad::Var root;
  LossParts parts;
};

Terms build(ad::Tape& tape, const BoundModel& bound, const DeepOnetModel& model, const ProblemSpec& problem,
            const Matrix& batch) {
  if (batch.rows() == 0) throw ArgumentError("training_loss: empty batch");
  if (batch.cols() != problem.sensors())
    throw ArgumentError(fmt::format("training_loss: batch has {} columns, grid has {}", batch.cols(), problem.sensors()));
  const PhysicsTerms t = physics_terms(problem, model, bound, tape.leaf(batch), problem_trunk(problem, model, bound));
  Terms out;
  out.root = t.physics + t.ic + t.bc;
  out.parts.physics = t.physics.scalar();
  out.parts.ic = t.ic.scalar();
  out.parts.bc = t.bc.scalar();
  out.parts.total = out.root.scalar();
  return out;
}

}  // namespace

LossParts training_loss(const DeepOnetModel& model, const ProblemSpec& problem, const Matrix& batch) {
  ad::Tape tape;
  return build(tape, bind(tape, model), model, problem, batch).parts;
}

LossGradient training_loss_grad(const DeepOnetModel& model, const ProblemSpec& problem, const Matrix& batch) {
  ad::Tape tape;
  const BoundModel bound = bind(tape, model);
  const Terms t = build(tape, bound, model, problem, batch);
  tape.backward(t.root);
  return {t.parts, flat_grad(tape, bound)};
}

TrainResult train(DeepOnetModel model, const ProblemSpec& problem, const TrainingSet& set, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  if (set.size() == 0) throw ArgumentError("train: empty training set");
  config.validate(set.size());
  check_model_matches(problem, model);

  std::vector<double> params = model.params.flatten();
  AdamState adam = AdamState::zeros(params.size());
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t B = static_cast<std::size_t>(config.batch);

  TrainResult res;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    const double lr = lr_at(config, epoch);
    LossParts acc;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += B) {
      const std::size_t n = std::min(B, order.size() - start);
      const Matrix batch = set.batch(std::span<const std::size_t>(order.data() + start, n));
      LossGradient lg;
      try {
        lg = training_loss_grad(model, problem, batch);
      } catch (const EvaluationError& e) {
        res.model = model;
        throw TrainingAborted(fmt::format("training stopped at epoch {}: {}", epoch, e.what()), std::move(res));
      }
      const bool finite = std::isfinite(lg.loss.total) &&
                          std::all_of(lg.grad.begin(), lg.grad.end(), [](double g) { return std::isfinite(g); });
      if (!finite) {
        res.model = model;
        throw TrainingAborted(fmt::format("training stopped at epoch {}: non-finite loss or gradient", epoch),
                              std::move(res));
      }
      acc.physics += lg.loss.physics;
      acc.ic += lg.loss.ic;
      acc.bc += lg.loss.bc;
      ++batches;
      adam_step(adam, params, lg.grad, lr);
      model.params.unflatten(params);
    }
    EpochRow row;
    row.epoch = epoch;
    row.lr = lr;
    row.loss.physics = acc.physics / batches;
    row.loss.ic = acc.ic / batches;
    row.loss.bc = acc.bc / batches;
    row.loss.total = row.loss.physics + row.loss.ic + row.loss.bc;
    res.history.push_back(row);
    if (on_epoch) on_epoch(row);
  }
  res.model = std::move(model);
  return res;
}

void write_history_csv(const std::vector<EpochRow>& history, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << "epoch,total,physics,ic,bc,lr\n";
  for (const EpochRow& r : history)
    out << fmt::format("{},{:.17g},{:.17g},{:.17g},{:.17g},{:.17g}\n", r.epoch, r.loss.total, r.loss.physics,
                       r.loss.ic, r.loss.bc, r.lr);
}

}  // namespace noctl
