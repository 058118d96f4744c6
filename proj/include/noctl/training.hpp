#pragma once

// Physics-informed training: ADAM over the network parameters on the mean
// residual plus initial/boundary losses of mini-batches of controls.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "noctl/errors.hpp"
#include "noctl/network.hpp"
#include "noctl/problems.hpp"
#include "noctl/sampling.hpp"

namespace noctl {

struct TrainConfig {
  int epochs = 300;
  int batch = 100;
  double lr = 1e-3;
  // Step decay lr * gamma^floor(epoch / lr_step); constant when unset.
  std::optional<int> lr_step;
  double gamma = 1.0;
  std::uint64_t seed = 0;

  void validate(std::size_t set_size) const;
};

struct AdamState {
  std::vector<double> m, v;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  static AdamState zeros(std::size_t n);
};

// In-place bias-corrected ADAM update.
void adam_step(AdamState& state, std::span<double> params, std::span<const double> grads, double lr);

double lr_at(const TrainConfig& config, int epoch);

struct LossParts {
  double total = 0.0;
  double physics = 0.0;
  double ic = 0.0;
  double bc = 0.0;
};

// Batch rows are controls on the problem's sensor grid.
LossParts training_loss(const DeepOnetModel& model, const ProblemSpec& problem, const Matrix& batch);

struct LossGradient {
  LossParts loss;
  std::vector<double> grad;  // flattened like ParameterStore::flatten
};
LossGradient training_loss_grad(const DeepOnetModel& model, const ProblemSpec& problem, const Matrix& batch);

struct EpochRow {
  int epoch = 0;
  LossParts loss;  // means over the epoch's batches
  double lr = 0.0;
};

struct TrainResult {
  DeepOnetModel model;
  std::vector<EpochRow> history;
};

// Thrown when a loss or gradient turns non-finite; carries the model from
// before the failing update.
class TrainingAborted : public NumericalError {
 public:
  TrainingAborted(const std::string& what, TrainResult partial)
      : NumericalError(what), partial_(std::move(partial)) {}
  const TrainResult& partial() const noexcept { return partial_; }

 private:
  TrainResult partial_;
};

using EpochCallback = std::function<void(const EpochRow&)>;

TrainResult train(DeepOnetModel model, const ProblemSpec& problem, const TrainingSet& set, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

void write_history_csv(const std::vector<EpochRow>& history, const std::string& path);

}  // namespace noctl
