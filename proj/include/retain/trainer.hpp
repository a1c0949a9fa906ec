// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "retain/data.hpp"
#include "retain/metrics.hpp"
#include "retain/model.hpp"

namespace retain {

struct TrainConfig {
  ModelConfig model;  // kind, task, dims and dropout rates
  std::size_t batch_size = 100;
  std::size_t epochs = 30;
  double l2_coefficient = 1e-4;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 5.0;   // <= 0 disables clipping
  std::size_t patience = 5;  // 0 disables early stopping
  std::uint64_t seed = 1;

  void validate() const;
};

/// Config for `kind` with the published regularization defaults.
TrainConfig default_train_config(ModelKind kind, Task task, std::size_t r, std::size_t s);

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double train_nll = 0.0;
  double valid_nll = 0.0;  // NaN when there is no validation split
};

struct TrainResult {
  std::unique_ptr<SequenceModel> model;
  std::vector<EpochStats> history;
  std::size_t best_epoch = 0;
  bool stopped_early = false;
  double train_seconds = 0.0;
};

/// sum over regularized tensors of coefficient * ||W||^2.
double l2_penalty(const ParamSet& params, double coefficient);

/// Called after every epoch; return false to stop.
using EpochCallback = std::function<bool(const EpochStats&)>;

/// Mini-batch Adam on the training split; early stopping on validation NLL
/// restores the best parameters. Throws NumericalError (with epoch, batch and
/// gradient norm) on a non-finite loss or gradient.
TrainResult train(const data::Cohort& cohort, const TrainConfig& config, const EpochCallback& on_epoch = {});
TrainResult train(const std::vector<const data::PatientRecord*>& train_set,
                  const std::vector<const data::PatientRecord*>& valid_set, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

/// Loss history as CSV: epoch,train_nll,valid_nll.
void write_loss_history(const std::vector<EpochStats>& history, std::ostream& out);
void write_loss_history(const std::vector<EpochStats>& history, const std::filesystem::path& path);

/// One sampled point of the published hyper-parameter grids.
struct SearchTrial {
  TrainConfig config;
  double valid_nll = 0.0;
};

/// Draws configurations from m,p,q in {32,64,128,200,256}, L2 in
/// {0.1,0.01,0.001,0.0001} and dropout rates in {0,0.2,0.4,0.6,0.8}, trains
/// each and returns all trials ordered by validation NLL.
std::vector<SearchTrial> random_search(const data::Cohort& cohort, const TrainConfig& base, std::size_t trials,
                                       std::uint64_t seed);

/// Samples one configuration (exposed for inspection).
TrainConfig sample_search_config(const TrainConfig& base, Rng& rng);

}  // namespace retain
