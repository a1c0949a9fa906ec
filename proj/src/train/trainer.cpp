// SPDX-License-Identifier: Apache-2.0
#include "retain/trainer.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>

#include "retain/errors.hpp"
#include "retain/kernels.hpp"

namespace retain {

void TrainConfig::validate() const {
  model.dims.validate();
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (epochs == 0) throw ConfigError("epochs must be at least 1");
  if (!(l2_coefficient >= 0.0)) throw ConfigError("l2 coefficient must be non-negative");
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must be in [0,1)");
  if (!(epsilon > 0.0)) throw ConfigError("Adam epsilon must be positive");
  for (double rate : {model.dropout.embedding, model.dropout.context, model.dropout.hidden}) {
    if (!(rate >= 0.0 && rate < 1.0)) throw ConfigError("dropout rates must be in [0,1)");
  }
}

TrainConfig default_train_config(ModelKind kind, Task task, std::size_t r, std::size_t s) {
  TrainConfig c;
  c.model = default_model_config(kind, task, r, s);
  c.l2_coefficient = default_l2(kind);
  return c;
}

double l2_penalty(const ParamSet& params, double coefficient) {
  if (coefficient == 0.0) return 0.0;
  double sum = 0.0;
  for (auto id : params.ids()) {
    if (params.regularized(id)) sum += kernels::sum_squares(params[id].span());
  }
  return coefficient * sum;
}

namespace {

double global_norm(const Gradients& grads) {
  double sum = 0.0;
  for (auto id : grads.ids()) sum += kernels::sum_squares(grads[id].span());
  return std::sqrt(sum);
}

double mean_nll(const SequenceModel& model, const std::vector<const data::PatientRecord*>& records) {
  return metrics::evaluate(model, records, {}).neg_log_likelihood;
}

[[noreturn]] void numerical_abort(std::size_t epoch, std::size_t batch, double loss, double grad_norm,
                                  const std::string& what) {
  std::ostringstream msg;
  msg << what << " at epoch " << epoch << ", batch " << batch << " (loss " << loss << ", gradient norm " << grad_norm
      << ")";
  throw NumericalError(msg.str());
}

}  // namespace

TrainResult train(const std::vector<const data::PatientRecord*>& train_set,
                  const std::vector<const data::PatientRecord*>& valid_set, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (train_set.empty()) throw ArgumentError("training split is empty");
  const auto start = std::chrono::steady_clock::now();

  ModelConfig mc = config.model;
  mc.init_seed = config.seed;
  TrainResult result;
  result.model = make_model(mc);
  auto& model = *result.model;
  auto& params = model.params();

  Gradients grads = params.zeros_like();
  ParamSet adam_m = params.zeros_like();
  ParamSet adam_v = params.zeros_like();
  ParamSet best = params;
  double best_valid = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  std::uint64_t step = 0;

  Rng rng(config.seed ^ 0xD1CE5EEDULL);
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  GradientTape tape(params);

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    shuffle(order, rng);
    double epoch_loss = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size, ++batch_index) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      const double scale = 1.0 / static_cast<double>(end - begin);
      grads.set_zero();
      double batch_loss = 0.0;
      for (std::size_t i = begin; i < end; ++i) {
        tape.clear();
        try {
          const Var loss = model.record_loss(tape, *train_set[order[i]], true, rng);
          batch_loss += tape.scalar(loss);
          tape.backward(loss, grads, scale);
        } catch (const NumericalError& e) {
          numerical_abort(epoch, batch_index, batch_loss, global_norm(grads),
                          std::string(e.what()) + " (patient " + std::to_string(train_set[order[i]]->patient_id) + ")");
        }
      }
      epoch_loss += batch_loss;
      batch_loss *= scale;
      if (config.l2_coefficient > 0.0) {
        batch_loss += l2_penalty(params, config.l2_coefficient);
        for (auto id : params.ids()) {
          if (params.regularized(id)) kernels::axpy(2.0 * config.l2_coefficient, params[id].span(), grads[id].span());
        }
      }
      const double norm = global_norm(grads);
      if (!std::isfinite(batch_loss)) numerical_abort(epoch, batch_index, batch_loss, norm, "non-finite loss");
      if (!std::isfinite(norm)) numerical_abort(epoch, batch_index, batch_loss, norm, "non-finite gradient");
      if (config.clip_norm > 0.0 && norm > config.clip_norm) {
        const double shrink = config.clip_norm / norm;
        for (auto id : grads.ids()) {
          for (auto& g : grads[id].values()) g *= shrink;
        }
      }
      ++step;
      const kernels::AdamCoeffs coeffs{config.learning_rate, config.beta1, config.beta2, config.epsilon,
                                       1.0 / (1.0 - std::pow(config.beta1, static_cast<double>(step))),
                                       1.0 / (1.0 - std::pow(config.beta2, static_cast<double>(step)))};
      for (auto id : params.ids()) {
        kernels::adam_step(params[id].span(), grads[id].span(), adam_m[id].span(), adam_v[id].span(), coeffs);
      }
      if (!params.all_finite()) numerical_abort(epoch, batch_index, batch_loss, norm, "non-finite parameter");
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_nll = epoch_loss / static_cast<double>(train_set.size());
    stats.valid_nll = valid_set.empty() ? std::numeric_limits<double>::quiet_NaN() : mean_nll(model, valid_set);
    result.history.push_back(stats);

    bool stop = false;
    if (!valid_set.empty()) {
      if (stats.valid_nll < best_valid) {
        best_valid = stats.valid_nll;
        best = params;
        result.best_epoch = epoch;
        since_best = 0;
      } else if (config.patience > 0 && ++since_best >= config.patience) {
        stop = true;
        result.stopped_early = true;
      }
    } else {
      result.best_epoch = epoch;
    }
    if (on_epoch && !on_epoch(stats)) stop = true;
    if (stop) break;
  }
  if (!valid_set.empty() && result.best_epoch > 0) params = best;
  result.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

TrainResult train(const data::Cohort& cohort, const TrainConfig& config, const EpochCallback& on_epoch) {
  return train(cohort.in_split(data::Split::kTrain), cohort.in_split(data::Split::kValid), config, on_epoch);
}

void write_loss_history(const std::vector<EpochStats>& history, std::ostream& out) {
  out << "epoch,train_nll,valid_nll\n";
  out.precision(17);
  for (const auto& e : history) {
    out << e.epoch << ',' << e.train_nll << ',';
    if (std::isnan(e.valid_nll)) {
      out << "nan";
    } else {
      out << e.valid_nll;
    }
    out << '\n';
  }
}

void write_loss_history(const std::vector<EpochStats>& history, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_loss_history(history, out);
  if (!out) throw IoError("write failed: " + path.string());
}

TrainConfig sample_search_config(const TrainConfig& base, Rng& rng) {
  static constexpr std::array<std::size_t, 5> kSizes{32, 64, 128, 200, 256};
  static constexpr std::array<double, 4> kL2{0.1, 0.01, 0.001, 0.0001};
  static constexpr std::array<double, 5> kDropout{0.0, 0.2, 0.4, 0.6, 0.8};
  auto pick = [&rng](const auto& grid) { return grid[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(grid.size()) - 1))]; };
  TrainConfig c = base;
  c.model.dims.m = pick(kSizes);
  c.model.dims.p = pick(kSizes);
  c.model.dims.q = pick(kSizes);
  c.l2_coefficient = pick(kL2);
  c.model.dropout.embedding = pick(kDropout);
  c.model.dropout.context = pick(kDropout);
  return c;
}

std::vector<SearchTrial> random_search(const data::Cohort& cohort, const TrainConfig& base, std::size_t trials,
                                       std::uint64_t seed) {
  Rng rng(seed);
  const auto train_set = cohort.in_split(data::Split::kTrain);
  const auto valid_set = cohort.in_split(data::Split::kValid);
  if (valid_set.empty()) throw ArgumentError("random search needs a validation split");
  std::vector<SearchTrial> out;
  for (std::size_t t = 0; t < trials; ++t) {
    SearchTrial trial{sample_search_config(base, rng), 0.0};
    const auto result = train(train_set, valid_set, trial.config);
    trial.valid_nll = mean_nll(*result.model, valid_set);
    out.push_back(std::move(trial));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const SearchTrial& a, const SearchTrial& b) { return a.valid_nll < b.valid_nll; });
  return out;
}

}  // namespace retain
