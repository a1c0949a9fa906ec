// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "retain/data.hpp"
#include "retain/params.hpp"
#include "retain/rng.hpp"
#include "retain/tape.hpp"

namespace retain {

enum class ModelKind { kRetain, kRetainTs, kLR, kMLP, kRNN, kRnnAttnMlp, kRnnAttnRnn };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& text);
std::vector<ModelKind> all_model_kinds();

enum class OutputMode { kSigmoid, kSoftmax };

std::string to_string(OutputMode mode);
OutputMode parse_output_mode(const std::string& text);
/// Sigmoid for the binary terminal task, softmax for next-visit codes.
OutputMode default_output(Task task);

struct ModelDims {
  std::size_t r = 617;  // input vocabulary
  std::size_t m = 32;   // visit embedding
  std::size_t p = 32;   // RNN_alpha hidden
  std::size_t q = 32;   // RNN_beta hidden
  std::size_t s = 1;    // labels

  void validate() const;
  bool operator==(const ModelDims&) const = default;
};

/// Dimension defaults of the published configuration (m = p = q = 128).
ModelDims paper_dims(std::size_t r, std::size_t s);

struct DropoutRates {
  double embedding = 0.0;  // RETAIN v_i
  double context = 0.0;    // RETAIN c_i, attention baselines' context
  double hidden = 0.0;     // MLP / RNN hidden outputs
  bool operator==(const DropoutRates&) const = default;
};

/// Published regularization per model family.
DropoutRates default_dropout(ModelKind kind);
double default_l2(ModelKind kind);

struct ModelConfig {
  ModelKind kind = ModelKind::kRetain;
  Task task = Task::kL2D;
  OutputMode output = OutputMode::kSigmoid;
  ModelDims dims;
  std::size_t baseline_hidden = 256;  // baseline RNN/MLP hidden size
  std::size_t window = 10;            // LR/MLP pseudo-context width
  DropoutRates dropout;
  std::uint64_t init_seed = 1;

  bool operator==(const ModelConfig&) const = default;
};

/// Config with the published dropout and output defaults for a kind.
ModelConfig default_model_config(ModelKind kind, Task task, std::size_t r, std::size_t s);

/// 1-based steps at which a record is scored: the final step for L2D, every
/// labelled step for ESM (all steps when the record carries no labels).
std::vector<std::size_t> prediction_steps(const data::PatientRecord& record, Task task);

/// Dense target for a (1-based) prediction step.
std::vector<double> step_labels(const data::PatientRecord& record, Task task, std::size_t step, std::size_t width);

/// Common interface of RETAIN and the baselines.
class SequenceModel {
 public:
  explicit SequenceModel(ModelConfig config) : config_(std::move(config)) {}
  virtual ~SequenceModel() = default;

  const ModelConfig& config() const { return config_; }
  ModelKind kind() const { return config_.kind; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  /// Records output probabilities for each requested step on the tape.
  virtual std::vector<Var> forward(GradientTape& tape, const data::PatientRecord& record,
                                   const std::vector<std::size_t>& steps, bool training, Rng& rng) const = 0;

  /// Inference (dropout off) at the record's prediction steps.
  std::vector<std::vector<double>> predict(const data::PatientRecord& record) const;
  std::vector<std::vector<double>> predict(const data::PatientRecord& record,
                                           const std::vector<std::size_t>& steps) const;

  /// Mean over prediction steps of the summed binary cross entropy.
  Var record_loss(GradientTape& tape, const data::PatientRecord& record, bool training, Rng& rng) const;

  std::unique_ptr<SequenceModel> clone() const;

 protected:
  Var output_activation(GradientTape& tape, Var logits) const;
  void check_record(const data::PatientRecord& record) const;

  ModelConfig config_;
  ParamSet params_;
};

std::unique_ptr<SequenceModel> make_model(const ModelConfig& config);

}  // namespace retain
