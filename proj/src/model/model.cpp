// SPDX-License-Identifier: Apache-2.0
#include "retain/model.hpp"

#include "retain/baselines.hpp"
#include "retain/errors.hpp"
#include "retain/retain_model.hpp"

namespace retain {

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kRetain:
      return "retain";
    case ModelKind::kRetainTs:
      return "retain-ts";
    case ModelKind::kLR:
      return "lr";
    case ModelKind::kMLP:
      return "mlp";
    case ModelKind::kRNN:
      return "rnn";
    case ModelKind::kRnnAttnMlp:
      return "rnn-attn-mlp";
    case ModelKind::kRnnAttnRnn:
      return "rnn-attn-rnn";
  }
  return "unknown";
}

ModelKind parse_model_kind(const std::string& text) {
  for (auto kind : all_model_kinds()) {
    if (to_string(kind) == text) return kind;
  }
  throw ConfigError("unknown model kind '" + text + "'");
}

std::vector<ModelKind> all_model_kinds() {
  return {ModelKind::kRetain, ModelKind::kRetainTs, ModelKind::kLR,        ModelKind::kMLP,
          ModelKind::kRNN,    ModelKind::kRnnAttnMlp, ModelKind::kRnnAttnRnn};
}

std::string to_string(OutputMode mode) { return mode == OutputMode::kSigmoid ? "sigmoid" : "softmax"; }

OutputMode parse_output_mode(const std::string& text) {
  if (text == "sigmoid") return OutputMode::kSigmoid;
  if (text == "softmax") return OutputMode::kSoftmax;
  throw ConfigError("unknown output mode '" + text + "'");
}

OutputMode default_output(Task task) { return task == Task::kL2D ? OutputMode::kSigmoid : OutputMode::kSoftmax; }

void ModelDims::validate() const {
  if (r == 0 || m == 0 || p == 0 || q == 0 || s == 0) throw ConfigError("model dimensions must be positive");
}

ModelDims paper_dims(std::size_t r, std::size_t s) { return {r, 128, 128, 128, s}; }

DropoutRates default_dropout(ModelKind kind) {
  switch (kind) {
    case ModelKind::kRetain:
    case ModelKind::kRetainTs:
      return {0.6, 0.6, 0.0};
    case ModelKind::kLR:
      return {0.0, 0.0, 0.0};
    case ModelKind::kMLP:
    case ModelKind::kRNN:
      return {0.0, 0.0, 0.6};
    case ModelKind::kRnnAttnMlp:
    case ModelKind::kRnnAttnRnn:
      return {0.0, 0.6, 0.4};
  }
  return {};
}

double default_l2(ModelKind kind) { return kind == ModelKind::kLR ? 0.01 : 1e-4; }

ModelConfig default_model_config(ModelKind kind, Task task, std::size_t r, std::size_t s) {
  ModelConfig c;
  c.kind = kind;
  c.task = task;
  c.output = default_output(task);
  c.dims.r = r;
  c.dims.s = s;
  c.dropout = default_dropout(kind);
  return c;
}

std::vector<std::size_t> prediction_steps(const data::PatientRecord& record, Task task) {
  const std::size_t t = record.visits.size();
  if (t == 0) throw ArgumentError("record " + std::to_string(record.patient_id) + " has no visits");
  if (task == Task::kL2D) return {t};
  const std::size_t n = record.labels.empty() ? t : std::min(t, record.labels.size());
  std::vector<std::size_t> steps;
  for (std::size_t i = 1; i <= n; ++i) steps.push_back(i);
  return steps;
}

std::vector<double> step_labels(const data::PatientRecord& record, Task task, std::size_t step, std::size_t width) {
  if (task == Task::kL2D) {
    if (record.labels.empty()) throw ArgumentError("record " + std::to_string(record.patient_id) + " has no label");
    return data::dense_labels(record.labels.front(), width);
  }
  if (step == 0 || step > record.labels.size()) {
    throw ArgumentError("record " + std::to_string(record.patient_id) + " has no label for step " + std::to_string(step));
  }
  return data::dense_labels(record.labels[step - 1], width);
}

std::vector<std::vector<double>> SequenceModel::predict(const data::PatientRecord& record) const {
  return predict(record, prediction_steps(record, config_.task));
}

std::vector<std::vector<double>> SequenceModel::predict(const data::PatientRecord& record,
                                                        const std::vector<std::size_t>& steps) const {
  GradientTape tape(params_);
  Rng unused(0);
  const auto outputs = forward(tape, record, steps, false, unused);
  std::vector<std::vector<double>> out;
  out.reserve(outputs.size());
  for (auto v : outputs) out.push_back(tape.value(v));
  return out;
}

Var SequenceModel::record_loss(GradientTape& tape, const data::PatientRecord& record, bool training, Rng& rng) const {
  const auto steps = prediction_steps(record, config_.task);
  const auto outputs = forward(tape, record, steps, training, rng);
  std::vector<Var> losses;
  losses.reserve(steps.size());
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const auto y = step_labels(record, config_.task, steps[i], config_.dims.s);
    losses.push_back(tape.cross_entropy(outputs[i], y));
  }
  const std::vector<double> weights(losses.size(), 1.0 / static_cast<double>(losses.size()));
  return tape.weighted_sum(losses, weights);
}

std::unique_ptr<SequenceModel> SequenceModel::clone() const {
  auto copy = make_model(config_);
  copy->params_ = params_;
  return copy;
}

Var SequenceModel::output_activation(GradientTape& tape, Var logits) const {
  return config_.output == OutputMode::kSigmoid ? tape.sigmoid(logits) : tape.softmax(logits);
}

void SequenceModel::check_record(const data::PatientRecord& record) const {
  if (record.visits.empty()) throw ArgumentError("record " + std::to_string(record.patient_id) + " has no visits");
}

std::unique_ptr<SequenceModel> make_model(const ModelConfig& config) {
  config.dims.validate();
  switch (config.kind) {
    case ModelKind::kRetain:
    case ModelKind::kRetainTs:
      return std::make_unique<RetainModel>(config);
    case ModelKind::kLR:
      return std::make_unique<LogisticRegression>(config);
    case ModelKind::kMLP:
      return std::make_unique<MlpBaseline>(config);
    case ModelKind::kRNN:
      return std::make_unique<StackedRnn>(config);
    case ModelKind::kRnnAttnMlp:
      return std::make_unique<RnnAttentionMlp>(config);
    case ModelKind::kRnnAttnRnn:
      return std::make_unique<RnnAttentionRnn>(config);
  }
  throw ConfigError("unsupported model kind");
}

}  // namespace retain
