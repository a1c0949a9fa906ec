// SPDX-License-Identifier: Apache-2.0
#include "retain/retain_model.hpp"

#include <cmath>

#include "retain/errors.hpp"
#include "retain/kernels.hpp"
#include "retain/nn.hpp"

namespace retain {

namespace {

SparseInput sparse(const data::Visit& visit) { return SparseInput{visit.codes, visit.values}; }

void check_sequence(const std::vector<std::vector<double>>& embedded, std::size_t m, const char* what) {
  if (embedded.empty()) throw ArgumentError(std::string(what) + ": empty visit sequence");
  for (const auto& v : embedded) {
    if (v.size() != m) {
      throw DimensionError(std::string(what) + ": embedding length " + std::to_string(v.size()) + ", expected " +
                           std::to_string(m));
    }
  }
}

}  // namespace

std::vector<double> visit_timestamps(const data::PatientRecord& record) {
  if (record.visits.empty()) throw ArgumentError("record " + std::to_string(record.patient_id) + " has no visits");
  const auto first = record.visits.front().day;
  std::vector<double> out;
  out.reserve(record.visits.size());
  std::int64_t prev = first - 1;
  for (const auto& v : record.visits) {
    if (v.day < 0 || v.day <= prev) {
      throw ArgumentError("record " + std::to_string(record.patient_id) + " has missing or unordered visit days");
    }
    prev = v.day;
    out.push_back(std::log1p(static_cast<double>(v.day - first)));
  }
  return out;
}

RetainModel::RetainModel(const ModelConfig& config) : SequenceModel(config) {
  if (config.kind != ModelKind::kRetain && config.kind != ModelKind::kRetainTs &&
      config.kind != ModelKind::kRnnAttnRnn) {
    throw ConfigError("RetainModel built with kind " + to_string(config.kind));
  }
  scalar_only_ = config.kind == ModelKind::kRnnAttnRnn;
  unit_beta_ = scalar_only_;
  const auto& d = config.dims;
  d.validate();
  const std::size_t attn_in = d.m + (timestamped() ? 1 : 0);
  Rng rng(config.init_seed);
  W_emb_ = params_.add("W_emb", glorot_uniform(d.m, d.r, rng), !scalar_only_);
  alpha_cell_ = add_gru_cell(params_, "alpha", attn_in, d.p, rng, scalar_only_);
  w_alpha_ = params_.add("w_alpha", Tensor({d.p}, glorot_uniform(1, d.p, rng).values()), !scalar_only_);
  b_alpha_ = params_.add("b_alpha", Tensor({1}));
  if (!scalar_only_) {
    beta_cell_ = add_gru_cell(params_, "beta", attn_in, d.q, rng, false);
    W_beta_ = params_.add("W_beta", glorot_uniform(d.m, d.q, rng), true);
    b_beta_ = params_.add("b_beta", Tensor({d.m}));
  }
  W_out_ = params_.add("W_out", glorot_uniform(d.s, d.m, rng), true);
  b_out_ = params_.add("b_out", Tensor({d.s}));
}

std::vector<double> RetainModel::embed_visit(const data::Visit& visit) const {
  const Tensor& W = params_[W_emb_];
  if (!visit.values.empty() && visit.values.size() != visit.codes.size()) {
    throw DimensionError("visit values/codes length mismatch");
  }
  std::vector<double> v(W.rows(), 0.0);
  for (std::size_t i = 0; i < visit.codes.size(); ++i) {
    const int k = visit.codes[i];
    if (k < 0 || static_cast<std::size_t>(k) >= W.cols()) {
      throw DimensionError("code " + std::to_string(k) + " outside vocabulary of " + std::to_string(W.cols()));
    }
    const double x = visit.value(i);
    for (std::size_t row = 0; row < W.rows(); ++row) v[row] += W.at(row, static_cast<std::size_t>(k)) * x;
  }
  return v;
}

namespace {

std::vector<std::vector<double>> with_timestamps(const std::vector<std::vector<double>>& embedded,
                                                 const std::vector<double>& timestamps, bool timestamped) {
  if (!timestamped) {
    if (!timestamps.empty()) throw ArgumentError("timestamps given to a model without a timestamp channel");
    return embedded;
  }
  if (timestamps.size() != embedded.size()) {
    throw ArgumentError("missing timestamps: expected " + std::to_string(embedded.size()) + ", got " +
                        std::to_string(timestamps.size()));
  }
  auto out = embedded;
  for (std::size_t j = 0; j < out.size(); ++j) out[j].push_back(timestamps[j]);
  return out;
}

}  // namespace

std::vector<double> RetainModel::visit_attention(const std::vector<std::vector<double>>& embedded,
                                                 const std::vector<double>& timestamps) const {
  check_sequence(embedded, dims().m, "visit_attention");
  const auto inputs = with_timestamps(embedded, timestamps, timestamped());
  const auto g = nn::run_rnn_reversed(inputs, nn::GruCellParams::from(params_, alpha_cell_));
  const Tensor& w = params_[w_alpha_];
  const double b = params_[b_alpha_][0];
  std::vector<double> e;
  e.reserve(g.size());
  for (const auto& state : g) e.push_back(kernels::dot(w.span(), state) + b);
  return nn::softmax(e);
}

std::vector<std::vector<double>> RetainModel::variable_attention(const std::vector<std::vector<double>>& embedded,
                                                                 const std::vector<double>& timestamps) const {
  check_sequence(embedded, dims().m, "variable_attention");
  if (unit_beta_) return std::vector<std::vector<double>>(embedded.size(), std::vector<double>(dims().m, 1.0));
  const auto inputs = with_timestamps(embedded, timestamps, timestamped());
  const auto h = nn::run_rnn_reversed(inputs, nn::GruCellParams::from(params_, beta_cell_));
  std::vector<std::vector<double>> betas;
  betas.reserve(h.size());
  for (const auto& state : h) betas.push_back(nn::tanh(nn::affine(params_[W_beta_], state, params_[b_beta_].span())));
  return betas;
}

std::vector<double> RetainModel::context_vector(const std::vector<std::vector<double>>& embedded,
                                                const std::vector<double>& alphas,
                                                const std::vector<std::vector<double>>& betas) {
  if (embedded.empty()) throw ArgumentError("context_vector: empty visit sequence");
  if (alphas.size() != embedded.size() || betas.size() != embedded.size()) {
    throw DimensionError("context_vector: " + std::to_string(embedded.size()) + " visits, " +
                         std::to_string(alphas.size()) + " alphas, " + std::to_string(betas.size()) + " betas");
  }
  const std::size_t m = embedded.front().size();
  std::vector<double> c(m, 0.0);
  for (std::size_t j = 0; j < embedded.size(); ++j) {
    if (embedded[j].size() != m || betas[j].size() != m) throw DimensionError("context_vector: ragged inputs");
    for (std::size_t k = 0; k < m; ++k) c[k] += alphas[j] * betas[j][k] * embedded[j][k];
  }
  return c;
}

std::vector<double> RetainModel::predict_from_context(const std::vector<double>& context) const {
  if (context.size() != dims().m) throw DimensionError("context length " + std::to_string(context.size()));
  const auto logits = nn::affine(params_[W_out_], context, params_[b_out_].span());
  return config_.output == OutputMode::kSigmoid ? nn::sigmoid(logits) : nn::softmax(logits);
}

std::vector<Var> RetainModel::attention_inputs(GradientTape& tape, const std::vector<Var>& embedded,
                                               const std::vector<double>& timestamps) const {
  if (!timestamped()) return embedded;
  std::vector<Var> out;
  out.reserve(embedded.size());
  for (std::size_t j = 0; j < embedded.size(); ++j) {
    const Var parts[2] = {embedded[j], tape.constant({timestamps[j]})};
    out.push_back(tape.concat(parts));
  }
  return out;
}

void RetainModel::attend(GradientTape& tape, const std::vector<Var>& inputs, std::size_t step, bool training, Rng& rng,
                         StepVars& out) const {
  const auto& d = dims();
  out.step = step;
  out.alpha_states.assign(step, Var{});
  Var g = tape.constant(std::vector<double>(d.p, 0.0));
  for (std::size_t j = step; j-- > 0;) {
    g = tape.gru(alpha_cell_, inputs[j], g);
    out.alpha_states[j] = g;
  }
  std::vector<Var> energies;
  energies.reserve(step);
  const double hidden_rate = scalar_only_ ? config_.dropout.hidden : 0.0;
  for (std::size_t j = 0; j < step; ++j) {
    const Var g_j = tape.dropout(out.alpha_states[j], hidden_rate, training, rng);
    energies.push_back(tape.dot_bias(w_alpha_, g_j, b_alpha_));
  }
  out.alphas = tape.softmax(tape.concat(energies));
  out.beta_states.clear();
  out.betas.clear();
  if (scalar_only_ || unit_beta_) return;
  out.beta_states.assign(step, Var{});
  Var h = tape.constant(std::vector<double>(d.q, 0.0));
  for (std::size_t j = step; j-- > 0;) {
    h = tape.gru(beta_cell_, inputs[j], h);
    out.beta_states[j] = h;
  }
  out.betas.reserve(step);
  for (std::size_t j = 0; j < step; ++j) out.betas.push_back(tape.tanh(tape.affine(W_beta_, out.beta_states[j], b_beta_)));
}

RetainModel::SequenceVars RetainModel::build(GradientTape& tape, const data::PatientRecord& record,
                                             const std::vector<std::size_t>& steps, bool training, Rng& rng) const {
  check_record(record);
  std::size_t last = 0;
  for (auto s : steps) {
    if (s == 0 || s > record.visits.size()) {
      throw ArgumentError("step " + std::to_string(s) + " outside record " + std::to_string(record.patient_id));
    }
    last = std::max(last, s);
  }
  std::vector<double> timestamps;
  if (timestamped()) {
    timestamps = visit_timestamps(record);
    timestamps.resize(last);
  }
  SequenceVars seq;
  seq.embeddings.reserve(last);
  for (std::size_t j = 0; j < last; ++j) {
    const auto& visit = record.visits[j];
    if (!visit.values.empty() && visit.values.size() != visit.codes.size()) {
      throw DimensionError("visit values/codes length mismatch");
    }
    Var v = tape.embed(W_emb_, sparse(visit));
    seq.embeddings.push_back(tape.dropout(v, config_.dropout.embedding, training, rng));
  }
  seq.attention_inputs = attention_inputs(tape, seq.embeddings, timestamps);
  seq.steps.reserve(steps.size());
  for (auto s : steps) {
    StepVars sv;
    attend(tape, seq.attention_inputs, s, training, rng, sv);
    const std::span<const Var> values(seq.embeddings.data(), s);
    Var c = tape.attention_context(sv.alphas, sv.betas, values);
    sv.context = tape.dropout(c, config_.dropout.context, training, rng);
    sv.logits = tape.affine(W_out_, sv.context, b_out_);
    sv.y_hat = output_activation(tape, sv.logits);
    seq.steps.push_back(std::move(sv));
  }
  return seq;
}

std::vector<Var> RetainModel::forward(GradientTape& tape, const data::PatientRecord& record,
                                      const std::vector<std::size_t>& steps, bool training, Rng& rng) const {
  auto seq = build(tape, record, steps, training, rng);
  std::vector<Var> out;
  out.reserve(seq.steps.size());
  for (const auto& s : seq.steps) out.push_back(s.y_hat);
  return out;
}

std::vector<ForwardTrace> RetainModel::traces(const data::PatientRecord& record, const std::vector<std::size_t>& steps,
                                              bool training, Rng& rng) const {
  GradientTape tape(params_);
  const auto seq = build(tape, record, steps, training, rng);
  std::vector<ForwardTrace> out;
  out.reserve(seq.steps.size());
  for (const auto& sv : seq.steps) {
    ForwardTrace t;
    t.step = sv.step;
    t.training = training;
    t.output = config_.output;
    for (std::size_t j = 0; j < sv.step; ++j) t.embeddings.push_back(tape.value(seq.embeddings[j]));
    for (auto g : sv.alpha_states) t.alpha_states.push_back(tape.value(g));
    for (auto h : sv.beta_states) t.beta_states.push_back(tape.value(h));
    t.attention.prediction_step = sv.step;
    t.attention.alphas = tape.value(sv.alphas);
    if (sv.betas.empty()) {
      t.attention.betas.assign(sv.step, std::vector<double>(dims().m, 1.0));
    } else {
      for (auto b : sv.betas) t.attention.betas.push_back(tape.value(b));
    }
    t.context = tape.value(sv.context);
    t.logits = tape.value(sv.logits);
    t.y_hat = tape.value(sv.y_hat);
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<ForwardTrace> RetainModel::forward_sequence(const data::PatientRecord& record, Task task, bool training,
                                                        Rng& rng) const {
  check_record(record);
  std::vector<std::size_t> steps;
  if (task == Task::kL2D) {
    steps.push_back(record.visits.size());
  } else {
    for (std::size_t i = 1; i <= record.visits.size(); ++i) steps.push_back(i);
  }
  return traces(record, steps, training, rng);
}

std::vector<ForwardTrace> RetainModel::forward_with_timestamps(const data::PatientRecord& record, Task task,
                                                               bool training, Rng& rng) const {
  if (!timestamped()) throw StateError("forward_with_timestamps requires the timestamped model");
  return forward_sequence(record, task, training, rng);
}

}  // namespace retain
