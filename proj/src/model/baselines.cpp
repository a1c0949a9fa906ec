// SPDX-License-Identifier: Apache-2.0
#include "retain/baselines.hpp"

#include <algorithm>
#include <map>

#include "retain/errors.hpp"

namespace retain {

namespace {

std::size_t last_step(const data::PatientRecord& record, const std::vector<std::size_t>& steps) {
  std::size_t last = 0;
  for (auto s : steps) {
    if (s == 0 || s > record.visits.size()) {
      throw ArgumentError("step " + std::to_string(s) + " outside record " + std::to_string(record.patient_id));
    }
    last = std::max(last, s);
  }
  return last;
}

SparseInput sparse(const data::Visit& visit) { return SparseInput{visit.codes, visit.values}; }

Tensor vector_param(std::size_t n, Rng& rng) { return Tensor({n}, glorot_uniform(1, n, rng).values()); }

void check_vocab(const data::PatientRecord& record, std::size_t last, std::size_t r) {
  for (std::size_t j = 0; j < last; ++j) {
    for (int k : record.visits[j].codes) {
      if (k < 0 || static_cast<std::size_t>(k) >= r) {
        throw DimensionError("code " + std::to_string(k) + " outside vocabulary of " + std::to_string(r));
      }
    }
  }
}

}  // namespace

SparseSum sparse_pseudo_context(const data::PatientRecord& record, std::size_t step, std::size_t window) {
  if (step == 0 || step > record.visits.size()) {
    throw ArgumentError("step " + std::to_string(step) + " outside record " + std::to_string(record.patient_id));
  }
  if (window == 0) throw ArgumentError("pseudo-context window must be positive");
  const std::size_t first = step > window ? step - window : 0;
  std::map<int, double> sums;
  for (std::size_t j = first; j < step; ++j) {
    const auto& v = record.visits[j];
    for (std::size_t i = 0; i < v.codes.size(); ++i) sums[v.codes[i]] += v.value(i);
  }
  SparseSum out;
  for (const auto& [code, value] : sums) {
    out.codes.push_back(code);
    out.values.push_back(value);
  }
  return out;
}

std::vector<double> pseudo_context(const data::PatientRecord& record, std::size_t step, std::size_t window,
                                   std::size_t r) {
  const auto sum = sparse_pseudo_context(record, step, window);
  std::vector<double> dense(r, 0.0);
  for (std::size_t i = 0; i < sum.codes.size(); ++i) {
    const auto k = static_cast<std::size_t>(sum.codes[i]);
    if (k >= r) throw DimensionError("code " + std::to_string(k) + " outside vocabulary of " + std::to_string(r));
    dense[k] = sum.values[i];
  }
  return dense;
}

LogisticRegression::LogisticRegression(const ModelConfig& config) : SequenceModel(config) {
  const auto& d = config.dims;
  Rng rng(config.init_seed);
  W_out_ = params_.add("W_out", glorot_uniform(d.s, d.r, rng), true);
  b_out_ = params_.add("b_out", Tensor({d.s}));
}

std::vector<Var> LogisticRegression::forward(GradientTape& tape, const data::PatientRecord& record,
                                             const std::vector<std::size_t>& steps, bool, Rng&) const {
  check_record(record);
  check_vocab(record, last_step(record, steps), config_.dims.r);
  std::vector<Var> out;
  for (auto s : steps) {
    const auto pc = sparse_pseudo_context(record, s, config_.window);
    const Var logits = tape.add(tape.embed(W_out_, pc.view()), tape.param(b_out_));
    out.push_back(output_activation(tape, logits));
  }
  return out;
}

MlpBaseline::MlpBaseline(const ModelConfig& config) : SequenceModel(config) {
  const auto& d = config.dims;
  const std::size_t h = config.baseline_hidden;
  if (h == 0) throw ConfigError("baseline hidden size must be positive");
  Rng rng(config.init_seed);
  W_hidden_ = params_.add("W_hidden", glorot_uniform(h, d.r, rng), true);
  b_hidden_ = params_.add("b_hidden", Tensor({h}));
  W_out_ = params_.add("W_out", glorot_uniform(d.s, h, rng), true);
  b_out_ = params_.add("b_out", Tensor({d.s}));
}

std::vector<Var> MlpBaseline::forward(GradientTape& tape, const data::PatientRecord& record,
                                      const std::vector<std::size_t>& steps, bool training, Rng& rng) const {
  check_record(record);
  check_vocab(record, last_step(record, steps), config_.dims.r);
  std::vector<Var> out;
  for (auto s : steps) {
    const auto pc = sparse_pseudo_context(record, s, config_.window);
    Var hidden = tape.tanh(tape.add(tape.embed(W_hidden_, pc.view()), tape.param(b_hidden_)));
    hidden = tape.dropout(hidden, config_.dropout.hidden, training, rng);
    out.push_back(output_activation(tape, tape.affine(W_out_, hidden, b_out_)));
  }
  return out;
}

StackedRnn::StackedRnn(const ModelConfig& config) : SequenceModel(config) {
  const auto& d = config.dims;
  const std::size_t h = config.baseline_hidden;
  if (h == 0) throw ConfigError("baseline hidden size must be positive");
  Rng rng(config.init_seed);
  layer1_ = add_gru_cell(params_, "rnn1", d.r, h, rng, false);
  layer2_ = add_gru_cell(params_, "rnn2", h, h, rng, false);
  W_out_ = params_.add("W_out", glorot_uniform(d.s, h, rng), true);
  b_out_ = params_.add("b_out", Tensor({d.s}));
}

std::vector<Var> StackedRnn::forward(GradientTape& tape, const data::PatientRecord& record,
                                     const std::vector<std::size_t>& steps, bool training, Rng& rng) const {
  check_record(record);
  const std::size_t last = last_step(record, steps);
  check_vocab(record, last, config_.dims.r);
  const std::size_t h = config_.baseline_hidden;
  Var h1 = tape.constant(std::vector<double>(h, 0.0));
  Var h2 = tape.constant(std::vector<double>(h, 0.0));
  std::vector<Var> top(last);
  for (std::size_t j = 0; j < last; ++j) {
    h1 = tape.gru(layer1_, sparse(record.visits[j]), h1);
    const Var in2 = tape.dropout(h1, config_.dropout.hidden, training, rng);
    h2 = tape.gru(layer2_, in2, h2);
    top[j] = h2;
  }
  std::vector<Var> out;
  for (auto s : steps) {
    const Var state = tape.dropout(top[s - 1], config_.dropout.hidden, training, rng);
    out.push_back(output_activation(tape, tape.affine(W_out_, state, b_out_)));
  }
  return out;
}

RnnAttentionMlp::RnnAttentionMlp(const ModelConfig& config) : SequenceModel(config) {
  const auto& d = config.dims;
  const std::size_t h = config.baseline_hidden;
  if (h == 0) throw ConfigError("baseline hidden size must be positive");
  Rng rng(config.init_seed);
  W_emb_ = params_.add("W_emb", glorot_uniform(d.m, d.r, rng));
  rnn_ = add_gru_cell(params_, "rnn", d.m, h, rng, false);
  W_attn_hidden_ = params_.add("W_attn_hidden", glorot_uniform(h, h, rng), true);
  b_attn_hidden_ = params_.add("b_attn_hidden", Tensor({h}));
  w_attn_ = params_.add("w_attn", vector_param(h, rng));
  b_attn_ = params_.add("b_attn", Tensor({1}));
  W_out_ = params_.add("W_out", glorot_uniform(d.s, d.m, rng), true);
  b_out_ = params_.add("b_out", Tensor({d.s}));
}

std::vector<Var> RnnAttentionMlp::energies(GradientTape& tape, const data::PatientRecord& record, std::size_t last,
                                           bool training, Rng& rng, std::vector<Var>& embeddings) const {
  const std::size_t h = config_.baseline_hidden;
  Var state = tape.constant(std::vector<double>(h, 0.0));
  std::vector<Var> e;
  embeddings.clear();
  for (std::size_t j = 0; j < last; ++j) {
    const Var v = tape.embed(W_emb_, sparse(record.visits[j]));
    embeddings.push_back(v);
    state = tape.gru(rnn_, v, state);
    const Var g = tape.dropout(state, config_.dropout.hidden, training, rng);
    const Var a = tape.tanh(tape.affine(W_attn_hidden_, g, b_attn_hidden_));
    e.push_back(tape.dot_bias(w_attn_, a, b_attn_));
  }
  return e;
}

std::vector<Var> RnnAttentionMlp::forward(GradientTape& tape, const data::PatientRecord& record,
                                          const std::vector<std::size_t>& steps, bool training, Rng& rng) const {
  check_record(record);
  const std::size_t last = last_step(record, steps);
  check_vocab(record, last, config_.dims.r);
  std::vector<Var> embeddings;
  const auto e = energies(tape, record, last, training, rng, embeddings);
  std::vector<Var> out;
  for (auto s : steps) {
    const Var alphas = tape.softmax(tape.concat(std::span<const Var>(e.data(), s)));
    Var c = tape.attention_context(alphas, {}, std::span<const Var>(embeddings.data(), s));
    c = tape.dropout(c, config_.dropout.context, training, rng);
    out.push_back(output_activation(tape, tape.affine(W_out_, c, b_out_)));
  }
  return out;
}

std::vector<double> RnnAttentionMlp::attention(const data::PatientRecord& record, std::size_t step) const {
  check_record(record);
  const std::size_t last = last_step(record, {step});
  check_vocab(record, last, config_.dims.r);
  GradientTape tape(params_);
  Rng unused(0);
  std::vector<Var> embeddings;
  const auto e = energies(tape, record, last, false, unused, embeddings);
  return tape.value(tape.softmax(tape.concat(e)));
}

}  // namespace retain
