// SPDX-License-Identifier: Apache-2.0
#pragma once

// Comparison models: two stationary models over a windowed sum of recent
// visits, a stacked forward GRU, and two attention variants.

#include <vector>

#include "retain/model.hpp"
#include "retain/retain_model.hpp"

namespace retain {

/// Element-wise sum of x_{max(1, i-window+1)} .. x_i as a dense length-r vector.
std::vector<double> pseudo_context(const data::PatientRecord& record, std::size_t step, std::size_t window,
                                   std::size_t r);

/// Same sum in sparse form: sorted code indices with their summed values.
struct SparseSum {
  std::vector<int> codes;
  std::vector<double> values;
  SparseInput view() const { return SparseInput{codes, values}; }
};
SparseSum sparse_pseudo_context(const data::PatientRecord& record, std::size_t step, std::size_t window);

/// activation(W pseudo_context + b).
class LogisticRegression : public SequenceModel {
 public:
  explicit LogisticRegression(const ModelConfig& config);
  std::vector<Var> forward(GradientTape& tape, const data::PatientRecord& record,
                           const std::vector<std::size_t>& steps, bool training, Rng& rng) const override;

 private:
  ParamId W_out_, b_out_;
};

/// One tanh hidden layer over the pseudo-context, dropout on its output.
class MlpBaseline : public SequenceModel {
 public:
  explicit MlpBaseline(const ModelConfig& config);
  std::vector<Var> forward(GradientTape& tape, const data::PatientRecord& record,
                           const std::vector<std::size_t>& steps, bool training, Rng& rng) const override;

 private:
  ParamId W_hidden_, b_hidden_, W_out_, b_out_;
};

/// Two stacked GRUs in forward time; dropout on both layers' outputs.
class StackedRnn : public SequenceModel {
 public:
  explicit StackedRnn(const ModelConfig& config);
  std::vector<Var> forward(GradientTape& tape, const data::PatientRecord& record,
                           const std::vector<std::size_t>& steps, bool training, Rng& rng) const override;

 private:
  GruCellIds layer1_, layer2_;
  ParamId W_out_, b_out_;
};

/// Forward GRU over visit embeddings; a one-hidden-layer MLP scores each
/// state; the context is sum_j alpha_j v_j.
class RnnAttentionMlp : public SequenceModel {
 public:
  explicit RnnAttentionMlp(const ModelConfig& config);
  std::vector<Var> forward(GradientTape& tape, const data::PatientRecord& record,
                           const std::vector<std::size_t>& steps, bool training, Rng& rng) const override;

  /// Attention weights at a 1-based step (dropout off).
  std::vector<double> attention(const data::PatientRecord& record, std::size_t step) const;

 private:
  std::vector<Var> energies(GradientTape& tape, const data::PatientRecord& record, std::size_t last, bool training,
                            Rng& rng, std::vector<Var>& embeddings) const;

  ParamId W_emb_;
  GruCellIds rnn_;
  ParamId W_attn_hidden_, b_attn_hidden_, w_attn_, b_attn_, W_out_, b_out_;
};

/// Reverse-time scalar attention: the RETAIN pipeline with beta pinned to ones
/// and no beta path.
class RnnAttentionRnn : public RetainModel {
 public:
  explicit RnnAttentionRnn(const ModelConfig& config) : RetainModel(config) {}
};

}  // namespace retain
