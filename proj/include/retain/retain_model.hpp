// SPDX-License-Identifier: Apache-2.0
#pragma once

// Reverse-time two-level attention model. Visits are embedded linearly;
// two GRUs read the embeddings newest-first to produce a scalar weight per
// visit (alpha) and a gating vector per visit (beta); the prediction is an
// affine read-out of sum_j alpha_j * beta_j (.) v_j.

#include <vector>

#include "retain/model.hpp"

namespace retain {

struct AttentionProfile {
  std::size_t prediction_step = 0;  // 1-based
  std::vector<double> alphas;
  std::vector<std::vector<double>> betas;
};

/// Every intermediate of one prediction.
struct ForwardTrace {
  std::size_t step = 0;  // 1-based index i of the prediction
  std::vector<std::vector<double>> embeddings;    // v_1..v_i (after dropout)
  std::vector<std::vector<double>> alpha_states;  // g_1..g_i
  std::vector<std::vector<double>> beta_states;   // h_1..h_i
  AttentionProfile attention;
  std::vector<double> context;  // c_i
  std::vector<double> logits;   // W c_i + b
  std::vector<double> y_hat;
  OutputMode output = OutputMode::kSigmoid;
  bool training = false;
};

/// log(1 + days since the first visit), one value per visit.
std::vector<double> visit_timestamps(const data::PatientRecord& record);

class RetainModel : public SequenceModel {
 public:
  /// kind must be kRetain, kRetainTs (timestamped attention inputs) or
  /// kRnnAttnRnn (no beta path; beta is pinned to ones).
  explicit RetainModel(const ModelConfig& config);

  bool timestamped() const { return config_.kind == ModelKind::kRetainTs; }
  const ModelDims& dims() const { return config_.dims; }

  std::vector<Var> forward(GradientTape& tape, const data::PatientRecord& record,
                           const std::vector<std::size_t>& steps, bool training, Rng& rng) const override;

  /// v = W_emb x.
  std::vector<double> embed_visit(const data::Visit& visit) const;
  /// Visit-level weights alpha_1..alpha_i for an embedded sequence. For the
  /// timestamped model pass per-visit timestamps.
  std::vector<double> visit_attention(const std::vector<std::vector<double>>& embedded,
                                      const std::vector<double>& timestamps = {}) const;
  /// Variable-level weights beta_1..beta_i.
  std::vector<std::vector<double>> variable_attention(const std::vector<std::vector<double>>& embedded,
                                                      const std::vector<double>& timestamps = {}) const;
  static std::vector<double> context_vector(const std::vector<std::vector<double>>& embedded,
                                            const std::vector<double>& alphas,
                                            const std::vector<std::vector<double>>& betas);
  std::vector<double> predict_from_context(const std::vector<double>& context) const;

  /// One trace per step 1..T for ESM, a single trace at T for L2D.
  std::vector<ForwardTrace> forward_sequence(const data::PatientRecord& record, Task task, bool training,
                                             Rng& rng) const;
  /// Same as forward_sequence but requires the timestamped model.
  std::vector<ForwardTrace> forward_with_timestamps(const data::PatientRecord& record, Task task, bool training,
                                                    Rng& rng) const;
  /// Traces at explicit 1-based steps.
  std::vector<ForwardTrace> traces(const data::PatientRecord& record, const std::vector<std::size_t>& steps,
                                   bool training, Rng& rng) const;

  /// Replaces every beta with the all-ones vector (scalar-attention variant).
  /// Has no effect on the scalar-only variant, which never has a beta path.
  void set_unit_beta(bool enabled) { unit_beta_ = enabled || scalar_only_; }
  bool unit_beta() const { return unit_beta_; }

 private:
  struct StepVars {
    std::size_t step = 0;
    std::vector<Var> alpha_states, beta_states, betas;
    Var alphas, context, logits, y_hat;
  };
  struct SequenceVars {
    std::vector<Var> embeddings;
    std::vector<Var> attention_inputs;
    std::vector<StepVars> steps;
  };

  SequenceVars build(GradientTape& tape, const data::PatientRecord& record, const std::vector<std::size_t>& steps,
                     bool training, Rng& rng) const;
  std::vector<Var> attention_inputs(GradientTape& tape, const std::vector<Var>& embedded,
                                    const std::vector<double>& timestamps) const;
  void attend(GradientTape& tape, const std::vector<Var>& inputs, std::size_t step, bool training, Rng& rng,
              StepVars& out) const;

  GruCellIds alpha_cell_;
  GruCellIds beta_cell_;
  ParamId W_emb_, w_alpha_, b_alpha_, W_beta_, b_beta_, W_out_, b_out_;
  bool scalar_only_ = false;
  bool unit_beta_ = false;
};

}  // namespace retain
