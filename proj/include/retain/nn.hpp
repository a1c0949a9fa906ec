// SPDX-License-Identifier: Apache-2.0
#pragma once

// Pure numerical building blocks. These are value-in / value-out functions;
// the differentiable versions used for training live on GradientTape.

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "retain/params.hpp"
#include "retain/rng.hpp"
#include "retain/tensor.hpp"

namespace retain::nn {

using Vec = std::vector<double>;

/// Probabilities are clamped to [kProbEpsilon, 1 - kProbEpsilon] before logs.
inline constexpr double kProbEpsilon = 1e-8;

struct GruCellParams {
  Tensor W_update, W_reset, W_cand;  // hidden x input
  Tensor U_update, U_reset, U_cand;  // hidden x hidden
  Tensor b_update, b_reset, b_cand;  // hidden

  std::size_t input_size() const { return W_update.cols(); }
  std::size_t hidden_size() const { return W_update.rows(); }
  /// Throws DimensionError if the nine tensors disagree.
  void validate() const;

  static GruCellParams zeros(std::size_t input, std::size_t hidden);
  static GruCellParams random(std::size_t input, std::size_t hidden, Rng& rng, double scale = 0.5);
  static GruCellParams from(const ParamSet& params, const GruCellIds& ids);
};

/// W x + b.
Vec affine(const Tensor& W, std::span<const double> x, std::span<const double> b);

/// Numerically stable softmax (max subtraction). Throws ArgumentError on empty input.
Vec softmax(std::span<const double> e);

double sigmoid(double x);
Vec sigmoid(std::span<const double> x);
Vec tanh(std::span<const double> x);

/// One GRU step: z gates toward the candidate state.
Vec gru_cell(std::span<const double> x, std::span<const double> h_prev, const GruCellParams& p);

/// Runs the cell over v_i, v_{i-1}, ..., v_1 from a zero state. Element j of
/// the result is the state produced when v_j was consumed.
std::vector<Vec> run_rnn_reversed(const std::vector<Vec>& sequence, const GruCellParams& p);

/// Binary cross entropy summed over label dimensions for one prediction.
double cross_entropy_step(std::span<const double> y_hat, std::span<const double> y);

/// Sequence loss averaged per patient over its steps, then over patients.
/// `y_hat` and `y` are flattened step-major; steps_per_patient partitions them.
double cross_entropy(const std::vector<Vec>& y_hat, const std::vector<Vec>& y, std::size_t n_patients,
                     const std::vector<std::size_t>& steps_per_patient);

/// Inverted dropout. Identity when !training or rate == 0.
Vec apply_dropout(std::span<const double> x, double rate, bool training, Rng& rng);

/// Central-difference gradient of a scalar function of the parameters.
Gradients finite_diff_gradient(const std::function<double(const ParamSet&)>& f, const ParamSet& params,
                               double h = 1e-5);

/// |a - b| / max(1, |a|, |b|)
double relative_error(double a, double b);

}  // namespace retain::nn
