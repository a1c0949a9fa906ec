// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "retain/params.hpp"
#include "retain/rng.hpp"

namespace retain {

/// Handle to a value recorded on a GradientTape.
struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
  bool valid() const { return id != static_cast<std::size_t>(-1); }
};

/// Multi-hot (or real-valued) input given as sorted code indices. Empty
/// `values` means every listed code has value 1.
struct SparseInput {
  std::span<const int> codes;
  std::span<const double> values;
  double value(std::size_t i) const { return values.empty() ? 1.0 : values[i]; }
};

/// Reverse-mode differentiation over vector-valued operations. Ops are
/// coarse (a whole GRU step is one node) and each node stores what its
/// backward rule needs. Parameters are read from the bound ParamSet; their
/// gradients are accumulated into a Gradients object on backward().
///
/// A tape is single-owner and records one forward pass; call clear() to reuse.
class GradientTape {
 public:
  explicit GradientTape(const ParamSet& params) : params_(&params) {}

  GradientTape(const GradientTape&) = delete;
  GradientTape& operator=(const GradientTape&) = delete;

  const ParamSet& params() const { return *params_; }
  std::size_t size() const { return nodes_.size(); }
  void clear();

  const std::vector<double>& value(Var v) const { return nodes_[v.id].value; }
  double scalar(Var v) const { return nodes_[v.id].value.at(0); }

  // Leaves.
  Var constant(std::vector<double> value);
  Var param(ParamId id);

  // Linear algebra.
  Var matvec(ParamId W, Var x);
  Var affine(ParamId W, Var x, ParamId b);
  /// sum_k x_k W[:, k] over the listed codes; no gradient flows to the input.
  Var embed(ParamId W, const SparseInput& x);
  /// w^T x + b with b a length-1 parameter; returns a length-1 value.
  Var dot_bias(ParamId w, Var x, ParamId b);

  // Elementwise.
  Var add(Var a, Var b);
  Var mul(Var a, Var b);
  Var sigmoid(Var x);
  Var tanh(Var x);
  Var softmax(Var x);
  /// Concatenates length-1 or longer values end to end.
  Var concat(std::span<const Var> parts);
  /// Inverted dropout with a mask drawn from rng. Returns x unchanged when
  /// !training or rate == 0.
  Var dropout(Var x, double rate, bool training, Rng& rng);

  // Recurrent.
  Var gru(const GruCellIds& cell, Var x, Var h);
  Var gru(const GruCellIds& cell, const SparseInput& x, Var h);

  /// sum_j alphas[j] * betas[j] (.) values[j]. Empty `betas` means all-ones.
  Var attention_context(Var alphas, std::span<const Var> betas, std::span<const Var> values);

  /// Binary cross entropy summed over dimensions (probabilities clamped).
  Var cross_entropy(Var probs, std::span<const double> labels);
  /// sum_i weights[i] * scalars[i]
  Var weighted_sum(std::span<const Var> scalars, std::span<const double> weights);

  /// Propagates d(loss)/d(.) scaled by `seed` and adds parameter gradients
  /// into `grads` (which must share the bound ParamSet's layout).
  void backward(Var loss, Gradients& grads, double seed = 1.0);
  Gradients backward(Var loss);

 private:
  using BackwardFn = std::function<void(GradientTape&, std::size_t self)>;

  struct Node {
    std::vector<double> value;
    std::vector<double> grad;
    BackwardFn backward;
  };

  Var push(std::vector<double> value, BackwardFn backward);
  std::vector<double>& grad(std::size_t id);
  std::span<double> param_grad(ParamId id);
  const Node& node(Var v) const;
  Var gru_impl(const GruCellIds& cell, std::vector<double> wx_update, std::vector<double> wx_reset,
               std::vector<double> wx_cand, Var h, std::function<void(GradientTape&, std::span<const double>,
                                                                      std::span<const double>,
                                                                      std::span<const double>)> input_backward);

  const ParamSet* params_;
  Gradients* grads_ = nullptr;
  std::vector<Node> nodes_;
};

}  // namespace retain
