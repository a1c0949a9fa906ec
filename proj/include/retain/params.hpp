// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "retain/rng.hpp"
#include "retain/tensor.hpp"

namespace retain {

/// Index of a tensor inside a ParamSet.
struct ParamId {
  std::size_t index = static_cast<std::size_t>(-1);
  bool operator==(const ParamId&) const = default;
};

/// Ordered, named collection of learnable tensors. Insertion order is the
/// canonical order for serialization, optimizer state and gradient checks.
class ParamSet {
 public:
  ParamId add(std::string name, Tensor value, bool regularized = false);

  std::size_t size() const { return entries_.size(); }
  bool contains(std::string_view name) const;
  ParamId id(std::string_view name) const;

  const std::string& name(ParamId id) const { return entries_[id.index].name; }
  bool regularized(ParamId id) const { return entries_[id.index].regularized; }
  Tensor& operator[](ParamId id) { return entries_[id.index].value; }
  const Tensor& operator[](ParamId id) const { return entries_[id.index].value; }
  Tensor& at(std::string_view name) { return (*this)[id(name)]; }
  const Tensor& at(std::string_view name) const { return (*this)[id(name)]; }

  std::vector<ParamId> ids() const;
  std::vector<std::string> names() const;
  /// Names of tensors that receive the L2 penalty.
  std::vector<std::string> regularized_names() const;
  std::size_t scalar_count() const;

  /// Same names and shapes, all zeros.
  ParamSet zeros_like() const;
  void set_zero();
  bool all_finite() const;

  bool operator==(const ParamSet& other) const;

 private:
  struct Entry {
    std::string name;
    Tensor value;
    bool regularized = false;
  };
  std::vector<Entry> entries_;
};

/// Gradients share the layout of the parameters they belong to.
using Gradients = ParamSet;

/// Handles to the nine tensors of one GRU cell inside a ParamSet.
struct GruCellIds {
  ParamId W_update, W_reset, W_cand;
  ParamId U_update, U_reset, U_cand;
  ParamId b_update, b_reset, b_cand;
  std::size_t input = 0;
  std::size_t hidden = 0;
};

/// Registers a GRU cell as `<prefix>.W_update` etc. Input matrices use the
/// scaled uniform (Glorot) init, hidden-to-hidden matrices uniform(-0.01, 0.01),
/// biases zero. `regularize` marks the six matrices for the L2 penalty.
GruCellIds add_gru_cell(ParamSet& params, const std::string& prefix, std::size_t input,
                        std::size_t hidden, Rng& rng, bool regularize = false);

/// Looks up an existing cell registered by add_gru_cell.
GruCellIds find_gru_cell(const ParamSet& params, const std::string& prefix);

Tensor glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng);
Tensor uniform_tensor(std::vector<std::size_t> shape, double lo, double hi, Rng& rng);

}  // namespace retain
