// SPDX-License-Identifier: Apache-2.0
#include "retain/params.hpp"

#include <algorithm>
#include <cmath>

#include "retain/errors.hpp"

namespace retain {

ParamId ParamSet::add(std::string name, Tensor value, bool regularized) {
  if (contains(name)) throw ArgumentError("duplicate parameter name '" + name + "'");
  entries_.push_back({std::move(name), std::move(value), regularized});
  return ParamId{entries_.size() - 1};
}

bool ParamSet::contains(std::string_view name) const {
  return std::any_of(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.name == name; });
}

ParamId ParamSet::id(std::string_view name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return ParamId{i};
  }
  throw ArgumentError("unknown parameter '" + std::string(name) + "'");
}

std::vector<ParamId> ParamSet::ids() const {
  std::vector<ParamId> out;
  for (std::size_t i = 0; i < entries_.size(); ++i) out.push_back(ParamId{i});
  return out;
}

std::vector<std::string> ParamSet::names() const {
  std::vector<std::string> out;
  for (const auto& e : entries_) out.push_back(e.name);
  return out;
}

std::vector<std::string> ParamSet::regularized_names() const {
  std::vector<std::string> out;
  for (const auto& e : entries_) {
    if (e.regularized) out.push_back(e.name);
  }
  return out;
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

ParamSet ParamSet::zeros_like() const {
  ParamSet out;
  for (const auto& e : entries_) out.entries_.push_back({e.name, Tensor(e.value.shape()), e.regularized});
  return out;
}

void ParamSet::set_zero() {
  for (auto& e : entries_) e.value.fill(0.0);
}

bool ParamSet::all_finite() const {
  return std::all_of(entries_.begin(), entries_.end(), [](const Entry& e) { return e.value.all_finite(); });
}

bool ParamSet::operator==(const ParamSet& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& a = entries_[i];
    const auto& b = other.entries_[i];
    if (a.name != b.name || a.regularized != b.regularized || !(a.value == b.value)) return false;
  }
  return true;
}

Tensor uniform_tensor(std::vector<std::size_t> shape, double lo, double hi, Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

Tensor glorot_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  return uniform_tensor({rows, cols}, -limit, limit, rng);
}

GruCellIds add_gru_cell(ParamSet& params, const std::string& prefix, std::size_t input,
                        std::size_t hidden, Rng& rng, bool regularize) {
  GruCellIds ids;
  ids.input = input;
  ids.hidden = hidden;
  ids.W_update = params.add(prefix + ".W_update", glorot_uniform(hidden, input, rng), regularize);
  ids.W_reset = params.add(prefix + ".W_reset", glorot_uniform(hidden, input, rng), regularize);
  ids.W_cand = params.add(prefix + ".W_cand", glorot_uniform(hidden, input, rng), regularize);
  ids.U_update = params.add(prefix + ".U_update", uniform_tensor({hidden, hidden}, -0.01, 0.01, rng), regularize);
  ids.U_reset = params.add(prefix + ".U_reset", uniform_tensor({hidden, hidden}, -0.01, 0.01, rng), regularize);
  ids.U_cand = params.add(prefix + ".U_cand", uniform_tensor({hidden, hidden}, -0.01, 0.01, rng), regularize);
  ids.b_update = params.add(prefix + ".b_update", Tensor({hidden}));
  ids.b_reset = params.add(prefix + ".b_reset", Tensor({hidden}));
  ids.b_cand = params.add(prefix + ".b_cand", Tensor({hidden}));
  return ids;
}

GruCellIds find_gru_cell(const ParamSet& params, const std::string& prefix) {
  GruCellIds ids;
  ids.W_update = params.id(prefix + ".W_update");
  ids.W_reset = params.id(prefix + ".W_reset");
  ids.W_cand = params.id(prefix + ".W_cand");
  ids.U_update = params.id(prefix + ".U_update");
  ids.U_reset = params.id(prefix + ".U_reset");
  ids.U_cand = params.id(prefix + ".U_cand");
  ids.b_update = params.id(prefix + ".b_update");
  ids.b_reset = params.id(prefix + ".b_reset");
  ids.b_cand = params.id(prefix + ".b_cand");
  ids.hidden = params[ids.W_update].rows();
  ids.input = params[ids.W_update].cols();
  return ids;
}

}  // namespace retain
