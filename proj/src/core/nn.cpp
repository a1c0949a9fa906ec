// SPDX-License-Identifier: Apache-2.0
#include "retain/nn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gru_impl.hpp"
#include "retain/errors.hpp"
#include "retain/kernels.hpp"

namespace retain::nn {
namespace {

void expect_len(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw DimensionError(std::string(what) + ": expected length " + std::to_string(want) + ", got " +
                         std::to_string(got));
  }
}

detail::GruView view_of(const GruCellParams& p) {
  return {&p.W_update, &p.W_reset, &p.W_cand, &p.U_update, &p.U_reset, &p.U_cand,
          &p.b_update, &p.b_reset, &p.b_cand, p.input_size(), p.hidden_size()};
}

}  // namespace

void GruCellParams::validate() const {
  const auto& ws = W_update.shape();
  if (ws.size() != 2) throw DimensionError("GRU W_update must be a matrix");
  for (const Tensor* w : {&W_reset, &W_cand}) {
    if (w->shape() != ws) {
      throw DimensionError("GRU input matrices disagree: " + shape_string(ws) + " vs " + shape_string(w->shape()));
    }
  }
  const std::vector<std::size_t> us{ws[0], ws[0]};
  for (const Tensor* u : {&U_update, &U_reset, &U_cand}) {
    if (u->shape() != us) {
      throw DimensionError("GRU hidden matrix " + shape_string(u->shape()) + " expected " + shape_string(us));
    }
  }
  for (const Tensor* b : {&b_update, &b_reset, &b_cand}) {
    if (b->size() != ws[0]) throw DimensionError("GRU bias length must equal hidden size " + std::to_string(ws[0]));
  }
}

GruCellParams GruCellParams::zeros(std::size_t input, std::size_t hidden) {
  return {Tensor({hidden, input}), Tensor({hidden, input}), Tensor({hidden, input}),
          Tensor({hidden, hidden}), Tensor({hidden, hidden}), Tensor({hidden, hidden}),
          Tensor({hidden}),        Tensor({hidden}),        Tensor({hidden})};
}

GruCellParams GruCellParams::random(std::size_t input, std::size_t hidden, Rng& rng, double scale) {
  auto u = [&](std::vector<std::size_t> shape) { return uniform_tensor(std::move(shape), -scale, scale, rng); };
  return {u({hidden, input}), u({hidden, input}), u({hidden, input}), u({hidden, hidden}), u({hidden, hidden}),
          u({hidden, hidden}), u({hidden}),      u({hidden}),        u({hidden})};
}

GruCellParams GruCellParams::from(const ParamSet& params, const GruCellIds& ids) {
  return {params[ids.W_update], params[ids.W_reset], params[ids.W_cand], params[ids.U_update], params[ids.U_reset],
          params[ids.U_cand],   params[ids.b_update], params[ids.b_reset], params[ids.b_cand]};
}

Vec affine(const Tensor& W, std::span<const double> x, std::span<const double> b) {
  if (W.rank() != 2 || W.cols() != x.size() || W.rows() != b.size()) {
    throw DimensionError("affine: W " + shape_string(W.shape()) + " incompatible with x (" + std::to_string(x.size()) +
                         ") and b (" + std::to_string(b.size()) + ")");
  }
  Vec y(W.rows());
  kernels::gemv(W.span(), W.rows(), W.cols(), x, y);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += b[i];
  return y;
}

Vec softmax(std::span<const double> e) {
  if (e.empty()) throw ArgumentError("softmax of an empty vector");
  const double top = *std::max_element(e.begin(), e.end());
  Vec out(e.size());
  double total = 0.0;
  for (std::size_t i = 0; i < e.size(); ++i) {
    out[i] = std::exp(e[i] - top);
    total += out[i];
  }
  for (auto& v : out) v /= total;
  return out;
}

double sigmoid(double x) { return detail::stable_sigmoid(x); }

Vec sigmoid(std::span<const double> x) {
  Vec out(x.size());
  std::transform(x.begin(), x.end(), out.begin(), [](double v) { return detail::stable_sigmoid(v); });
  return out;
}

Vec tanh(std::span<const double> x) {
  Vec out(x.size());
  std::transform(x.begin(), x.end(), out.begin(), [](double v) { return std::tanh(v); });
  return out;
}

Vec gru_cell(std::span<const double> x, std::span<const double> h_prev, const GruCellParams& p) {
  p.validate();
  expect_len(x.size(), p.input_size(), "gru_cell input");
  expect_len(h_prev.size(), p.hidden_size(), "gru_cell state");
  detail::GruGates gates;
  detail::gru_dense_step(view_of(p), x, h_prev, gates);
  return gates.h;
}

std::vector<Vec> run_rnn_reversed(const std::vector<Vec>& sequence, const GruCellParams& p) {
  if (sequence.empty()) throw ArgumentError("run_rnn_reversed: empty sequence");
  const std::size_t width = sequence.front().size();
  for (const auto& v : sequence) expect_len(v.size(), width, "run_rnn_reversed element");
  std::vector<Vec> states(sequence.size());
  Vec h(p.hidden_size(), 0.0);
  for (std::size_t j = sequence.size(); j-- > 0;) {
    h = gru_cell(sequence[j], h, p);
    states[j] = h;
  }
  return states;
}

double cross_entropy_step(std::span<const double> y_hat, std::span<const double> y) {
  expect_len(y.size(), y_hat.size(), "cross_entropy labels");
  double loss = 0.0;
  for (std::size_t d = 0; d < y.size(); ++d) {
    const double p = std::clamp(y_hat[d], kProbEpsilon, 1.0 - kProbEpsilon);
    if (y[d] != 0.0) loss -= y[d] * std::log(p);
    if (y[d] != 1.0) loss -= (1.0 - y[d]) * std::log(1.0 - p);
  }
  return loss;
}

double cross_entropy(const std::vector<Vec>& y_hat, const std::vector<Vec>& y, std::size_t n_patients,
                     const std::vector<std::size_t>& steps_per_patient) {
  expect_len(y.size(), y_hat.size(), "cross_entropy step count");
  expect_len(steps_per_patient.size(), n_patients, "cross_entropy patient count");
  std::size_t total_steps = 0;
  for (auto t : steps_per_patient) {
    if (t == 0) throw ArgumentError("cross_entropy: patient with zero steps");
    total_steps += t;
  }
  expect_len(y_hat.size(), total_steps, "cross_entropy flattened steps");
  if (n_patients == 0) throw ArgumentError("cross_entropy: no patients");

  double total = 0.0;
  std::size_t offset = 0;
  for (auto t : steps_per_patient) {
    double patient = 0.0;
    for (std::size_t i = 0; i < t; ++i) patient += cross_entropy_step(y_hat[offset + i], y[offset + i]);
    total += patient / static_cast<double>(t);
    offset += t;
  }
  return total / static_cast<double>(n_patients);
}

Vec apply_dropout(std::span<const double> x, double rate, bool training, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ArgumentError("dropout rate must be in [0, 1), got " + std::to_string(rate));
  Vec out(x.begin(), x.end());
  if (!training || rate == 0.0) return out;
  const double keep_scale = 1.0 / (1.0 - rate);
  for (auto& v : out) v = rng.uniform() < rate ? 0.0 : v * keep_scale;
  return out;
}

Gradients finite_diff_gradient(const std::function<double(const ParamSet&)>& f, const ParamSet& params, double h) {
  if (!(h > 0.0)) throw ArgumentError("finite difference step must be positive");
  ParamSet probe = params;
  Gradients grads = params.zeros_like();
  for (auto id : probe.ids()) {
    Tensor& t = probe[id];
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double original = t[i];
      t[i] = original + h;
      const double up = f(probe);
      t[i] = original - h;
      const double down = f(probe);
      t[i] = original;
      if (!std::isfinite(up) || !std::isfinite(down)) {
        throw NumericalError("finite difference: non-finite objective at " + params.name(id) + "[" +
                             std::to_string(i) + "]");
      }
      grads[id][i] = (up - down) / (2.0 * h);
    }
  }
  return grads;
}

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

}  // namespace retain::nn
