// SPDX-License-Identifier: Apache-2.0
#include "retain/tape.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gru_impl.hpp"
#include "retain/errors.hpp"
#include "retain/kernels.hpp"
#include "retain/nn.hpp"

namespace retain {
namespace {

void expect_len(std::size_t got, std::size_t want, const char* what) {
  if (got != want) {
    throw DimensionError(std::string(what) + ": expected length " + std::to_string(want) + ", got " +
                         std::to_string(got));
  }
}

detail::GruView view_of(const ParamSet& p, const GruCellIds& c) {
  return {&p[c.W_update], &p[c.W_reset], &p[c.W_cand], &p[c.U_update], &p[c.U_reset], &p[c.U_cand],
          &p[c.b_update], &p[c.b_reset], &p[c.b_cand], c.input,         c.hidden};
}

}  // namespace

void GradientTape::clear() { nodes_.clear(); }

const GradientTape::Node& GradientTape::node(Var v) const {
  if (v.id >= nodes_.size()) throw StateError("variable does not belong to this tape");
  return nodes_[v.id];
}

Var GradientTape::push(std::vector<double> value, BackwardFn backward) {
  for (double x : value) {
    if (!std::isfinite(x)) throw NumericalError("non-finite value produced on tape at node " + std::to_string(nodes_.size()));
  }
  nodes_.push_back({std::move(value), {}, std::move(backward)});
  return Var{nodes_.size() - 1};
}

std::vector<double>& GradientTape::grad(std::size_t id) {
  auto& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

std::span<double> GradientTape::param_grad(ParamId id) { return (*grads_)[id].span(); }

Var GradientTape::constant(std::vector<double> value) { return push(std::move(value), nullptr); }

Var GradientTape::param(ParamId id) {
  return push(params()[id].values(), [id](GradientTape& t, std::size_t self) {
    kernels::axpy(1.0, t.nodes_[self].grad, t.param_grad(id));
  });
}

Var GradientTape::matvec(ParamId W, Var x) {
  const Tensor& w = params()[W];
  const auto& xv = node(x).value;
  if (w.rank() != 2 || w.cols() != xv.size()) {
    throw DimensionError("matvec: W " + shape_string(w.shape()) + " with x of length " + std::to_string(xv.size()));
  }
  std::vector<double> y(w.rows());
  kernels::gemv(w.span(), w.rows(), w.cols(), xv, y);
  return push(std::move(y), [W, x](GradientTape& t, std::size_t self) {
    const Tensor& w = t.params()[W];
    const auto& g = t.nodes_[self].grad;
    kernels::ger_acc(t.param_grad(W), w.rows(), w.cols(), g, t.nodes_[x.id].value);
    kernels::gemv_t_acc(w.span(), w.rows(), w.cols(), g, t.grad(x.id));
  });
}

Var GradientTape::affine(ParamId W, Var x, ParamId b) {
  const Tensor& w = params()[W];
  const Tensor& bias = params()[b];
  const auto& xv = node(x).value;
  if (w.rank() != 2 || w.cols() != xv.size() || bias.size() != w.rows()) {
    throw DimensionError("affine: W " + shape_string(w.shape()) + ", x length " + std::to_string(xv.size()) +
                         ", b " + shape_string(bias.shape()));
  }
  std::vector<double> y(w.rows());
  kernels::gemv(w.span(), w.rows(), w.cols(), xv, y);
  kernels::axpy(1.0, bias.span(), y);
  return push(std::move(y), [W, x, b](GradientTape& t, std::size_t self) {
    const Tensor& w = t.params()[W];
    const auto& g = t.nodes_[self].grad;
    kernels::ger_acc(t.param_grad(W), w.rows(), w.cols(), g, t.nodes_[x.id].value);
    kernels::axpy(1.0, g, t.param_grad(b));
    kernels::gemv_t_acc(w.span(), w.rows(), w.cols(), g, t.grad(x.id));
  });
}

Var GradientTape::embed(ParamId W, const SparseInput& x) {
  const Tensor& w = params()[W];
  if (!x.values.empty()) expect_len(x.values.size(), x.codes.size(), "embed values");
  const std::size_t rows = w.rows();
  const std::size_t cols = w.cols();
  std::vector<double> y(rows, 0.0);
  for (std::size_t i = 0; i < x.codes.size(); ++i) {
    const auto k = static_cast<std::size_t>(x.codes[i]);
    if (x.codes[i] < 0 || k >= cols) throw DimensionError("embed: code " + std::to_string(x.codes[i]) + " outside vocabulary of " + std::to_string(cols));
    const double xv = x.value(i);
    for (std::size_t r = 0; r < rows; ++r) y[r] += xv * w.data()[r * cols + k];
  }
  std::vector<int> codes(x.codes.begin(), x.codes.end());
  std::vector<double> values(x.values.begin(), x.values.end());
  return push(std::move(y), [W, codes = std::move(codes), values = std::move(values)](GradientTape& t, std::size_t self) {
    const auto& g = t.nodes_[self].grad;
    auto dw = t.param_grad(W);
    const std::size_t cols = t.params()[W].cols();
    for (std::size_t i = 0; i < codes.size(); ++i) {
      const double xv = values.empty() ? 1.0 : values[i];
      const auto k = static_cast<std::size_t>(codes[i]);
      for (std::size_t r = 0; r < g.size(); ++r) dw[r * cols + k] += xv * g[r];
    }
  });
}

Var GradientTape::dot_bias(ParamId w, Var x, ParamId b) {
  const Tensor& wv = params()[w];
  const auto& xv = node(x).value;
  expect_len(xv.size(), wv.size(), "dot_bias");
  expect_len(params()[b].size(), 1, "dot_bias bias");
  const double y = kernels::dot(wv.span(), xv) + params()[b][0];
  return push({y}, [w, x, b](GradientTape& t, std::size_t self) {
    const double g = t.nodes_[self].grad[0];
    kernels::axpy(g, t.nodes_[x.id].value, t.param_grad(w));
    kernels::axpy(g, t.params()[w].span(), t.grad(x.id));
    t.param_grad(b)[0] += g;
  });
}

Var GradientTape::add(Var a, Var b) {
  const auto& av = node(a).value;
  const auto& bv = node(b).value;
  expect_len(bv.size(), av.size(), "add");
  std::vector<double> y(av);
  kernels::axpy(1.0, bv, y);
  return push(std::move(y), [a, b](GradientTape& t, std::size_t self) {
    const auto g = t.nodes_[self].grad;
    kernels::axpy(1.0, g, t.grad(a.id));
    kernels::axpy(1.0, g, t.grad(b.id));
  });
}

Var GradientTape::mul(Var a, Var b) {
  const auto& av = node(a).value;
  const auto& bv = node(b).value;
  expect_len(bv.size(), av.size(), "mul");
  std::vector<double> y(av.size());
  kernels::hadamard(av, bv, y);
  return push(std::move(y), [a, b](GradientTape& t, std::size_t self) {
    const auto& g = t.nodes_[self].grad;
    std::vector<double> tmp(g.size());
    kernels::hadamard(g, t.nodes_[b.id].value, tmp);
    kernels::axpy(1.0, tmp, t.grad(a.id));
    kernels::hadamard(g, t.nodes_[a.id].value, tmp);
    kernels::axpy(1.0, tmp, t.grad(b.id));
  });
}

Var GradientTape::sigmoid(Var x) {
  return push(nn::sigmoid(node(x).value), [x](GradientTape& t, std::size_t self) {
    const auto& n = t.nodes_[self];
    auto& dx = t.grad(x.id);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += n.grad[i] * n.value[i] * (1.0 - n.value[i]);
  });
}

Var GradientTape::tanh(Var x) {
  return push(nn::tanh(node(x).value), [x](GradientTape& t, std::size_t self) {
    const auto& n = t.nodes_[self];
    auto& dx = t.grad(x.id);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += n.grad[i] * (1.0 - n.value[i] * n.value[i]);
  });
}

Var GradientTape::softmax(Var x) {
  return push(nn::softmax(node(x).value), [x](GradientTape& t, std::size_t self) {
    const auto& n = t.nodes_[self];
    const double inner = kernels::dot(n.grad, n.value);
    auto& dx = t.grad(x.id);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += n.value[i] * (n.grad[i] - inner);
  });
}

Var GradientTape::concat(std::span<const Var> parts) {
  if (parts.empty()) throw ArgumentError("concat of nothing");
  std::vector<double> y;
  std::vector<Var> ids(parts.begin(), parts.end());
  for (auto p : ids) {
    const auto& v = node(p).value;
    y.insert(y.end(), v.begin(), v.end());
  }
  return push(std::move(y), [ids = std::move(ids)](GradientTape& t, std::size_t self) {
    std::size_t offset = 0;
    for (auto p : ids) {
      auto& dp = t.grad(p.id);
      for (std::size_t i = 0; i < dp.size(); ++i) dp[i] += t.nodes_[self].grad[offset + i];
      offset += dp.size();
    }
  });
}

Var GradientTape::dropout(Var x, double rate, bool training, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ArgumentError("dropout rate must be in [0, 1), got " + std::to_string(rate));
  if (!training || rate == 0.0) return x;
  const auto& xv = node(x).value;
  std::vector<double> mask(xv.size());
  const double keep_scale = 1.0 / (1.0 - rate);
  for (auto& m : mask) m = rng.uniform() < rate ? 0.0 : keep_scale;
  std::vector<double> y(xv.size());
  kernels::hadamard(xv, mask, y);
  return push(std::move(y), [x, mask = std::move(mask)](GradientTape& t, std::size_t self) {
    const auto& g = t.nodes_[self].grad;
    auto& dx = t.grad(x.id);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g[i] * mask[i];
  });
}

Var GradientTape::gru_impl(const GruCellIds& cell, std::vector<double> wx_update, std::vector<double> wx_reset,
                           std::vector<double> wx_cand, Var h,
                           std::function<void(GradientTape&, std::span<const double>, std::span<const double>,
                                              std::span<const double>)> input_backward) {
  expect_len(node(h).value.size(), cell.hidden, "gru state");
  detail::GruGates gates;
  detail::gru_combine(view_of(params(), cell), wx_update, wx_reset, wx_cand, node(h).value, gates);
  std::vector<double> out = std::move(gates.h);
  return push(std::move(out), [cell, h, gates = std::move(gates), input_backward = std::move(input_backward)](
                                  GradientTape& t, std::size_t self) {
    const std::size_t n = cell.hidden;
    const auto& gh = t.nodes_[self].grad;
    const auto& hprev = t.nodes_[h.id].value;
    const ParamSet& p = t.params();
    std::vector<double> da_update(n), da_reset(n), da_cand(n), d_reset_h(n, 0.0), dh(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double dz = gh[i] * (gates.cand[i] - hprev[i]);
      const double dcand = gh[i] * gates.z[i];
      dh[i] = gh[i] * (1.0 - gates.z[i]);
      da_cand[i] = dcand * (1.0 - gates.cand[i] * gates.cand[i]);
      da_update[i] = dz * gates.z[i] * (1.0 - gates.z[i]);
    }
    kernels::ger_acc(t.param_grad(cell.U_cand), n, n, da_cand, gates.reset_h);
    kernels::axpy(1.0, da_cand, t.param_grad(cell.b_cand));
    kernels::gemv_t_acc(p[cell.U_cand].span(), n, n, da_cand, d_reset_h);
    for (std::size_t i = 0; i < n; ++i) {
      const double dr = d_reset_h[i] * hprev[i];
      dh[i] += d_reset_h[i] * gates.r[i];
      da_reset[i] = dr * gates.r[i] * (1.0 - gates.r[i]);
    }
    kernels::ger_acc(t.param_grad(cell.U_reset), n, n, da_reset, hprev);
    kernels::axpy(1.0, da_reset, t.param_grad(cell.b_reset));
    kernels::gemv_t_acc(p[cell.U_reset].span(), n, n, da_reset, dh);
    kernels::ger_acc(t.param_grad(cell.U_update), n, n, da_update, hprev);
    kernels::axpy(1.0, da_update, t.param_grad(cell.b_update));
    kernels::gemv_t_acc(p[cell.U_update].span(), n, n, da_update, dh);
    kernels::axpy(1.0, dh, t.grad(h.id));
    input_backward(t, da_update, da_reset, da_cand);
  });
}

Var GradientTape::gru(const GruCellIds& cell, Var x, Var h) {
  const auto& xv = node(x).value;
  expect_len(xv.size(), cell.input, "gru input");
  const ParamSet& p = params();
  std::vector<double> wz(cell.hidden), wr(cell.hidden), wc(cell.hidden);
  kernels::gemv(p[cell.W_update].span(), cell.hidden, cell.input, xv, wz);
  kernels::gemv(p[cell.W_reset].span(), cell.hidden, cell.input, xv, wr);
  kernels::gemv(p[cell.W_cand].span(), cell.hidden, cell.input, xv, wc);
  return gru_impl(cell, std::move(wz), std::move(wr), std::move(wc), h,
                  [cell, x](GradientTape& t, std::span<const double> dz, std::span<const double> dr,
                            std::span<const double> dc) {
                    const auto& xv = t.nodes_[x.id].value;
                    const ParamSet& p = t.params();
                    auto& dx = t.grad(x.id);
                    const std::size_t n = cell.hidden;
                    const std::size_t m = cell.input;
                    kernels::ger_acc(t.param_grad(cell.W_update), n, m, dz, xv);
                    kernels::ger_acc(t.param_grad(cell.W_reset), n, m, dr, xv);
                    kernels::ger_acc(t.param_grad(cell.W_cand), n, m, dc, xv);
                    kernels::gemv_t_acc(p[cell.W_update].span(), n, m, dz, dx);
                    kernels::gemv_t_acc(p[cell.W_reset].span(), n, m, dr, dx);
                    kernels::gemv_t_acc(p[cell.W_cand].span(), n, m, dc, dx);
                  });
}

Var GradientTape::gru(const GruCellIds& cell, const SparseInput& x, Var h) {
  if (!x.values.empty()) expect_len(x.values.size(), x.codes.size(), "gru sparse values");
  const ParamSet& p = params();
  const std::size_t n = cell.hidden;
  const std::size_t m = cell.input;
  std::vector<double> wz(n, 0.0), wr(n, 0.0), wc(n, 0.0);
  for (std::size_t i = 0; i < x.codes.size(); ++i) {
    const auto k = static_cast<std::size_t>(x.codes[i]);
    if (x.codes[i] < 0 || k >= m) throw DimensionError("gru: code " + std::to_string(x.codes[i]) + " outside input of " + std::to_string(m));
    const double xv = x.value(i);
    for (std::size_t r = 0; r < n; ++r) {
      wz[r] += xv * p[cell.W_update].data()[r * m + k];
      wr[r] += xv * p[cell.W_reset].data()[r * m + k];
      wc[r] += xv * p[cell.W_cand].data()[r * m + k];
    }
  }
  std::vector<int> codes(x.codes.begin(), x.codes.end());
  std::vector<double> values(x.values.begin(), x.values.end());
  return gru_impl(cell, std::move(wz), std::move(wr), std::move(wc), h,
                  [cell, codes = std::move(codes), values = std::move(values)](
                      GradientTape& t, std::span<const double> dz, std::span<const double> dr,
                      std::span<const double> dc) {
                    const std::size_t m = cell.input;
                    auto gz = t.param_grad(cell.W_update);
                    auto gr = t.param_grad(cell.W_reset);
                    auto gc = t.param_grad(cell.W_cand);
                    for (std::size_t i = 0; i < codes.size(); ++i) {
                      const auto k = static_cast<std::size_t>(codes[i]);
                      const double xv = values.empty() ? 1.0 : values[i];
                      for (std::size_t r = 0; r < cell.hidden; ++r) {
                        gz[r * m + k] += xv * dz[r];
                        gr[r * m + k] += xv * dr[r];
                        gc[r * m + k] += xv * dc[r];
                      }
                    }
                  });
}

Var GradientTape::attention_context(Var alphas, std::span<const Var> betas, std::span<const Var> values) {
  const auto& a = node(alphas).value;
  expect_len(values.size(), a.size(), "attention_context values");
  if (!betas.empty()) expect_len(betas.size(), a.size(), "attention_context betas");
  if (values.empty()) throw ArgumentError("attention_context over an empty sequence");
  const std::size_t width = node(values[0]).value.size();
  std::vector<double> c(width, 0.0);
  std::vector<double> tmp(width);
  for (std::size_t j = 0; j < a.size(); ++j) {
    const auto& v = node(values[j]).value;
    expect_len(v.size(), width, "attention_context value");
    if (betas.empty()) {
      kernels::axpy(a[j], v, c);
    } else {
      const auto& b = node(betas[j]).value;
      expect_len(b.size(), width, "attention_context beta");
      kernels::hadamard(b, v, tmp);
      kernels::axpy(a[j], tmp, c);
    }
  }
  std::vector<Var> bs(betas.begin(), betas.end());
  std::vector<Var> vs(values.begin(), values.end());
  return push(std::move(c), [alphas, bs = std::move(bs), vs = std::move(vs)](GradientTape& t, std::size_t self) {
    const auto& g = t.nodes_[self].grad;
    const auto a = t.nodes_[alphas.id].value;
    auto& da = t.grad(alphas.id);
    std::vector<double> tmp(g.size());
    for (std::size_t j = 0; j < vs.size(); ++j) {
      const auto& v = t.nodes_[vs[j].id].value;
      if (bs.empty()) {
        da[j] += kernels::dot(g, v);
        kernels::axpy(a[j], g, t.grad(vs[j].id));
      } else {
        const auto& b = t.nodes_[bs[j].id].value;
        kernels::hadamard(g, v, tmp);
        da[j] += kernels::dot(tmp, b);
        kernels::axpy(a[j], tmp, t.grad(bs[j].id));
        kernels::hadamard(g, b, tmp);
        kernels::axpy(a[j], tmp, t.grad(vs[j].id));
      }
    }
  });
}

Var GradientTape::cross_entropy(Var probs, std::span<const double> labels) {
  const auto& p = node(probs).value;
  expect_len(labels.size(), p.size(), "cross_entropy labels");
  std::vector<double> y(labels.begin(), labels.end());
  const double loss = nn::cross_entropy_step(p, y);
  return push({loss}, [probs, y = std::move(y)](GradientTape& t, std::size_t self) {
    const double g = t.nodes_[self].grad[0];
    const auto& p = t.nodes_[probs.id].value;
    auto& dp = t.grad(probs.id);
    for (std::size_t d = 0; d < p.size(); ++d) {
      if (p[d] < nn::kProbEpsilon || p[d] > 1.0 - nn::kProbEpsilon) continue;  // clamped: flat
      dp[d] += g * (-y[d] / p[d] + (1.0 - y[d]) / (1.0 - p[d]));
    }
  });
}

Var GradientTape::weighted_sum(std::span<const Var> scalars, std::span<const double> weights) {
  expect_len(weights.size(), scalars.size(), "weighted_sum");
  double total = 0.0;
  for (std::size_t i = 0; i < scalars.size(); ++i) total += weights[i] * node(scalars[i]).value.at(0);
  std::vector<Var> ids(scalars.begin(), scalars.end());
  std::vector<double> w(weights.begin(), weights.end());
  return push({total}, [ids = std::move(ids), w = std::move(w)](GradientTape& t, std::size_t self) {
    const double g = t.nodes_[self].grad[0];
    for (std::size_t i = 0; i < ids.size(); ++i) t.grad(ids[i].id)[0] += w[i] * g;
  });
}

void GradientTape::backward(Var loss, Gradients& grads, double seed) {
  if (nodes_.empty() || !loss.valid() || loss.id >= nodes_.size()) {
    throw StateError("backward called without a recorded forward pass");
  }
  if (nodes_[loss.id].value.size() != 1) throw DimensionError("backward: loss must be a scalar");
  if (grads.size() != params_->size()) throw DimensionError("backward: gradient set does not match parameters");
  grads_ = &grads;
  for (auto& n : nodes_) n.grad.clear();
  nodes_[loss.id].grad = {seed};
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    if (!nodes_[i].grad.empty() && nodes_[i].backward) nodes_[i].backward(*this, i);
  }
  grads_ = nullptr;
}

Gradients GradientTape::backward(Var loss) {
  Gradients grads = params_->zeros_like();
  backward(loss, grads);
  return grads;
}

}  // namespace retain
