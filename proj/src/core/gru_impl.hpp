// SPDX-License-Identifier: Apache-2.0
#pragma once

// Shared GRU arithmetic for the pure cell and the tape's fused op.

#include <cmath>
#include <span>
#include <vector>

#include "retain/kernels.hpp"
#include "retain/tensor.hpp"

namespace retain::detail {

struct GruView {
  const Tensor* W_update;
  const Tensor* W_reset;
  const Tensor* W_cand;
  const Tensor* U_update;
  const Tensor* U_reset;
  const Tensor* U_cand;
  const Tensor* b_update;
  const Tensor* b_reset;
  const Tensor* b_cand;
  std::size_t input;
  std::size_t hidden;
};

struct GruGates {
  std::vector<double> z, r, cand, reset_h, h;
};

inline double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// Completes a step given the input projections W_* x (already computed,
/// dense or sparse) and the previous state.
inline void gru_combine(const GruView& p, std::span<const double> wx_update,
                        std::span<const double> wx_reset, std::span<const double> wx_cand,
                        std::span<const double> h_prev, GruGates& g) {
  const std::size_t n = p.hidden;
  g.z.assign(n, 0.0);
  g.r.assign(n, 0.0);
  g.cand.assign(n, 0.0);
  g.reset_h.assign(n, 0.0);
  g.h.assign(n, 0.0);
  std::vector<double> uh(n);

  kernels::gemv(p.U_update->span(), n, n, h_prev, uh);
  for (std::size_t i = 0; i < n; ++i) g.z[i] = stable_sigmoid(wx_update[i] + uh[i] + (*p.b_update)[i]);
  kernels::gemv(p.U_reset->span(), n, n, h_prev, uh);
  for (std::size_t i = 0; i < n; ++i) g.r[i] = stable_sigmoid(wx_reset[i] + uh[i] + (*p.b_reset)[i]);
  kernels::hadamard(g.r, h_prev, g.reset_h);
  kernels::gemv(p.U_cand->span(), n, n, g.reset_h, uh);
  for (std::size_t i = 0; i < n; ++i) g.cand[i] = std::tanh(wx_cand[i] + uh[i] + (*p.b_cand)[i]);
  for (std::size_t i = 0; i < n; ++i) g.h[i] = (1.0 - g.z[i]) * h_prev[i] + g.z[i] * g.cand[i];
}

inline void gru_dense_step(const GruView& p, std::span<const double> x, std::span<const double> h_prev,
                           GruGates& g) {
  std::vector<double> wz(p.hidden), wr(p.hidden), wc(p.hidden);
  kernels::gemv(p.W_update->span(), p.hidden, p.input, x, wz);
  kernels::gemv(p.W_reset->span(), p.hidden, p.input, x, wr);
  kernels::gemv(p.W_cand->span(), p.hidden, p.input, x, wc);
  gru_combine(p, wz, wr, wc, h_prev, g);
}

}  // namespace retain::detail
