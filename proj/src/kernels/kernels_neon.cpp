// SPDX-License-Identifier: Apache-2.0
// NEON kernels (AArch64 only; float64x2 lanes).
#include "retain/kernels.hpp"

#if defined(__aarch64__) && defined(__ARM_NEON)

#include <arm_neon.h>

#include <cmath>

namespace retain::kernels::detail {
namespace {

double dot(const double* a, const double* b, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
  }
  double acc = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t a = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), a, vld1q_f64(x + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void gemv(const double* w, std::size_t rows, std::size_t cols, const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) y[r] = dot(w + r * cols, x, cols);
}

void gemv_t_acc(const double* w, std::size_t rows, std::size_t cols, const double* g, double* out) {
  for (std::size_t r = 0; r < rows; ++r) {
    if (g[r] != 0.0) axpy(g[r], w + r * cols, out, cols);
  }
}

void ger_acc(double* w, std::size_t rows, std::size_t cols, const double* g, const double* x) {
  for (std::size_t r = 0; r < rows; ++r) {
    if (g[r] != 0.0) axpy(g[r], x, w + r * cols, cols);
  }
}

void hadamard(const double* a, const double* b, double* y, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
  for (; i < n; ++i) y[i] = a[i] * b[i];
}

double sum_squares(const double* x, std::size_t n) { return dot(x, x, n); }

void adam_step(double* param, const double* grad, double* m, double* v, std::size_t n,
               const AdamCoeffs& c) {
  const float64x2_t b1 = vdupq_n_f64(c.beta1);
  const float64x2_t b2 = vdupq_n_f64(c.beta2);
  const float64x2_t one_b1 = vdupq_n_f64(1.0 - c.beta1);
  const float64x2_t one_b2 = vdupq_n_f64(1.0 - c.beta2);
  const float64x2_t bc1 = vdupq_n_f64(c.bias_correction1);
  const float64x2_t bc2 = vdupq_n_f64(c.bias_correction2);
  const float64x2_t lr = vdupq_n_f64(c.learning_rate);
  const float64x2_t eps = vdupq_n_f64(c.epsilon);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t g = vld1q_f64(grad + i);
    const float64x2_t mi = vfmaq_f64(vmulq_f64(one_b1, g), b1, vld1q_f64(m + i));
    const float64x2_t vi = vfmaq_f64(vmulq_f64(vmulq_f64(one_b2, g), g), b2, vld1q_f64(v + i));
    vst1q_f64(m + i, mi);
    vst1q_f64(v + i, vi);
    const float64x2_t denom = vaddq_f64(vsqrtq_f64(vmulq_f64(vi, bc2)), eps);
    const float64x2_t step = vdivq_f64(vmulq_f64(lr, vmulq_f64(mi, bc1)), denom);
    vst1q_f64(param + i, vsubq_f64(vld1q_f64(param + i), step));
  }
  for (; i < n; ++i) {
    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * grad[i];
    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * grad[i] * grad[i];
    param[i] -= c.learning_rate * (m[i] * c.bias_correction1) /
                (std::sqrt(v[i] * c.bias_correction2) + c.epsilon);
  }
}

}  // namespace

const KernelTable* neon_table() {
  static const KernelTable kTable{dot,      axpy,        gemv,     gemv_t_acc,
                                  ger_acc, hadamard, sum_squares, adam_step};
  return &kTable;
}

}  // namespace retain::kernels::detail

#else

namespace retain::kernels::detail {
const KernelTable* neon_table() { return nullptr; }
}  // namespace retain::kernels::detail

#endif
