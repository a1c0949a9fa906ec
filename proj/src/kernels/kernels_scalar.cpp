// SPDX-License-Identifier: Apache-2.0
// Reference kernels. These define the semantics the SIMD variants are tested against.
#include <cmath>

#include "retain/kernels.hpp"

namespace retain::kernels::detail {
namespace {

double dot(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
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
  for (std::size_t i = 0; i < n; ++i) y[i] = a[i] * b[i];
}

double sum_squares(const double* x, std::size_t n) { return dot(x, x, n); }

void adam_step(double* param, const double* grad, double* m, double* v, std::size_t n,
               const AdamCoeffs& c) {
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * grad[i];
    v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * grad[i] * grad[i];
    const double m_hat = m[i] * c.bias_correction1;
    const double v_hat = v[i] * c.bias_correction2;
    param[i] -= c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon);
  }
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable kTable{dot,      axpy,        gemv,     gemv_t_acc,
                                  ger_acc, hadamard, sum_squares, adam_step};
  return kTable;
}

}  // namespace retain::kernels::detail
