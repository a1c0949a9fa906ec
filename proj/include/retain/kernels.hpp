// SPDX-License-Identifier: Apache-2.0
#pragma once

// Dense double-precision inner loops. Every kernel has a scalar reference
// implementation plus SIMD variants (AVX2+FMA on x86-64, NEON on AArch64);
// the best available variant is picked at runtime. Set RETAIN_KERNELS to
// "scalar", "avx2" or "neon" to force a backend.

#include <cstddef>
#include <span>
#include <string_view>

namespace retain::kernels {

enum class Backend { kScalar, kAvx2, kNeon };

struct AdamCoeffs {
  double learning_rate;
  double beta1;
  double beta2;
  double epsilon;
  double bias_correction1;  // 1 / (1 - beta1^t)
  double bias_correction2;  // 1 / (1 - beta2^t)
};

/// Function table implemented once per backend. Matrices are row-major.
struct KernelTable {
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // y = W x
  void (*gemv)(const double* w, std::size_t rows, std::size_t cols, const double* x, double* y);
  // out += W^T g
  void (*gemv_t_acc)(const double* w, std::size_t rows, std::size_t cols, const double* g,
                     double* out);
  // W += g x^T
  void (*ger_acc)(double* w, std::size_t rows, std::size_t cols, const double* g, const double* x);
  // y = a (.) b
  void (*hadamard)(const double* a, const double* b, double* y, std::size_t n);
  // sum of squares
  double (*sum_squares)(const double* x, std::size_t n);
  void (*adam_step)(double* param, const double* grad, double* m, double* v, std::size_t n,
                    const AdamCoeffs& c);
};

bool backend_available(Backend backend);
std::string_view backend_name(Backend backend);

/// Table for a specific backend; throws ArgumentError if unavailable here.
const KernelTable& table(Backend backend);

Backend active_backend();
/// Switches the process-wide backend. Not thread-safe against concurrent kernel calls.
void set_backend(Backend backend);

// Span front-ends over the active backend.
double dot(std::span<const double> a, std::span<const double> b);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
void gemv(std::span<const double> w, std::size_t rows, std::size_t cols, std::span<const double> x,
          std::span<double> y);
void gemv_t_acc(std::span<const double> w, std::size_t rows, std::size_t cols,
                std::span<const double> g, std::span<double> out);
void ger_acc(std::span<double> w, std::size_t rows, std::size_t cols, std::span<const double> g,
             std::span<const double> x);
void hadamard(std::span<const double> a, std::span<const double> b, std::span<double> y);
double sum_squares(std::span<const double> x);
void adam_step(std::span<double> param, std::span<const double> grad, std::span<double> m,
               std::span<double> v, const AdamCoeffs& coeffs);

namespace detail {
const KernelTable& scalar_table();
const KernelTable* avx2_table();  // nullptr when not compiled in
const KernelTable* neon_table();
}  // namespace detail

}  // namespace retain::kernels
