// SPDX-License-Identifier: Apache-2.0
#include <atomic>
#include <cstdlib>
#include <string>

#include "retain/errors.hpp"
#include "retain/kernels.hpp"

namespace retain::kernels {
namespace {

bool cpu_has_avx2_fma() {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend best_backend() {
  if (backend_available(Backend::kAvx2)) return Backend::kAvx2;
  if (backend_available(Backend::kNeon)) return Backend::kNeon;
  return Backend::kScalar;
}

Backend initial_backend() {
  const char* env = std::getenv("RETAIN_KERNELS");
  if (env == nullptr || *env == '\0') return best_backend();
  const std::string requested(env);
  for (auto b : {Backend::kScalar, Backend::kAvx2, Backend::kNeon}) {
    if (requested == backend_name(b) && backend_available(b)) return b;
  }
  return best_backend();
}

std::atomic<const KernelTable*>& active_slot() {
  static std::atomic<const KernelTable*> slot{&table(initial_backend())};
  return slot;
}

std::atomic<Backend>& active_kind() {
  static std::atomic<Backend> kind{initial_backend()};
  return kind;
}

inline const KernelTable& active() { return *active_slot().load(std::memory_order_relaxed); }

void require_same(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw DimensionError(std::string(what) + ": length " + std::to_string(a) + " vs " +
                         std::to_string(b));
  }
}

}  // namespace

bool backend_available(Backend backend) {
  switch (backend) {
    case Backend::kScalar:
      return true;
    case Backend::kAvx2:
      return detail::avx2_table() != nullptr && cpu_has_avx2_fma();
    case Backend::kNeon:
      return detail::neon_table() != nullptr;
  }
  return false;
}

std::string_view backend_name(Backend backend) {
  switch (backend) {
    case Backend::kScalar:
      return "scalar";
    case Backend::kAvx2:
      return "avx2";
    case Backend::kNeon:
      return "neon";
  }
  return "unknown";
}

const KernelTable& table(Backend backend) {
  if (!backend_available(backend)) {
    throw ArgumentError("kernel backend '" + std::string(backend_name(backend)) +
                        "' is not available on this machine");
  }
  switch (backend) {
    case Backend::kAvx2:
      return *detail::avx2_table();
    case Backend::kNeon:
      return *detail::neon_table();
    case Backend::kScalar:
      break;
  }
  return detail::scalar_table();
}

Backend active_backend() { return active_kind().load(); }

void set_backend(Backend backend) {
  const KernelTable& t = table(backend);
  active_slot().store(&t);
  active_kind().store(backend);
}

double dot(std::span<const double> a, std::span<const double> b) {
  require_same(a.size(), b.size(), "dot");
  return active().dot(a.data(), b.data(), a.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  require_same(x.size(), y.size(), "axpy");
  active().axpy(alpha, x.data(), y.data(), x.size());
}

void gemv(std::span<const double> w, std::size_t rows, std::size_t cols, std::span<const double> x,
          std::span<double> y) {
  require_same(w.size(), rows * cols, "gemv matrix");
  require_same(x.size(), cols, "gemv input");
  require_same(y.size(), rows, "gemv output");
  active().gemv(w.data(), rows, cols, x.data(), y.data());
}

void gemv_t_acc(std::span<const double> w, std::size_t rows, std::size_t cols,
                std::span<const double> g, std::span<double> out) {
  require_same(w.size(), rows * cols, "gemv_t matrix");
  require_same(g.size(), rows, "gemv_t input");
  require_same(out.size(), cols, "gemv_t output");
  active().gemv_t_acc(w.data(), rows, cols, g.data(), out.data());
}

void ger_acc(std::span<double> w, std::size_t rows, std::size_t cols, std::span<const double> g,
             std::span<const double> x) {
  require_same(w.size(), rows * cols, "ger matrix");
  require_same(g.size(), rows, "ger rows");
  require_same(x.size(), cols, "ger cols");
  active().ger_acc(w.data(), rows, cols, g.data(), x.data());
}

void hadamard(std::span<const double> a, std::span<const double> b, std::span<double> y) {
  require_same(a.size(), b.size(), "hadamard");
  require_same(a.size(), y.size(), "hadamard output");
  active().hadamard(a.data(), b.data(), y.data(), a.size());
}

double sum_squares(std::span<const double> x) { return active().sum_squares(x.data(), x.size()); }

void adam_step(std::span<double> param, std::span<const double> grad, std::span<double> m,
               std::span<double> v, const AdamCoeffs& coeffs) {
  require_same(param.size(), grad.size(), "adam grad");
  require_same(param.size(), m.size(), "adam first moment");
  require_same(param.size(), v.size(), "adam second moment");
  active().adam_step(param.data(), grad.data(), m.data(), v.data(), param.size(), coeffs);
}

}  // namespace retain::kernels
