#include <cmath>

#include "cursorprof/kernels.hpp"

namespace cursorprof::kernels {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void gemv_scalar(const double* w, std::size_t rows, std::size_t cols,
                 const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) y[r] += dot_scalar(w + r * cols, x, cols);
}

void gemv_t_scalar(const double* w, std::size_t rows, std::size_t cols,
                   const double* v, double* y) {
  for (std::size_t r = 0; r < rows; ++r) axpy_scalar(v[r], w + r * cols, y, cols);
}

void ger_scalar(const double* a, std::size_t rows, const double* b,
                std::size_t cols, double* g) {
  for (std::size_t r = 0; r < rows; ++r) axpy_scalar(a[r], b, g + r * cols, cols);
}

void adam_scalar(double* w, const double* g, double* m, double* v,
                 std::size_t n, double beta1, double beta2, double lr_t,
                 double v_scale, double eps) {
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
    v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
    w[i] -= lr_t * m[i] / (std::sqrt(v[i] * v_scale) + eps);
  }
}

}  // namespace

const KernelSet& scalar_kernels() {
  static const KernelSet set{"scalar",    &dot_scalar, &axpy_scalar,
                             &gemv_scalar, &gemv_t_scalar, &ger_scalar,
                             &adam_scalar};
  return set;
}

}  // namespace cursorprof::kernels
