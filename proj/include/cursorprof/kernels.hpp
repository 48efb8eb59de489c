#pragma once

// Dense double-precision kernels behind the recurrent model and the optimizer.
//
// Every kernel has a scalar reference implementation and, on x86-64, an
// AVX2+FMA variant. The variant is chosen once at startup from CPUID; setting
// CURSORPROF_SIMD=scalar in the environment forces the reference path.
// All matrices are dense row-major.

#include <cstddef>
#include <span>
#include <string_view>

namespace cursorprof::kernels {

struct KernelSet {
  std::string_view name;

  // sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);

  // y[i] += alpha * x[i]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);

  // y += W x, W is rows x cols
  void (*gemv)(const double* w, std::size_t rows, std::size_t cols,
               const double* x, double* y);

  // y += W^T v, W is rows x cols, y has cols entries
  void (*gemv_t)(const double* w, std::size_t rows, std::size_t cols,
                 const double* v, double* y);

  // G += a b^T, G is rows x cols
  void (*ger)(const double* a, std::size_t rows, const double* b,
              std::size_t cols, double* g);

  // One bias-corrected Adam update over n parameters. lr_t already folds in
  // the first-moment correction; v_scale is 1 / (1 - beta2^t).
  void (*adam)(double* w, const double* g, double* m, double* v, std::size_t n,
               double beta1, double beta2, double lr_t, double v_scale,
               double eps);
};

const KernelSet& scalar_kernels();

// nullptr when the binary or the CPU lacks AVX2/FMA.
const KernelSet* avx2_kernels();

// The set selected for this process.
const KernelSet& active();

// Convenience wrappers over active().
inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}

}  // namespace cursorprof::kernels
