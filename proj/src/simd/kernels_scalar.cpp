#include <cmath>

#include "bolfi/simd.hpp"

namespace bolfi::simd {

namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

double sum_scalar(const double* a, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i];
  return s;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scaled_sq_dist_scalar(const double* cols, std::size_t ld, std::size_t dims, std::size_t n,
                           const double* center, const double* inv_scale_sq, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = 0.0;
  for (std::size_t j = 0; j < dims; ++j) {
    const double* col = cols + j * ld;
    const double c = center[j];
    const double w = inv_scale_sq[j];
    for (std::size_t i = 0; i < n; ++i) {
      const double diff = col[i] - c;
      out[i] += diff * diff * w;
    }
  }
}

void exp_affine_scalar(const double* in, double scale, double offset, double* out,
                       std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(scale * in[i] + offset);
}

double exp_affine_dot_scalar(const double* in, const double* w, double scale, double offset,
                             std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += w[i] * std::exp(scale * in[i] + offset);
  return s;
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{Backend::Scalar, "scalar",        dot_scalar,
                                 sum_scalar,      axpy_scalar,     scaled_sq_dist_scalar,
                                 exp_affine_scalar, exp_affine_dot_scalar};
  return table;
}

}  // namespace bolfi::simd
