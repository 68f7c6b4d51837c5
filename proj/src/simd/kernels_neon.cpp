// NEON (aarch64, float64x2) variants. Same reductions and exp approximation as
// the AVX2 file, two lanes wide.

#include <arm_neon.h>

#include <cmath>

#include "bolfi/simd.hpp"

namespace bolfi::simd {

namespace {

inline float64x2_t exp_f64x2(float64x2_t x) {
  const float64x2_t hi_limit = vdupq_n_f64(709.782712893384);
  const float64x2_t lo_limit = vdupq_n_f64(-708.3964185322641);
  const uint64x2_t overflow = vcgtq_f64(x, hi_limit);
  const uint64x2_t underflow = vcltq_f64(x, lo_limit);
  const float64x2_t xc = vmaxq_f64(vminq_f64(x, hi_limit), lo_limit);

  float64x2_t n = vrndnq_f64(vmulq_f64(xc, vdupq_n_f64(1.4426950408889634)));
  n = vminq_f64(n, vdupq_n_f64(1023.0));
  float64x2_t r = vfmsq_f64(xc, n, vdupq_n_f64(0.693145751953125));
  r = vfmsq_f64(r, n, vdupq_n_f64(1.42860682030941723212e-6));

  static const double coeffs[] = {2.08767569878681e-09,  2.505210838544172e-08,
                                  2.755731922398589e-07, 2.7557319223985893e-06,
                                  2.48015873015873e-05,  0.0001984126984126984,
                                  0.001388888888888889,  0.008333333333333333,
                                  0.041666666666666664,  0.16666666666666666,
                                  0.5,                   1.0,
                                  1.0};
  float64x2_t p = vdupq_n_f64(1.6059043836821613e-10);
  for (double c : coeffs) p = vfmaq_f64(vdupq_n_f64(c), p, r);

  int64x2_t bits = vcvtq_s64_f64(n);
  bits = vshlq_n_s64(vaddq_s64(bits, vdupq_n_s64(1023)), 52);
  float64x2_t result = vmulq_f64(p, vreinterpretq_f64_s64(bits));
  result = vbslq_f64(underflow, vdupq_n_f64(0.0), result);
  result = vbslq_f64(overflow, vdupq_n_f64(HUGE_VAL), result);
  return result;
}

double dot_neon(const double* a, const double* b, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
  }
  double s = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

double sum_neon(const double* a, std::size_t n) {
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) acc = vaddq_f64(acc, vld1q_f64(a + i));
  double s = vaddvq_f64(acc);
  for (; i < n; ++i) s += a[i];
  return s;
}

void axpy_neon(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void scaled_sq_dist_neon(const double* cols, std::size_t ld, std::size_t dims, std::size_t n,
                         const double* center, const double* inv_scale_sq, double* out) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    float64x2_t acc = vdupq_n_f64(0.0);
    for (std::size_t j = 0; j < dims; ++j) {
      const float64x2_t diff = vsubq_f64(vld1q_f64(cols + j * ld + i), vdupq_n_f64(center[j]));
      acc = vfmaq_f64(acc, vmulq_f64(diff, diff), vdupq_n_f64(inv_scale_sq[j]));
    }
    vst1q_f64(out + i, acc);
  }
  for (; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < dims; ++j) {
      const double diff = cols[j * ld + i] - center[j];
      acc += diff * diff * inv_scale_sq[j];
    }
    out[i] = acc;
  }
}

void exp_affine_neon(const double* in, double scale, double offset, double* out, std::size_t n) {
  const float64x2_t vs = vdupq_n_f64(scale);
  const float64x2_t vo = vdupq_n_f64(offset);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, exp_f64x2(vfmaq_f64(vo, vs, vld1q_f64(in + i))));
  for (; i < n; ++i) out[i] = std::exp(scale * in[i] + offset);
}

double exp_affine_dot_neon(const double* in, const double* w, double scale, double offset,
                           std::size_t n) {
  const float64x2_t vs = vdupq_n_f64(scale);
  const float64x2_t vo = vdupq_n_f64(offset);
  float64x2_t acc = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    acc = vfmaq_f64(acc, vld1q_f64(w + i), exp_f64x2(vfmaq_f64(vo, vs, vld1q_f64(in + i))));
  }
  double s = vaddvq_f64(acc);
  for (; i < n; ++i) s += w[i] * std::exp(scale * in[i] + offset);
  return s;
}

}  // namespace

const KernelTable& neon_table() {
  static const KernelTable table{Backend::Neon, "neon",         dot_neon,
                                 sum_neon,      axpy_neon,      scaled_sq_dist_neon,
                                 exp_affine_neon, exp_affine_dot_neon};
  return table;
}

}  // namespace bolfi::simd
