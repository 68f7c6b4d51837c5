// AVX2 + FMA variants. This translation unit is compiled with -mavx2 -mfma and
// must only be entered after the dispatcher has confirmed CPU support.

#include <immintrin.h>

#include <cmath>

#include "bolfi/simd.hpp"

namespace bolfi::simd {

namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

// exp(x) for four lanes. Range reduction x = n ln2 + r, |r| <= ln2/2, then a
// degree-13 Taylor polynomial in Horner form; 2^n is assembled in the
// exponent field. Below -708.39 the result flushes to zero (no subnormals),
// above 709.78 it saturates to +inf.
inline __m256d exp_pd(__m256d x) {
  const __m256d hi_limit = _mm256_set1_pd(709.782712893384);
  const __m256d lo_limit = _mm256_set1_pd(-708.3964185322641);
  const __m256d log2e = _mm256_set1_pd(1.4426950408889634);
  const __m256d ln2_hi = _mm256_set1_pd(0.693145751953125);
  const __m256d ln2_lo = _mm256_set1_pd(1.42860682030941723212e-6);

  const __m256d overflow = _mm256_cmp_pd(x, hi_limit, _CMP_GT_OQ);
  const __m256d underflow = _mm256_cmp_pd(x, lo_limit, _CMP_LT_OQ);
  const __m256d xc = _mm256_max_pd(_mm256_min_pd(x, hi_limit), lo_limit);

  __m256d n = _mm256_round_pd(_mm256_mul_pd(xc, log2e), _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  n = _mm256_min_pd(n, _mm256_set1_pd(1023.0));
  __m256d r = _mm256_fnmadd_pd(n, ln2_hi, xc);
  r = _mm256_fnmadd_pd(n, ln2_lo, r);

  // 1/k!, k = 13 .. 0
  __m256d p = _mm256_set1_pd(1.6059043836821613e-10);
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(2.08767569878681e-09));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(2.505210838544172e-08));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(2.755731922398589e-07));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(2.7557319223985893e-06));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(2.48015873015873e-05));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(0.0001984126984126984));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(0.001388888888888889));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(0.008333333333333333));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(0.041666666666666664));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(0.16666666666666666));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(0.5));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0));
  p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(1.0));

  const __m128i n32 = _mm256_cvtpd_epi32(n);
  __m256i bits = _mm256_cvtepi32_epi64(n32);
  bits = _mm256_slli_epi64(_mm256_add_epi64(bits, _mm256_set1_epi64x(1023)), 52);
  __m256d result = _mm256_mul_pd(p, _mm256_castsi256_pd(bits));

  result = _mm256_andnot_pd(underflow, result);
  result = _mm256_blendv_pd(result, _mm256_set1_pd(HUGE_VAL), overflow);
  return result;
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

double sum_avx2(const double* a, std::size_t n) {
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(a + i));
  double s = hsum(acc);
  for (; i < n; ++i) s += a[i];
  return s;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void scaled_sq_dist_avx2(const double* cols, std::size_t ld, std::size_t dims, std::size_t n,
                         const double* center, const double* inv_scale_sq, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d acc = _mm256_setzero_pd();
    for (std::size_t j = 0; j < dims; ++j) {
      const __m256d diff =
          _mm256_sub_pd(_mm256_loadu_pd(cols + j * ld + i), _mm256_set1_pd(center[j]));
      acc = _mm256_fmadd_pd(_mm256_mul_pd(diff, diff), _mm256_set1_pd(inv_scale_sq[j]), acc);
    }
    _mm256_storeu_pd(out + i, acc);
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

void exp_affine_avx2(const double* in, double scale, double offset, double* out, std::size_t n) {
  const __m256d vs = _mm256_set1_pd(scale);
  const __m256d vo = _mm256_set1_pd(offset);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, exp_pd(_mm256_fmadd_pd(vs, _mm256_loadu_pd(in + i), vo)));
  }
  for (; i < n; ++i) out[i] = std::exp(scale * in[i] + offset);
}

double exp_affine_dot_avx2(const double* in, const double* w, double scale, double offset,
                           std::size_t n) {
  const __m256d vs = _mm256_set1_pd(scale);
  const __m256d vo = _mm256_set1_pd(offset);
  __m256d acc = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d e = exp_pd(_mm256_fmadd_pd(vs, _mm256_loadu_pd(in + i), vo));
    acc = _mm256_fmadd_pd(_mm256_loadu_pd(w + i), e, acc);
  }
  double s = hsum(acc);
  for (; i < n; ++i) s += w[i] * std::exp(scale * in[i] + offset);
  return s;
}

}  // namespace

const KernelTable& avx2_table() {
  static const KernelTable table{Backend::Avx2, "avx2",         dot_avx2,
                                 sum_avx2,      axpy_avx2,      scaled_sq_dist_avx2,
                                 exp_affine_avx2, exp_affine_dot_avx2};
  return table;
}

}  // namespace bolfi::simd
