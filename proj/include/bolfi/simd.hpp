#pragma once

// Data-parallel inner loops shared by the GP posterior, the Ricker summary
// statistics and the Gaussian-mixture proposal densities.
//
// Every kernel has a scalar reference implementation. Vector variants (AVX2+FMA
// on x86-64, NEON on aarch64) are selected once at startup from the CPU
// features; BOLFI_SIMD=scalar in the environment forces the reference path.
// The variants are tested for equivalence against the reference, not for
// bit-identity: reductions are reassociated.

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace bolfi::simd {

enum class Backend { Scalar, Avx2, Neon };

struct KernelTable {
  Backend backend;
  const char* name;

  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*sum)(const double* a, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // out[i] = sum_j (cols[j * ld + i] - center[j])^2 * inv_scale_sq[j], i < n.
  // Points are stored column-major: coordinate j of all points is contiguous.
  void (*scaled_sq_dist)(const double* cols, std::size_t ld, std::size_t dims, std::size_t n,
                         const double* center, const double* inv_scale_sq, double* out);
  // out[i] = exp(scale * in[i] + offset); in-place allowed.
  void (*exp_affine)(const double* in, double scale, double offset, double* out, std::size_t n);
  // sum_i w[i] * exp(scale * in[i] + offset)
  double (*exp_affine_dot)(const double* in, const double* w, double scale, double offset,
                           std::size_t n);
};

const KernelTable& scalar_table();
#if defined(BOLFI_HAVE_AVX2) || defined(BOLFI_SIMD_DECLARE_ALL)
const KernelTable& avx2_table();
#endif
#if defined(BOLFI_HAVE_NEON) || defined(BOLFI_SIMD_DECLARE_ALL)
const KernelTable& neon_table();
#endif

/// Tables usable on this machine, reference first.
std::vector<const KernelTable*> available_tables();

/// Currently selected table.
const KernelTable& active();

/// Force a backend; returns false (and keeps the current one) when the CPU
/// or the build does not provide it.
bool select(Backend backend);

/// Pick the best available backend (honours BOLFI_SIMD).
void select_default();

std::string_view backend_name();

// Convenience wrappers over the active table.
inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}
inline double sum(std::span<const double> a) { return active().sum(a.data(), a.size()); }
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}

}  // namespace bolfi::simd
