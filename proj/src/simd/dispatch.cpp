// Backend selection only; no intrinsics here.

#include <atomic>
#include <cstdlib>
#include <string>

#include "bolfi/simd.hpp"

namespace bolfi::simd {

namespace {

bool cpu_has_avx2() {
#if defined(BOLFI_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* table_for(Backend backend) {
  switch (backend) {
    case Backend::Scalar:
      return &scalar_table();
    case Backend::Avx2:
#if defined(BOLFI_HAVE_AVX2)
      if (cpu_has_avx2()) return &avx2_table();
#endif
      return nullptr;
    case Backend::Neon:
#if defined(BOLFI_HAVE_NEON)
      return &neon_table();
#else
      return nullptr;
#endif
  }
  return nullptr;
}

const KernelTable* best_table() {
  if (const char* env = std::getenv("BOLFI_SIMD")) {
    const std::string forced(env);
    if (forced == "scalar") return &scalar_table();
    if (forced == "avx2" && table_for(Backend::Avx2)) return table_for(Backend::Avx2);
    if (forced == "neon" && table_for(Backend::Neon)) return table_for(Backend::Neon);
  }
  if (const KernelTable* t = table_for(Backend::Avx2)) return t;
  if (const KernelTable* t = table_for(Backend::Neon)) return t;
  return &scalar_table();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{best_table()};
  return table;
}

}  // namespace

std::vector<const KernelTable*> available_tables() {
  std::vector<const KernelTable*> out{&scalar_table()};
  for (Backend b : {Backend::Avx2, Backend::Neon}) {
    if (const KernelTable* t = table_for(b)) out.push_back(t);
  }
  return out;
}

const KernelTable& active() { return *current().load(std::memory_order_relaxed); }

bool select(Backend backend) {
  const KernelTable* t = table_for(backend);
  if (!t) return false;
  current().store(t);
  return true;
}

void select_default() { current().store(best_table()); }

std::string_view backend_name() { return active().name; }

}  // namespace bolfi::simd
