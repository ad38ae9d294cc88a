#include <atomic>

#include "dtrack/kernels.hpp"
#include "kernels_impl.hpp"

namespace dtrack::kernels {
namespace {

const KernelTable* detect() noexcept {
  if (const KernelTable* t = avx2_table(); t != nullptr && cpu_has_avx2()) return t;
  return &scalar_table();
}

std::atomic<const KernelTable*>& slot() noexcept {
  static std::atomic<const KernelTable*> s{detect()};
  return s;
}

}  // namespace

bool cpu_has_avx2() noexcept {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* avx2_table() noexcept { return avx2_table_impl(); }

const KernelTable& active() noexcept { return *slot().load(std::memory_order_acquire); }

bool force(Isa isa) noexcept {
  if (isa == Isa::Scalar) {
    slot().store(&scalar_table(), std::memory_order_release);
    return true;
  }
  const KernelTable* t = avx2_table();
  if (t == nullptr || !cpu_has_avx2()) return false;
  slot().store(t, std::memory_order_release);
  return true;
}

std::string_view name(Isa isa) noexcept {
  switch (isa) {
    case Isa::Scalar:
      return "scalar";
    case Isa::Avx2:
      return "avx2";
  }
  return "unknown";
}

}  // namespace dtrack::kernels
