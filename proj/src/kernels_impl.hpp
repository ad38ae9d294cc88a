#pragma once

#include <cstddef>

namespace dtrack::kernels {

// Visits the valid taps of the 4x4 window for output (i, j): tap = ky * 4 + kx,
// q = flat pixel index of input (i + ky - 1, j + kx - 1). Out-of-map taps are
// the zero padding and are skipped.
template <class F>
inline void for_each_tap(std::size_t i, std::size_t j, std::size_t H, std::size_t W,
                         F&& f) {
  for (std::size_t ky = 0; ky < 4; ++ky) {
    const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(i + ky) - 1;
    if (y < 0 || y >= static_cast<std::ptrdiff_t>(H)) continue;
    for (std::size_t kx = 0; kx < 4; ++kx) {
      const std::ptrdiff_t x = static_cast<std::ptrdiff_t>(j + kx) - 1;
      if (x < 0 || x >= static_cast<std::ptrdiff_t>(W)) continue;
      f(ky * 4 + kx, static_cast<std::size_t>(y) * W + static_cast<std::size_t>(x));
    }
  }
}

struct KernelTable;
const KernelTable* avx2_table_impl() noexcept;

}  // namespace dtrack::kernels
