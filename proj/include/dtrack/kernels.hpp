#pragma once

// Data-parallel inner loops with a portable scalar reference and an AVX2+FMA
// variant. The variant is chosen once at startup from the CPU feature bits;
// tests may force either one.

#include <cstddef>
#include <string_view>

namespace dtrack::kernels {

enum class Isa { Scalar, Avx2 };

struct KernelTable {
  Isa isa;

  double (*dot)(const double* x, const double* y, std::size_t n);
  // y += a * x
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  // y = A x, A row-major rows x cols
  void (*gemv)(const double* A, std::size_t rows, std::size_t cols, const double* x,
               double* y);
  // y += A^T x
  void (*gemv_t_acc)(const double* A, std::size_t rows, std::size_t cols,
                     const double* x, double* y);
  // A += a * x y^T
  void (*ger)(double a, const double* x, std::size_t rows, const double* y,
              std::size_t cols, double* A);

  // Per-pixel projection of a pixel-major P x C map by M (D x C, row-major):
  // out (P x D) = Z M^T.
  void (*project)(const double* Z, std::size_t P, std::size_t C, const double* M,
                  std::size_t D, double* out);
  // A (D x C) += G^T Z for pixel-major G (P x D) and Z (P x C).
  void (*outer_acc)(const double* G, const double* Z, std::size_t P, std::size_t D,
                    std::size_t C, double* A);

  // 4x4 single-output convolution over a pixel-major H x W x D map with zero
  // padding; output (i, j) reads input rows i-1..i+2 and cols j-1..j+2.
  // kernel layout: [ky][kx][d].
  void (*conv4_forward)(const double* in, std::size_t H, std::size_t W, std::size_t D,
                        const double* kernel, double* out);
  // grad_in += adjoint of conv4_forward in its input, applied to grad_out.
  void (*conv4_backward_input)(const double* grad_out, std::size_t H, std::size_t W,
                               std::size_t D, const double* kernel, double* grad_in);
  // grad_kernel += adjoint of conv4_forward in its kernel, applied to grad_out.
  void (*conv4_backward_kernel)(const double* in, std::size_t H, std::size_t W,
                                std::size_t D, const double* grad_out,
                                double* grad_kernel);

  // Batched overlap: IoU and iou - lambda * rho^2 / c^2, SoA inputs.
  void (*diou_batch)(const double* acx, const double* acy, const double* aw,
                     const double* ah, const double* bcx, const double* bcy,
                     const double* bw, const double* bh, std::size_t n, double lambda,
                     double* iou_out, double* score_out);
};

const KernelTable& scalar_table() noexcept;
// Null when the binary was built without AVX2 support.
const KernelTable* avx2_table() noexcept;

bool cpu_has_avx2() noexcept;

/// The table in use. Selected on first call.
const KernelTable& active() noexcept;

/// Override the selection. Returns false if the requested set is unavailable.
/// Not thread-safe against concurrent kernel calls; intended for tests and
/// start-up configuration.
bool force(Isa isa) noexcept;

std::string_view name(Isa isa) noexcept;

}  // namespace dtrack::kernels
