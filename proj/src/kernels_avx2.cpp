// Compiled with -mavx2 -mfma; only entered after a runtime CPU check.

#include "dtrack/kernels.hpp"
#include "kernels_impl.hpp"

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>

#include <algorithm>
#include <vector>

namespace dtrack::kernels {
namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot_avx2(const double* x, const double* y, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
  }
  if (i + 4 <= n) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    i += 4;
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy_avx2(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i,
                     _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

void gemv_avx2(const double* A, std::size_t rows, std::size_t cols, const double* x,
               double* y) {
  for (std::size_t r = 0; r < rows; ++r) y[r] = dot_avx2(A + r * cols, x, cols);
}

void gemv_t_acc_avx2(const double* A, std::size_t rows, std::size_t cols,
                     const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) axpy_avx2(x[r], A + r * cols, y, cols);
}

void ger_avx2(double a, const double* x, std::size_t rows, const double* y,
              std::size_t cols, double* A) {
  for (std::size_t r = 0; r < rows; ++r) axpy_avx2(a * x[r], y, A + r * cols, cols);
}

void project_avx2(const double* Z, std::size_t P, std::size_t C, const double* M,
                  std::size_t D, double* out) {
  // Transposed copy so each input channel contributes a contiguous D-vector.
  std::vector<double> mt(C * D);
  for (std::size_t d = 0; d < D; ++d) {
    for (std::size_t c = 0; c < C; ++c) mt[c * D + d] = M[d * C + c];
  }
  const std::size_t dv = D - D % 4;
  for (std::size_t p = 0; p < P; ++p) {
    const double* z = Z + p * C;
    double* o = out + p * D;
    for (std::size_t d = 0; d < dv; d += 4) {
      __m256d acc = _mm256_setzero_pd();
      for (std::size_t c = 0; c < C; ++c) {
        acc = _mm256_fmadd_pd(_mm256_set1_pd(z[c]), _mm256_loadu_pd(&mt[c * D + d]), acc);
      }
      _mm256_storeu_pd(o + d, acc);
    }
    for (std::size_t d = dv; d < D; ++d) o[d] = dot_avx2(M + d * C, z, C);
  }
}

void outer_acc_avx2(const double* G, const double* Z, std::size_t P, std::size_t D,
                    std::size_t C, double* A) {
  const std::size_t dv = D - D % 4;
  for (std::size_t d = 0; d < dv; d += 4) {
    std::size_t c = 0;
    for (; c + 4 <= C; c += 4) {
      __m256d a0 = _mm256_setzero_pd(), a1 = _mm256_setzero_pd();
      __m256d a2 = _mm256_setzero_pd(), a3 = _mm256_setzero_pd();
      for (std::size_t p = 0; p < P; ++p) {
        const __m256d g = _mm256_loadu_pd(G + p * D + d);
        const double* z = Z + p * C + c;
        a0 = _mm256_fmadd_pd(_mm256_set1_pd(z[0]), g, a0);
        a1 = _mm256_fmadd_pd(_mm256_set1_pd(z[1]), g, a1);
        a2 = _mm256_fmadd_pd(_mm256_set1_pd(z[2]), g, a2);
        a3 = _mm256_fmadd_pd(_mm256_set1_pd(z[3]), g, a3);
      }
      alignas(32) double t[4][4];
      _mm256_store_pd(t[0], a0);
      _mm256_store_pd(t[1], a1);
      _mm256_store_pd(t[2], a2);
      _mm256_store_pd(t[3], a3);
      for (std::size_t k = 0; k < 4; ++k) {
        for (std::size_t l = 0; l < 4; ++l) A[(d + l) * C + c + k] += t[k][l];
      }
    }
    for (; c < C; ++c) {
      __m256d a = _mm256_setzero_pd();
      for (std::size_t p = 0; p < P; ++p) {
        a = _mm256_fmadd_pd(_mm256_set1_pd(Z[p * C + c]), _mm256_loadu_pd(G + p * D + d), a);
      }
      alignas(32) double t[4];
      _mm256_store_pd(t, a);
      for (std::size_t l = 0; l < 4; ++l) A[(d + l) * C + c] += t[l];
    }
  }
  for (std::size_t d = dv; d < D; ++d) {
    for (std::size_t p = 0; p < P; ++p) axpy_avx2(G[p * D + d], Z + p * C, A + d * C, C);
  }
}

// The 4x4 window of one output sums 16 taps of D channels. Channel blocks of
// sixteen use four accumulators so the taps do not form one long dependency
// chain.
void conv4_forward_avx2(const double* in, std::size_t H, std::size_t W, std::size_t D,
                        const double* kernel, double* out) {
  const std::size_t d16 = D - D % 16, d4 = D - D % 4;
  for (std::size_t i = 0; i < H; ++i) {
    const std::size_t ky0 = i == 0 ? 1 : 0, ky1 = std::min<std::size_t>(4, H + 1 - i);
    for (std::size_t j = 0; j < W; ++j) {
      const std::size_t kx0 = j == 0 ? 1 : 0, kx1 = std::min<std::size_t>(4, W + 1 - j);
      __m256d a0 = _mm256_setzero_pd(), a1 = _mm256_setzero_pd();
      __m256d a2 = _mm256_setzero_pd(), a3 = _mm256_setzero_pd();
      double tail = 0.0;
      for (std::size_t ky = ky0; ky < ky1; ++ky) {
        // Input row i + ky - 1, starting at column j + kx0 - 1.
        const double* v = in + ((i + ky - 1) * W + (j + kx0 - 1)) * D;
        const double* k = kernel + (ky * 4 + kx0) * D;
        for (std::size_t kx = kx0; kx < kx1; ++kx, v += D, k += D) {
          std::size_t d = 0;
          for (; d < d16; d += 16) {
            a0 = _mm256_fmadd_pd(_mm256_loadu_pd(k + d), _mm256_loadu_pd(v + d), a0);
            a1 = _mm256_fmadd_pd(_mm256_loadu_pd(k + d + 4), _mm256_loadu_pd(v + d + 4), a1);
            a2 = _mm256_fmadd_pd(_mm256_loadu_pd(k + d + 8), _mm256_loadu_pd(v + d + 8), a2);
            a3 = _mm256_fmadd_pd(_mm256_loadu_pd(k + d + 12), _mm256_loadu_pd(v + d + 12), a3);
          }
          for (; d < d4; d += 4) {
            a0 = _mm256_fmadd_pd(_mm256_loadu_pd(k + d), _mm256_loadu_pd(v + d), a0);
          }
          for (; d < D; ++d) tail += k[d] * v[d];
        }
      }
      out[i * W + j] = hsum(_mm256_add_pd(_mm256_add_pd(a0, a1), _mm256_add_pd(a2, a3))) + tail;
    }
  }
}

// Gather form: input pixel (y, x) collects every output whose window covers
// it, so each input cell is written once.
void conv4_backward_input_avx2(const double* grad_out, std::size_t H, std::size_t W,
                               std::size_t D, const double* kernel, double* grad_in) {
  const std::size_t dv = D - D % 4;
  const auto h = static_cast<std::ptrdiff_t>(H), w = static_cast<std::ptrdiff_t>(W);
  for (std::ptrdiff_t y = 0; y < h; ++y) {
    for (std::ptrdiff_t x = 0; x < w; ++x) {
      double* gi = grad_in + (static_cast<std::size_t>(y) * W + static_cast<std::size_t>(x)) * D;
      for (std::size_t d = 0; d < dv; d += 4) {
        __m256d acc = _mm256_loadu_pd(gi + d);
        for (std::ptrdiff_t ky = 0; ky < 4; ++ky) {
          const std::ptrdiff_t i = y - ky + 1;
          if (i < 0 || i >= h) continue;
          for (std::ptrdiff_t kx = 0; kx < 4; ++kx) {
            const std::ptrdiff_t j = x - kx + 1;
            if (j < 0 || j >= w) continue;
            const double g = grad_out[i * w + j];
            acc = _mm256_fmadd_pd(_mm256_set1_pd(g),
                                  _mm256_loadu_pd(kernel + (ky * 4 + kx) * D + d), acc);
          }
        }
        _mm256_storeu_pd(gi + d, acc);
      }
      for (std::size_t d = dv; d < D; ++d) {
        for (std::ptrdiff_t ky = 0; ky < 4; ++ky) {
          const std::ptrdiff_t i = y - ky + 1;
          if (i < 0 || i >= h) continue;
          for (std::ptrdiff_t kx = 0; kx < 4; ++kx) {
            const std::ptrdiff_t j = x - kx + 1;
            if (j < 0 || j >= w) continue;
            gi[d] += grad_out[i * w + j] * kernel[(ky * 4 + kx) * D + d];
          }
        }
      }
    }
  }
}

// One pass over the outputs per tap, the tap's D-vector held in registers.
void conv4_backward_kernel_avx2(const double* in, std::size_t H, std::size_t W,
                                std::size_t D, const double* grad_out,
                                double* grad_kernel) {
  const std::size_t dv = D - D % 4;
  for (std::size_t ky = 0; ky < 4; ++ky) {
    const std::size_t i0 = ky == 0 ? 1 : 0;
    // Outputs whose tap row stays inside the map: i + ky - 1 < H.
    const std::size_t i1 = H + 1 > ky ? std::min(H, H + 1 - ky) : 0;
    for (std::size_t kx = 0; kx < 4; ++kx) {
      const std::size_t j0 = kx == 0 ? 1 : 0;
      const std::size_t j1 = W + 1 > kx ? std::min(W, W + 1 - kx) : 0;
      double* gk = grad_kernel + (ky * 4 + kx) * D;
      for (std::size_t d = 0; d < dv; d += 4) {
        __m256d a0 = _mm256_setzero_pd(), a1 = _mm256_setzero_pd();
        for (std::size_t i = i0; i < i1; ++i) {
          // Input column of output j is j + kx - 1; start at the first one.
          const double* v = in + ((i + ky - 1) * W + (j0 + kx - 1)) * D + d;
          const double* g = grad_out + i * W;
          std::size_t j = j0;
          for (; j + 2 <= j1; j += 2, v += 2 * D) {
            a0 = _mm256_fmadd_pd(_mm256_set1_pd(g[j]), _mm256_loadu_pd(v), a0);
            a1 = _mm256_fmadd_pd(_mm256_set1_pd(g[j + 1]), _mm256_loadu_pd(v + D), a1);
          }
          if (j < j1) a0 = _mm256_fmadd_pd(_mm256_set1_pd(g[j]), _mm256_loadu_pd(v), a0);
        }
        _mm256_storeu_pd(gk + d, _mm256_add_pd(_mm256_loadu_pd(gk + d), _mm256_add_pd(a0, a1)));
      }
      for (std::size_t d = dv; d < D; ++d) {
        double s = 0.0;
        for (std::size_t i = i0; i < i1; ++i) {
          for (std::size_t j = j0; j < j1; ++j) {
            s += grad_out[i * W + j] * in[((i + ky - 1) * W + (j + kx - 1)) * D + d];
          }
        }
        gk[d] += s;
      }
    }
  }
}

// No FMA here: the lane arithmetic mirrors the scalar kernel operation by
// operation, so both produce identical bits.
void diou_batch_avx2(const double* acx, const double* acy, const double* aw,
                     const double* ah, const double* bcx, const double* bcy,
                     const double* bw, const double* bh, std::size_t n, double lambda,
                     double* iou_out, double* score_out) {
  const __m256d half = _mm256_set1_pd(0.5);
  const __m256d zero = _mm256_setzero_pd();
  const __m256d vl = _mm256_set1_pd(lambda);
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    const __m256d vacx = _mm256_loadu_pd(acx + k), vacy = _mm256_loadu_pd(acy + k);
    const __m256d vaw = _mm256_loadu_pd(aw + k), vah = _mm256_loadu_pd(ah + k);
    const __m256d vbcx = _mm256_loadu_pd(bcx + k), vbcy = _mm256_loadu_pd(bcy + k);
    const __m256d vbw = _mm256_loadu_pd(bw + k), vbh = _mm256_loadu_pd(bh + k);
    const __m256d haw = _mm256_mul_pd(half, vaw), hah = _mm256_mul_pd(half, vah);
    const __m256d hbw = _mm256_mul_pd(half, vbw), hbh = _mm256_mul_pd(half, vbh);
    const __m256d ax0 = _mm256_sub_pd(vacx, haw), ax1 = _mm256_add_pd(vacx, haw);
    const __m256d ay0 = _mm256_sub_pd(vacy, hah), ay1 = _mm256_add_pd(vacy, hah);
    const __m256d bx0 = _mm256_sub_pd(vbcx, hbw), bx1 = _mm256_add_pd(vbcx, hbw);
    const __m256d by0 = _mm256_sub_pd(vbcy, hbh), by1 = _mm256_add_pd(vbcy, hbh);
    const __m256d iw = _mm256_max_pd(
        zero, _mm256_sub_pd(_mm256_min_pd(ax1, bx1), _mm256_max_pd(ax0, bx0)));
    const __m256d ih = _mm256_max_pd(
        zero, _mm256_sub_pd(_mm256_min_pd(ay1, by1), _mm256_max_pd(ay0, by0)));
    const __m256d inter = _mm256_mul_pd(iw, ih);
    const __m256d uni = _mm256_sub_pd(
        _mm256_add_pd(_mm256_mul_pd(vaw, vah), _mm256_mul_pd(vbw, vbh)), inter);
    const __m256d ov = _mm256_div_pd(inter, uni);
    const __m256d ew = _mm256_sub_pd(_mm256_max_pd(ax1, bx1), _mm256_min_pd(ax0, bx0));
    const __m256d eh = _mm256_sub_pd(_mm256_max_pd(ay1, by1), _mm256_min_pd(ay0, by0));
    const __m256d dx = _mm256_sub_pd(vacx, vbcx), dy = _mm256_sub_pd(vacy, vbcy);
    const __m256d rho = _mm256_add_pd(_mm256_mul_pd(dx, dx), _mm256_mul_pd(dy, dy));
    const __m256d c = _mm256_add_pd(_mm256_mul_pd(ew, ew), _mm256_mul_pd(eh, eh));
    _mm256_storeu_pd(iou_out + k, ov);
    _mm256_storeu_pd(score_out + k,
                     _mm256_sub_pd(ov, _mm256_mul_pd(vl, _mm256_div_pd(rho, c))));
  }
  if (k < n) {
    scalar_table().diou_batch(acx + k, acy + k, aw + k, ah + k, bcx + k, bcy + k, bw + k,
                              bh + k, n - k, lambda, iou_out + k, score_out + k);
  }
}

}  // namespace

const KernelTable* avx2_table_impl() noexcept {
  static const KernelTable table{
      Isa::Avx2,          dot_avx2,
      axpy_avx2,          gemv_avx2,
      gemv_t_acc_avx2,    ger_avx2,
      project_avx2,       outer_acc_avx2,
      conv4_forward_avx2, conv4_backward_input_avx2,
      conv4_backward_kernel_avx2, diou_batch_avx2,
  };
  return &table;
}

}  // namespace dtrack::kernels

#else

namespace dtrack::kernels {
const KernelTable* avx2_table_impl() noexcept { return nullptr; }
}  // namespace dtrack::kernels

#endif
