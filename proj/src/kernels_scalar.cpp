#include <algorithm>

#include "dtrack/kernels.hpp"
#include "kernels_impl.hpp"

namespace dtrack::kernels {
namespace {

double dot_scalar(const double* x, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy_scalar(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void gemv_scalar(const double* A, std::size_t rows, std::size_t cols, const double* x,
                 double* y) {
  for (std::size_t r = 0; r < rows; ++r) y[r] = dot_scalar(A + r * cols, x, cols);
}

void gemv_t_acc_scalar(const double* A, std::size_t rows, std::size_t cols,
                       const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) axpy_scalar(x[r], A + r * cols, y, cols);
}

void ger_scalar(double a, const double* x, std::size_t rows, const double* y,
                std::size_t cols, double* A) {
  for (std::size_t r = 0; r < rows; ++r) axpy_scalar(a * x[r], y, A + r * cols, cols);
}

void project_scalar(const double* Z, std::size_t P, std::size_t C, const double* M,
                    std::size_t D, double* out) {
  for (std::size_t p = 0; p < P; ++p) gemv_scalar(M, D, C, Z + p * C, out + p * D);
}

void outer_acc_scalar(const double* G, const double* Z, std::size_t P, std::size_t D,
                      std::size_t C, double* A) {
  for (std::size_t p = 0; p < P; ++p) ger_scalar(1.0, G + p * D, D, Z + p * C, C, A);
}

void conv4_forward_scalar(const double* in, std::size_t H, std::size_t W, std::size_t D,
                          const double* kernel, double* out) {
  for (std::size_t i = 0; i < H; ++i) {
    for (std::size_t j = 0; j < W; ++j) {
      double s = 0.0;
      for_each_tap(i, j, H, W, [&](std::size_t tap, std::size_t q) {
        s += dot_scalar(kernel + tap * D, in + q * D, D);
      });
      out[i * W + j] = s;
    }
  }
}

void conv4_backward_input_scalar(const double* grad_out, std::size_t H, std::size_t W,
                                 std::size_t D, const double* kernel, double* grad_in) {
  for (std::size_t i = 0; i < H; ++i) {
    for (std::size_t j = 0; j < W; ++j) {
      const double g = grad_out[i * W + j];
      if (g == 0.0) continue;
      for_each_tap(i, j, H, W, [&](std::size_t tap, std::size_t q) {
        axpy_scalar(g, kernel + tap * D, grad_in + q * D, D);
      });
    }
  }
}

void conv4_backward_kernel_scalar(const double* in, std::size_t H, std::size_t W,
                                  std::size_t D, const double* grad_out,
                                  double* grad_kernel) {
  for (std::size_t i = 0; i < H; ++i) {
    for (std::size_t j = 0; j < W; ++j) {
      const double g = grad_out[i * W + j];
      if (g == 0.0) continue;
      for_each_tap(i, j, H, W, [&](std::size_t tap, std::size_t q) {
        axpy_scalar(g, in + q * D, grad_kernel + tap * D, D);
      });
    }
  }
}

void diou_batch_scalar(const double* acx, const double* acy, const double* aw,
                       const double* ah, const double* bcx, const double* bcy,
                       const double* bw, const double* bh, std::size_t n, double lambda,
                       double* iou_out, double* score_out) {
  for (std::size_t k = 0; k < n; ++k) {
    const double ax0 = acx[k] - 0.5 * aw[k], ax1 = acx[k] + 0.5 * aw[k];
    const double ay0 = acy[k] - 0.5 * ah[k], ay1 = acy[k] + 0.5 * ah[k];
    const double bx0 = bcx[k] - 0.5 * bw[k], bx1 = bcx[k] + 0.5 * bw[k];
    const double by0 = bcy[k] - 0.5 * bh[k], by1 = bcy[k] + 0.5 * bh[k];
    const double iw = std::max(0.0, std::min(ax1, bx1) - std::max(ax0, bx0));
    const double ih = std::max(0.0, std::min(ay1, by1) - std::max(ay0, by0));
    const double inter = iw * ih;
    const double uni = aw[k] * ah[k] + bw[k] * bh[k] - inter;
    const double ov = inter / uni;
    const double ew = std::max(ax1, bx1) - std::min(ax0, bx0);
    const double eh = std::max(ay1, by1) - std::min(ay0, by0);
    const double dx = acx[k] - bcx[k], dy = acy[k] - bcy[k];
    const double rho = dx * dx + dy * dy;
    const double c = ew * ew + eh * eh;
    iou_out[k] = ov;
    score_out[k] = ov - lambda * (rho / c);
  }
}

}  // namespace

const KernelTable& scalar_table() noexcept {
  static const KernelTable table{
      Isa::Scalar,          dot_scalar,
      axpy_scalar,          gemv_scalar,
      gemv_t_acc_scalar,    ger_scalar,
      project_scalar,       outer_acc_scalar,
      conv4_forward_scalar, conv4_backward_input_scalar,
      conv4_backward_kernel_scalar, diou_batch_scalar,
  };
  return table;
}

}  // namespace dtrack::kernels
