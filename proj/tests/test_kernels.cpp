// Scalar reference vs AVX2 kernels on random inputs, including sizes that
// exercise every vector tail.

#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "dtrack/box.hpp"
#include "dtrack/kernels.hpp"

using namespace dtrack;
using kernels::KernelTable;

namespace {

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = g(rng);
  return v;
}

double max_rel_diff(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max(1.0, std::abs(a[i]));
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

const KernelTable* avx2_or_skip() {
  const KernelTable* t = kernels::avx2_table();
  if (t == nullptr || !kernels::cpu_has_avx2()) {
    MESSAGE("AVX2 kernels unavailable on this machine; equivalence not exercised");
    return nullptr;
  }
  return t;
}

constexpr double kTol = 1e-12;

struct Dims {
  std::size_t a, b, c;
};

}  // namespace

TEST_CASE("dispatch selects a usable table and can be forced") {
  CHECK(kernels::force(kernels::Isa::Scalar));
  CHECK(kernels::active().isa == kernels::Isa::Scalar);
  if (avx2_or_skip() != nullptr) {
    CHECK(kernels::force(kernels::Isa::Avx2));
    CHECK(kernels::active().isa == kernels::Isa::Avx2);
  }
  CHECK(kernels::name(kernels::Isa::Scalar) == "scalar");
  CHECK(kernels::name(kernels::Isa::Avx2) == "avx2");
}

TEST_CASE("vector kernels agree with the scalar reference") {
  const KernelTable* v = avx2_or_skip();
  if (v == nullptr) return;
  const KernelTable& s = kernels::scalar_table();
  std::mt19937_64 rng(11);
  for (std::size_t n : {0u, 1u, 3u, 4u, 5u, 7u, 8u, 9u, 16u, 31u, 100u}) {
    CAPTURE(n);
    const auto x = random_vec(n, rng), y = random_vec(n, rng);
    const double ds = s.dot(x.data(), y.data(), n), dv = v->dot(x.data(), y.data(), n);
    CHECK(std::abs(ds - dv) <= kTol * std::max(1.0, std::abs(ds)) * 10);

    auto ys = y, yv = y;
    s.axpy(0.7, x.data(), ys.data(), n);
    v->axpy(0.7, x.data(), yv.data(), n);
    CHECK(max_rel_diff(ys, yv) <= kTol);
  }
}

TEST_CASE("matrix kernels agree with the scalar reference") {
  const KernelTable* v = avx2_or_skip();
  if (v == nullptr) return;
  const KernelTable& s = kernels::scalar_table();
  std::mt19937_64 rng(12);
  for (auto [rows, cols] : {std::pair<std::size_t, std::size_t>{1, 1}, {3, 5}, {16, 10},
                            {7, 13}, {64, 29}}) {
    CAPTURE(rows);
    CAPTURE(cols);
    const auto A = random_vec(rows * cols, rng);
    const auto x = random_vec(cols, rng), xr = random_vec(rows, rng);

    std::vector<double> ys(rows), yv(rows);
    s.gemv(A.data(), rows, cols, x.data(), ys.data());
    v->gemv(A.data(), rows, cols, x.data(), yv.data());
    CHECK(max_rel_diff(ys, yv) <= 1e-11);

    std::vector<double> ts(cols, 1.0), tv(cols, 1.0);
    s.gemv_t_acc(A.data(), rows, cols, xr.data(), ts.data());
    v->gemv_t_acc(A.data(), rows, cols, xr.data(), tv.data());
    CHECK(max_rel_diff(ts, tv) <= 1e-11);

    auto Gs = A, Gv = A;
    s.ger(-0.3, xr.data(), rows, x.data(), cols, Gs.data());
    v->ger(-0.3, xr.data(), rows, x.data(), cols, Gv.data());
    CHECK(max_rel_diff(Gs, Gv) <= kTol);
  }
}

TEST_CASE("first-layer projection kernels agree with the scalar reference") {
  const KernelTable* v = avx2_or_skip();
  if (v == nullptr) return;
  const KernelTable& s = kernels::scalar_table();
  std::mt19937_64 rng(13);
  const Dims cases[] = {{1, 1, 1}, {9, 10, 16}, {17, 3, 5}, {40, 7, 4}, {25, 12, 18}};
  for (const auto [P, C, D] : cases) {
    CAPTURE(P);
    CAPTURE(C);
    CAPTURE(D);
    const auto Z = random_vec(P * C, rng), M = random_vec(D * C, rng);
    const auto G = random_vec(P * D, rng);
    std::vector<double> os(P * D), ov(P * D);
    s.project(Z.data(), P, C, M.data(), D, os.data());
    v->project(Z.data(), P, C, M.data(), D, ov.data());
    CHECK(max_rel_diff(os, ov) <= 1e-11);

    auto As = M, Av = M;
    s.outer_acc(G.data(), Z.data(), P, D, C, As.data());
    v->outer_acc(G.data(), Z.data(), P, D, C, Av.data());
    CHECK(max_rel_diff(As, Av) <= 1e-11);
  }
}

TEST_CASE("4x4 convolution kernels agree with the scalar reference") {
  const KernelTable* v = avx2_or_skip();
  if (v == nullptr) return;
  const KernelTable& s = kernels::scalar_table();
  std::mt19937_64 rng(14);
  const Dims cases[] = {{1, 1, 1}, {2, 3, 4}, {5, 4, 3}, {9, 7, 16}, {12, 12, 20}, {6, 11, 33}};
  for (const auto [H, W, D] : cases) {
    CAPTURE(H);
    CAPTURE(W);
    CAPTURE(D);
    const auto in = random_vec(H * W * D, rng), k = random_vec(16 * D, rng);
    const auto g = random_vec(H * W, rng);

    std::vector<double> fs(H * W), fv(H * W);
    s.conv4_forward(in.data(), H, W, D, k.data(), fs.data());
    v->conv4_forward(in.data(), H, W, D, k.data(), fv.data());
    CHECK(max_rel_diff(fs, fv) <= 1e-11);

    std::vector<double> bs(H * W * D, 0.5), bv(H * W * D, 0.5);
    s.conv4_backward_input(g.data(), H, W, D, k.data(), bs.data());
    v->conv4_backward_input(g.data(), H, W, D, k.data(), bv.data());
    CHECK(max_rel_diff(bs, bv) <= 1e-11);

    std::vector<double> ks(16 * D, -0.25), kv(16 * D, -0.25);
    s.conv4_backward_kernel(in.data(), H, W, D, g.data(), ks.data());
    v->conv4_backward_kernel(in.data(), H, W, D, g.data(), kv.data());
    CHECK(max_rel_diff(ks, kv) <= 1e-11);
  }
}

TEST_CASE("scalar 4x4 convolution matches a direct definition") {
  // out(i, j) = sum over ky, kx, d of kernel[ky][kx][d] * in(i + ky - 1, j + kx - 1, d).
  const KernelTable& s = kernels::scalar_table();
  std::mt19937_64 rng(15);
  const std::size_t H = 6, W = 5, D = 3;
  const auto in = random_vec(H * W * D, rng), k = random_vec(16 * D, rng);
  std::vector<double> got(H * W);
  s.conv4_forward(in.data(), H, W, D, k.data(), got.data());
  for (std::size_t i = 0; i < H; ++i) {
    for (std::size_t j = 0; j < W; ++j) {
      double want = 0.0;
      for (int ky = 0; ky < 4; ++ky) {
        for (int kx = 0; kx < 4; ++kx) {
          const int y = static_cast<int>(i) + ky - 1, x = static_cast<int>(j) + kx - 1;
          if (y < 0 || x < 0 || y >= static_cast<int>(H) || x >= static_cast<int>(W)) continue;
          for (std::size_t d = 0; d < D; ++d) {
            want += k[(ky * 4 + kx) * D + d] * in[(y * W + x) * D + d];
          }
        }
      }
      CHECK(got[i * W + j] == doctest::Approx(want).epsilon(1e-13));
    }
  }
}

TEST_CASE("convolution backward kernels are adjoints of the forward map") {
  std::mt19937_64 rng(16);
  const std::size_t H = 7, W = 9, D = 6;
  for (const KernelTable* t : {&kernels::scalar_table(), kernels::avx2_table()}) {
    if (t == nullptr || (t->isa == kernels::Isa::Avx2 && !kernels::cpu_has_avx2())) continue;
    CAPTURE(kernels::name(t->isa));
    const auto in = random_vec(H * W * D, rng), k = random_vec(16 * D, rng);
    const auto g = random_vec(H * W, rng);
    std::vector<double> out(H * W);
    t->conv4_forward(in.data(), H, W, D, k.data(), out.data());
    double lhs = 0.0;
    for (std::size_t p = 0; p < H * W; ++p) lhs += out[p] * g[p];

    std::vector<double> gin(H * W * D, 0.0), gk(16 * D, 0.0);
    t->conv4_backward_input(g.data(), H, W, D, k.data(), gin.data());
    t->conv4_backward_kernel(in.data(), H, W, D, g.data(), gk.data());
    double via_input = 0.0, via_kernel = 0.0;
    for (std::size_t e = 0; e < gin.size(); ++e) via_input += gin[e] * in[e];
    for (std::size_t e = 0; e < gk.size(); ++e) via_kernel += gk[e] * k[e];
    CHECK(via_input == doctest::Approx(lhs).epsilon(1e-12));
    CHECK(via_kernel == doctest::Approx(lhs).epsilon(1e-12));
  }
}

TEST_CASE("batched overlap is bit-identical across kernel sets and matches box.hpp") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> pos(-20.0, 20.0), side(0.5, 15.0);
  const std::size_t n = 103;
  std::vector<double> acx(n), acy(n), aw(n), ah(n), bcx(n), bcy(n), bw(n), bh(n);
  for (std::size_t i = 0; i < n; ++i) {
    acx[i] = pos(rng), acy[i] = pos(rng), aw[i] = side(rng), ah[i] = side(rng);
    bcx[i] = pos(rng), bcy[i] = pos(rng), bw[i] = side(rng), bh[i] = side(rng);
  }
  const KernelTable& s = kernels::scalar_table();
  std::vector<double> is(n), ss(n);
  s.diou_batch(acx.data(), acy.data(), aw.data(), ah.data(), bcx.data(), bcy.data(),
               bw.data(), bh.data(), n, 1.0, is.data(), ss.data());
  for (std::size_t i = 0; i < n; ++i) {
    const Box2D a(acx[i], acy[i], aw[i], ah[i]), b(bcx[i], bcy[i], bw[i], bh[i]);
    CHECK(is[i] == doctest::Approx(iou(a, b)).epsilon(1e-14));
    CHECK(ss[i] == doctest::Approx(diou_score(a, b)).epsilon(1e-14));
  }
  if (const KernelTable* v = avx2_or_skip()) {
    std::vector<double> iv(n), sv(n);
    v->diou_batch(acx.data(), acy.data(), aw.data(), ah.data(), bcx.data(), bcy.data(),
                  bw.data(), bh.data(), n, 1.0, iv.data(), sv.data());
    CHECK(iv == is);
    CHECK(sv == ss);
  }
}
