// SPDX-License-Identifier: Apache-2.0
#include "rotdcf/kernels.hpp"

#include <algorithm>
#include <vector>

namespace rotdcf::kernels {

namespace {

constexpr int kRows = 4;
constexpr int kCols = 8;
// Below this many multiply-adds a parallel region costs more than it saves.
constexpr long kParallelWork = 1L << 15;

// op(X) as a contiguous rows x cols buffer when X is transposed.
const double* materialize(Op op, int rows, int cols, const double* X, int ldx, std::vector<double>& buf,
                          int& ld_out) {
  if (op == Op::N) {
    ld_out = ldx;
    return X;
  }
  buf.resize(static_cast<std::size_t>(rows) * cols);
#pragma omp parallel for schedule(static) if (static_cast<long>(rows) * cols > kParallelWork)
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) buf[static_cast<std::size_t>(r) * cols + c] = X[static_cast<std::size_t>(c) * ldx + r];
  ld_out = cols;
  return buf.data();
}

// acc(MR x kCols) = a(MR x k) * b(k x kCols).
template <int MR>
void micro_full(int k, const double* a, int la, const double* b, int lb, double (&acc)[kRows][kCols]) {
  for (int p = 0; p < k; ++p) {
    const double* bp = b + static_cast<std::size_t>(p) * lb;
    double x[MR];
    for (int r = 0; r < MR; ++r) x[r] = a[static_cast<std::size_t>(r) * la + p];
    for (int r = 0; r < MR; ++r) {
#pragma omp simd
      for (int c = 0; c < kCols; ++c) acc[r][c] += x[r] * bp[c];
    }
  }
}

void micro_edge(int mr, int nr, int k, const double* a, int la, const double* b, int lb,
                double (&acc)[kRows][kCols]) {
  for (int p = 0; p < k; ++p) {
    const double* bp = b + static_cast<std::size_t>(p) * lb;
    for (int r = 0; r < mr; ++r) {
      const double x = a[static_cast<std::size_t>(r) * la + p];
      for (int c = 0; c < nr; ++c) acc[r][c] += x * bp[c];
    }
  }
}

}  // namespace

void gemm(Op opa, Op opb, int m, int n, int k, const double* A, int lda, const double* B, int ldb,
          bool accumulate, double* C, int ldc) {
  if (m <= 0 || n <= 0) return;
  std::vector<double> abuf, bbuf;
  int la = 0, lb = 0;
  const double* a = materialize(opa, m, k, A, lda, abuf, la);
  const double* b = materialize(opb, k, n, B, ldb, bbuf, lb);

  const int row_blocks = (m + kRows - 1) / kRows;
  const long work = static_cast<long>(m) * n * std::max(k, 1);
#pragma omp parallel for schedule(static) if (work > kParallelWork)
  for (int ib = 0; ib < row_blocks; ++ib) {
    const int i0 = ib * kRows;
    const int mr = std::min(kRows, m - i0);
    const double* a0 = a + static_cast<std::size_t>(i0) * la;
    for (int j0 = 0; j0 < n; j0 += kCols) {
      const int nr = std::min(kCols, n - j0);
      double acc[kRows][kCols] = {};
      const double* b0 = b + j0;
      if (nr == kCols) {
        switch (mr) {
          case 4: micro_full<4>(k, a0, la, b0, lb, acc); break;
          case 3: micro_full<3>(k, a0, la, b0, lb, acc); break;
          case 2: micro_full<2>(k, a0, la, b0, lb, acc); break;
          default: micro_full<1>(k, a0, la, b0, lb, acc); break;
        }
      } else {
        micro_edge(mr, nr, k, a0, la, b0, lb, acc);
      }
      for (int r = 0; r < mr; ++r) {
        double* cr = C + static_cast<std::size_t>(i0 + r) * ldc + j0;
        if (accumulate)
          for (int c = 0; c < nr; ++c) cr[c] += acc[r][c];
        else
          for (int c = 0; c < nr; ++c) cr[c] = acc[r][c];
      }
    }
  }
}

void im2col(const double* plane, int H, int W, int L, double* col, long ldcol) {
  const int r = (L - 1) / 2;
#pragma omp parallel for schedule(static) if (static_cast<long>(L) * L * H * W > kParallelWork)
  for (int t = 0; t < L * L; ++t) {
    const int dy = t / L - r, dx = t % L - r;
    double* out = col + static_cast<std::size_t>(t) * ldcol;
    const int x_lo = std::max(0, -dx), x_hi = std::min(W, W - dx);
    for (int y = 0; y < H; ++y) {
      double* row = out + static_cast<std::size_t>(y) * W;
      const int sy = y + dy;
      if (sy < 0 || sy >= H || x_lo >= x_hi) {
        std::fill(row, row + W, 0.0);
        continue;
      }
      const double* src = plane + static_cast<std::size_t>(sy) * W + dx;
      std::fill(row, row + x_lo, 0.0);
      for (int x = x_lo; x < x_hi; ++x) row[x] = src[x];
      std::fill(row + x_hi, row + W, 0.0);
    }
  }
}

void col2im_add(const double* col, int H, int W, int L, long ldcol, double* plane) {
  const int r = (L - 1) / 2;
  // Parallel over destination rows so no two threads write the same pixel.
#pragma omp parallel for schedule(static) if (static_cast<long>(L) * L * H * W > kParallelWork)
  for (int sy = 0; sy < H; ++sy) {
    double* dst = plane + static_cast<std::size_t>(sy) * W;
    for (int t = 0; t < L * L; ++t) {
      const int dy = t / L - r, dx = t % L - r;
      const int y = sy - dy;
      if (y < 0 || y >= H) continue;
      const double* row = col + static_cast<std::size_t>(t) * ldcol + static_cast<std::size_t>(y) * W;
      const int x_lo = std::max(0, -dx), x_hi = std::min(W, W - dx);
      for (int x = x_lo; x < x_hi; ++x) dst[x + dx] += row[x];
    }
  }
}

namespace reference {

void gemm(Op opa, Op opb, int m, int n, int k, const double* A, int lda, const double* B, int ldb,
          bool accumulate, double* C, int ldc) {
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int p = 0; p < k; ++p) {
        const double a = opa == Op::N ? A[static_cast<std::size_t>(i) * lda + p] : A[static_cast<std::size_t>(p) * lda + i];
        const double b = opb == Op::N ? B[static_cast<std::size_t>(p) * ldb + j] : B[static_cast<std::size_t>(j) * ldb + p];
        s += a * b;
      }
      double& c = C[static_cast<std::size_t>(i) * ldc + j];
      c = accumulate ? c + s : s;
    }
  }
}

void im2col(const double* plane, int H, int W, int L, double* col, long ldcol) {
  const int r = (L - 1) / 2;
  for (int dy = 0; dy < L; ++dy)
    for (int dx = 0; dx < L; ++dx)
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          const int sy = y + dy - r, sx = x + dx - r;
          const bool inside = sy >= 0 && sy < H && sx >= 0 && sx < W;
          col[(static_cast<std::size_t>(dy) * L + dx) * ldcol + static_cast<std::size_t>(y) * W + x] =
              inside ? plane[static_cast<std::size_t>(sy) * W + sx] : 0.0;
        }
}

void col2im_add(const double* col, int H, int W, int L, long ldcol, double* plane) {
  const int r = (L - 1) / 2;
  for (int dy = 0; dy < L; ++dy)
    for (int dx = 0; dx < L; ++dx)
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          const int sy = y + dy - r, sx = x + dx - r;
          if (sy >= 0 && sy < H && sx >= 0 && sx < W)
            plane[static_cast<std::size_t>(sy) * W + sx] +=
                col[(static_cast<std::size_t>(dy) * L + dx) * ldcol + static_cast<std::size_t>(y) * W + x];
        }
}

}  // namespace reference

}  // namespace rotdcf::kernels
