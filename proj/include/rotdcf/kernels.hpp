// SPDX-License-Identifier: Apache-2.0
#pragma once

// Dense building blocks for the convolution layers. Each kernel has an
// OpenMP implementation (namespace kernels) and a plain serial version
// (namespace kernels::reference) that the tests and the benchmark compare
// against. Matrices are row-major with explicit leading dimensions.

namespace rotdcf::kernels {

enum class Op { N, T };

/// C = accumulate ? C + op(A) op(B) : op(A) op(B), with op(A) m x k and
/// op(B) k x n.
void gemm(Op opa, Op opb, int m, int n, int k, const double* A, int lda, const double* B, int ldb,
          bool accumulate, double* C, int ldc);

/// Same-size ("zero padded by (L-1)/2") patch matrix of one H x W plane:
/// col[(dy*L + dx) * ldcol + y*W + x] = plane(y + dy - r, x + dx - r) or 0.
/// ldcol >= H*W lets several planes share one patch matrix side by side.
void im2col(const double* plane, int H, int W, int L, double* col, long ldcol);

/// Adjoint of im2col: plane += scatter(col).
void col2im_add(const double* col, int H, int W, int L, long ldcol, double* plane);

namespace reference {

void gemm(Op opa, Op opb, int m, int n, int k, const double* A, int lda, const double* B, int ldb,
          bool accumulate, double* C, int ldc);
void im2col(const double* plane, int H, int W, int L, double* col, long ldcol);
void col2im_add(const double* col, int H, int W, int L, long ldcol, double* plane);

}  // namespace reference

}  // namespace rotdcf::kernels
