#pragma once

#include <cstring>
#include <vector>

#include "vertexgen/parallel.hpp"

namespace vgen {

// Row-major GEMM kernels. Shapes are chosen for this workload: the B operand
// is always a small weight panel that stays in cache, so NN/NT stream A row
// by row. Accumulation order inside one output element is fixed, which keeps
// the parallel and serial variants bitwise identical.

namespace detail {

template <class S>
inline void gemm_nn_row(int i, int n, int k, const S* a, int lda, const S* b, int ldb,
                        S* c, int ldc, bool acc) {
  S* crow = c + int64_t(i) * ldc;
  if (!acc)
    for (int j = 0; j < n; ++j) crow[j] = S(0);
  const S* arow = a + int64_t(i) * lda;
  for (int kk = 0; kk < k; ++kk) {
    S av = arow[kk];
    if (av == S(0)) continue;
    const S* brow = b + int64_t(kk) * ldb;
    for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
  }
}

// dot(A.row(i), B.row(j)) with a fixed 4-lane accumulation tree.
template <class S>
inline S dot_rows(const S* x, const S* y, int k) {
  S a0 = 0, a1 = 0, a2 = 0, a3 = 0;
  int kk = 0;
  for (; kk + 4 <= k; kk += 4) {
    a0 += x[kk + 0] * y[kk + 0];
    a1 += x[kk + 1] * y[kk + 1];
    a2 += x[kk + 2] * y[kk + 2];
    a3 += x[kk + 3] * y[kk + 3];
  }
  for (; kk < k; ++kk) a0 += x[kk] * y[kk];
  return (a0 + a1) + (a2 + a3);
}

template <class S>
inline void gemm_nt_row(int i, int n, int k, const S* a, int lda, const S* b, int ldb,
                        S* c, int ldc, bool acc) {
  S* crow = c + int64_t(i) * ldc;
  const S* arow = a + int64_t(i) * lda;
  for (int j = 0; j < n; ++j) {
    S d = dot_rows(arow, b + int64_t(j) * ldb, k);
    crow[j] = acc ? crow[j] + d : d;
  }
}

}  // namespace detail

// C[m x n] = A[m x k] * B[k x n]
template <class S>
void gemm_nn(int m, int n, int k, const S* a, int lda, const S* b, int ldb, S* c,
             int ldc, bool acc) {
  if (int64_t(m) * n * k > (1 << 16)) {
    parallel_for(m, [&](int i) { detail::gemm_nn_row(i, n, k, a, lda, b, ldb, c, ldc, acc); });
  } else {
    for (int i = 0; i < m; ++i) detail::gemm_nn_row(i, n, k, a, lda, b, ldb, c, ldc, acc);
  }
}

template <class S>
void gemm_nn_serial(int m, int n, int k, const S* a, int lda, const S* b, int ldb, S* c,
                    int ldc, bool acc) {
  for (int i = 0; i < m; ++i) detail::gemm_nn_row(i, n, k, a, lda, b, ldb, c, ldc, acc);
}

// C[m x n] = A[m x k] * B^T where B is stored [n x k]
template <class S>
void gemm_nt(int m, int n, int k, const S* a, int lda, const S* b, int ldb, S* c,
             int ldc, bool acc) {
  if (int64_t(m) * n * k > (1 << 16)) {
    parallel_for(m, [&](int i) { detail::gemm_nt_row(i, n, k, a, lda, b, ldb, c, ldc, acc); });
  } else {
    for (int i = 0; i < m; ++i) detail::gemm_nt_row(i, n, k, a, lda, b, ldb, c, ldc, acc);
  }
}

template <class S>
void gemm_nt_serial(int m, int n, int k, const S* a, int lda, const S* b, int ldb, S* c,
                    int ldc, bool acc) {
  for (int i = 0; i < m; ++i) detail::gemm_nt_row(i, n, k, a, lda, b, ldb, c, ldc, acc);
}

// C[m x n] = A^T * B where A is stored [k x m], B is [k x n].
// k is split into a fixed number of chunks (independent of thread count);
// per-chunk partials are combined in chunk order, so the reduction tree is
// identical no matter how many threads run.
namespace detail {

template <class S>
inline void gemm_tn_chunk(int c0, int c1, int m, int n, const S* a, int lda, const S* b,
                          int ldb, S* part) {
  for (int kk = c0; kk < c1; ++kk) {
    const S* arow = a + int64_t(kk) * lda;
    const S* brow = b + int64_t(kk) * ldb;
    for (int i = 0; i < m; ++i) {
      S av = arow[i];
      if (av == S(0)) continue;
      S* prow = part + int64_t(i) * n;
      for (int j = 0; j < n; ++j) prow[j] += av * brow[j];
    }
  }
}

template <class S>
inline void gemm_tn_impl(int m, int n, int k, const S* a, int lda, const S* b, int ldb,
                         S* c, int ldc, bool acc, bool parallel) {
  const int nch = (k >= 2048) ? 8 : 1;
  std::vector<S> parts(size_t(nch) * m * n, S(0));
  auto run = [&](int ch) {
    int c0 = int(int64_t(k) * ch / nch);
    int c1 = int(int64_t(k) * (ch + 1) / nch);
    gemm_tn_chunk(c0, c1, m, n, a, lda, b, ldb, parts.data() + size_t(ch) * m * n);
  };
  if (parallel && nch > 1)
    parallel_for(nch, run);
  else
    for (int ch = 0; ch < nch; ++ch) run(ch);
  for (int i = 0; i < m; ++i) {
    S* crow = c + int64_t(i) * ldc;
    for (int j = 0; j < n; ++j) {
      S s = acc ? crow[j] : S(0);
      for (int ch = 0; ch < nch; ++ch) s += parts[size_t(ch) * m * n + int64_t(i) * n + j];
      crow[j] = s;
    }
  }
}

}  // namespace detail

template <class S>
void gemm_tn(int m, int n, int k, const S* a, int lda, const S* b, int ldb, S* c,
             int ldc, bool acc) {
  detail::gemm_tn_impl(m, n, k, a, lda, b, ldb, c, ldc, acc, true);
}

template <class S>
void gemm_tn_serial(int m, int n, int k, const S* a, int lda, const S* b, int ldb, S* c,
                    int ldc, bool acc) {
  detail::gemm_tn_impl(m, n, k, a, lda, b, ldb, c, ldc, acc, false);
}

}  // namespace vgen
