# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled momentum-SGD epoch for networks with up to three weight layers.

Mirrors ``_reference.run_epoch`` operation for operation; matrix products go
through BLAS ``dgemm`` on row-major buffers and hidden activations through the
same numpy ufuncs the reference uses, which are SIMD-vectorised.
"""

import numpy as np

from libc.math cimport exp, log1p, fabs
from scipy.linalg.cython_blas cimport dgemm

cdef enum:
    MAX_LAYERS = 3


cdef inline void gemm_rm(char ta, char tb, int m, int n, int k, double alpha,
                         double* A, int lda, double* B, int ldb, double beta,
                         double* C, int ldc) noexcept nogil:
    # row-major C(m x n) = alpha * op(A) op(B) + beta * C, via column-major C^T
    dgemm(&tb, &ta, &n, &m, &k, &alpha, B, &ldb, A, &lda, &beta, C, &ldc)


cdef inline double logistic(double z) noexcept nogil:
    cdef double e
    if z >= 0:
        return 1.0 / (1.0 + exp(-z))
    e = exp(z)
    return e / (1.0 + e)


cdef inline void activate(object view, int kind):
    if kind == 0:
        np.tanh(view, out=view)
    else:
        np.negative(view, out=view)
        np.exp(view, out=view)
        np.add(view, 1.0, out=view)
        np.reciprocal(view, out=view)


def run_epoch(const double[:, ::1] X, const double[::1] y, const double[::1] sw,
              const long[::1] perm, int batch_size, double lr, double momentum,
              list weights, list biases, list vel_w, list vel_b, const long[::1] acts):
    cdef int L = len(weights)
    if L < 1 or L > MAX_LAYERS:
        raise ValueError("between 1 and 3 weight layers supported")
    cdef int n = perm.shape[0]
    cdef int d = X.shape[1]
    cdef int dims[MAX_LAYERS + 1]
    cdef double* Wp[MAX_LAYERS]
    cdef double* bp[MAX_LAYERS]
    cdef double* vWp[MAX_LAYERS]
    cdef double* vbp[MAX_LAYERS]
    cdef double* Ap[MAX_LAYERS + 1]
    cdef double* Dp[MAX_LAYERS + 1]
    cdef double* gWp[MAX_LAYERS]
    cdef double* gbp[MAX_LAYERS]
    cdef int code[MAX_LAYERS]
    cdef double[:, ::1] mv2
    cdef double[::1] mv1
    cdef int i, r, j, start, bsz, rows, cols, width
    cdef double total = 0.0, zr, pr, g, s

    dims[0] = d
    keep = []
    for i in range(L):
        mv2 = weights[i]
        if mv2.shape[0] != dims[i]:
            raise ValueError("weight shapes do not chain")
        dims[i + 1] = mv2.shape[1]
        Wp[i] = &mv2[0, 0]
        mv1 = biases[i]
        bp[i] = &mv1[0]
        mv2 = vel_w[i]
        vWp[i] = &mv2[0, 0]
        mv1 = vel_b[i]
        vbp[i] = &mv1[0]
        code[i] = acts[i] if i < L - 1 else 1
    if dims[L] != 1:
        raise ValueError("output layer must have one unit")

    width = batch_size if batch_size < n else n
    acts_np = []
    for i in range(L + 1):
        buf = np.empty((width, dims[i]))
        keep.append(buf)
        acts_np.append(buf)
        mv2 = buf
        Ap[i] = &mv2[0, 0]
        buf = np.empty((width, dims[i]))
        keep.append(buf)
        mv2 = buf
        Dp[i] = &mv2[0, 0]
    for i in range(L):
        buf = np.empty((dims[i], dims[i + 1]))
        keep.append(buf)
        mv2 = buf
        gWp[i] = &mv2[0, 0]
        buf = np.empty(dims[i + 1])
        keep.append(buf)
        mv1 = buf
        gbp[i] = &mv1[0]

    with np.errstate(over="ignore"):
        start = 0
        while start < n:
            bsz = batch_size if start + batch_size <= n else n - start
            for r in range(bsz):
                for j in range(d):
                    Ap[0][r * d + j] = X[perm[start + r], j]
            # forward
            for i in range(L):
                rows = bsz
                cols = dims[i + 1]
                gemm_rm(b'N', b'N', rows, cols, dims[i], 1.0, Ap[i], dims[i],
                        Wp[i], cols, 0.0, Ap[i + 1], cols)
                for r in range(rows):
                    for j in range(cols):
                        Ap[i + 1][r * cols + j] += bp[i][j]
                if i < L - 1:
                    activate(acts_np[i + 1][:rows], code[i])
            # loss and output delta; Ap[L] holds logits
            for r in range(bsz):
                zr = Ap[L][r]
                s = sw[perm[start + r]]
                g = y[perm[start + r]]
                total += s * ((zr if zr > 0 else 0.0) + log1p(exp(-fabs(zr))) - g * zr)
                pr = logistic(zr)
                Dp[L][r] = s * (pr - g) / bsz
            # backward
            i = L - 1
            while i >= 0:
                rows = dims[i]
                cols = dims[i + 1]
                gemm_rm(b'T', b'N', rows, cols, bsz, 1.0, Ap[i], rows,
                        Dp[i + 1], cols, 0.0, gWp[i], cols)
                for j in range(cols):
                    gbp[i][j] = 0.0
                for r in range(bsz):
                    for j in range(cols):
                        gbp[i][j] += Dp[i + 1][r * cols + j]
                if i > 0:
                    gemm_rm(b'N', b'T', bsz, rows, cols, 1.0, Dp[i + 1], cols,
                            Wp[i], cols, 0.0, Dp[i], rows)
                    for r in range(bsz * rows):
                        pr = Ap[i][r]
                        if code[i - 1] == 0:
                            Dp[i][r] = Dp[i][r] * (1.0 - pr * pr)
                        else:
                            Dp[i][r] = Dp[i][r] * (pr * (1.0 - pr))
                i -= 1
            # momentum update
            for i in range(L):
                rows = dims[i] * dims[i + 1]
                for j in range(rows):
                    vWp[i][j] = vWp[i][j] * momentum
                    vWp[i][j] = vWp[i][j] - lr * gWp[i][j]
                    Wp[i][j] = Wp[i][j] + vWp[i][j]
                for j in range(dims[i + 1]):
                    vbp[i][j] = vbp[i][j] * momentum
                    vbp[i][j] = vbp[i][j] - lr * gbp[i][j]
                    bp[i][j] = bp[i][j] + vbp[i][j]
            start += bsz
    return total / n
