# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled twin of the box-constrained QP kernel in ``_qppure``.

Same active-set algorithm, same tolerances, C loops and an in-place
Cholesky solve instead of numpy calls. Problems are tiny (one coordinate
per robustness check), so all work buffers are heap-allocated once per call.
"""

import numpy as np

from libc.math cimport INFINITY, fabs, isfinite, sqrt
from libc.stdlib cimport free, malloc

from ._qppure import QpError

cdef int _FREE = 0
cdef int _AT_LO = -1
cdef int _AT_HI = 1
cdef int _PINNED = 2


def solve_box_qp(H, a, lo, hi, int max_iter=1000):
    """Minimize (x-a)'H(x-a) over the box [lo, hi]; see ``_qppure``."""
    cdef double[:, ::1] Hv = np.ascontiguousarray(H, dtype=np.float64)
    cdef double[::1] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef double[::1] lov = np.ascontiguousarray(lo, dtype=np.float64)
    cdef double[::1] hiv = np.ascontiguousarray(hi, dtype=np.float64)
    cdef Py_ssize_t n = av.shape[0]

    x_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] x = x_arr

    cdef int* state = <int*> malloc(n * sizeof(int))
    cdef Py_ssize_t* freelist = <Py_ssize_t*> malloc(n * sizeof(Py_ssize_t))
    cdef double* M = <double*> malloc(n * n * sizeof(double))
    cdef double* rhs = <double*> malloc(n * sizeof(double))
    cdef double* d = <double*> malloc(n * sizeof(double))
    if state == NULL or freelist == NULL or M == NULL or rhs == NULL or d == NULL:
        free(state); free(freelist); free(M); free(rhs); free(d)
        raise MemoryError()

    cdef Py_ssize_t i, j, k, nf, it, blocking, release
    cdef int block_side
    cdef double hmax, dev, scale, mult_tol, s, alpha, a_i, room, piv
    cdef double g_i, lam, worst
    cdef int failed = 0
    cdef int done = 0
    cdef Py_ssize_t iters = 0

    with nogil:
        # initial point: clip to the box, clipped coordinates start active
        hmax = 0.0
        dev = 0.0
        for i in range(n):
            for j in range(n):
                if fabs(Hv[i, j]) > hmax:
                    hmax = fabs(Hv[i, j])
            if lov[i] == hiv[i]:
                state[i] = _PINNED
                x[i] = lov[i]
            elif av[i] <= lov[i]:
                state[i] = _AT_LO
                x[i] = lov[i]
            elif av[i] >= hiv[i]:
                state[i] = _AT_HI
                x[i] = hiv[i]
            else:
                state[i] = _FREE
                x[i] = av[i]
            if fabs(x[i] - av[i]) > dev:
                dev = fabs(x[i] - av[i])
        scale = 1.0 + hmax * (1.0 + dev)
        mult_tol = 1e-11 * scale

        for it in range(1, max_iter + 1):
            iters = it
            nf = 0
            for i in range(n):
                if state[i] == _FREE:
                    freelist[nf] = i
                    nf += 1

            if nf > 0:
                # rhs_k = (H_FF a_F)_k - (H_FW (x_W - a_W))_k, solve H_FF y = rhs
                for k in range(nf):
                    i = freelist[k]
                    s = 0.0
                    for j in range(n):
                        if state[j] == _FREE:
                            s += Hv[i, j] * av[j]
                        else:
                            s += Hv[i, j] * (av[j] - x[j])
                    rhs[k] = s
                for k in range(nf):
                    i = freelist[k]
                    for j in range(nf):
                        M[k * nf + j] = Hv[i, freelist[j]]
                # in-place Cholesky, M = L L'
                for k in range(nf):
                    piv = M[k * nf + k]
                    for j in range(k):
                        piv -= M[k * nf + j] * M[k * nf + j]
                    if piv <= 0.0:
                        failed = 1
                        break
                    piv = sqrt(piv)
                    M[k * nf + k] = piv
                    for i in range(k + 1, nf):
                        s = M[i * nf + k]
                        for j in range(k):
                            s -= M[i * nf + j] * M[k * nf + j]
                        M[i * nf + k] = s / piv
                if failed:
                    break
                # forward then backward substitution into rhs
                for k in range(nf):
                    s = rhs[k]
                    for j in range(k):
                        s -= M[k * nf + j] * rhs[j]
                    rhs[k] = s / M[k * nf + k]
                for k in range(nf - 1, -1, -1):
                    s = rhs[k]
                    for j in range(k + 1, nf):
                        s -= M[j * nf + k] * rhs[j]
                    rhs[k] = s / M[k * nf + k]

                # longest feasible step toward the target
                alpha = 1.0
                blocking = -1
                block_side = _FREE
                for k in range(nf):
                    i = freelist[k]
                    d[k] = rhs[k] - x[i]
                    if d[k] > 0.0 and isfinite(hiv[i]):
                        room = hiv[i] - x[i]
                        if d[k] > room:
                            a_i = room / d[k]
                            if a_i < alpha:
                                alpha = a_i
                                blocking = i
                                block_side = _AT_HI
                    elif d[k] < 0.0 and isfinite(lov[i]):
                        room = lov[i] - x[i]
                        if d[k] < room:
                            a_i = room / d[k]
                            if a_i < alpha:
                                alpha = a_i
                                blocking = i
                                block_side = _AT_LO
                for k in range(nf):
                    x[freelist[k]] += alpha * d[k]
                if blocking >= 0:
                    x[blocking] = hiv[blocking] if block_side == _AT_HI else lov[blocking]
                    state[blocking] = block_side
                    continue

            # working-set optimum reached: check bound multipliers
            worst = -mult_tol
            release = -1
            for i in range(n):
                if state[i] != _AT_HI and state[i] != _AT_LO:
                    continue
                g_i = 0.0
                for j in range(n):
                    g_i += Hv[i, j] * (x[j] - av[j])
                g_i *= 2.0
                lam = -g_i if state[i] == _AT_HI else g_i
                if lam < worst:
                    worst = lam
                    release = i
            if release < 0:
                done = 1
                break
            state[release] = _FREE

    free(state); free(freelist); free(M); free(rhs); free(d)
    if failed:
        raise QpError("quadratic form is not positive definite")
    if not done:
        raise QpError(f"box QP did not converge in {max_iter} iterations")
    return x_arr, int(iters)
