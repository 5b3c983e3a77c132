"""Pure-Python fallback for the box-constrained QP kernel.

Solves min_x (x - a)' H (x - a) subject to lo <= x <= hi, with H symmetric
positive definite. Entries with lo == hi are pinned, entries with infinite
bounds are free. This is the inner kernel behind the inequality projection;
a compiled twin lives in ``_qpcore`` and is preferred at import time.
"""

from __future__ import annotations

import numpy as np

_FREE = 0
_AT_LO = -1
_AT_HI = 1
_PINNED = 2


class QpError(RuntimeError):
    """The active-set iteration failed to converge."""


def solve_box_qp(H, a, lo, hi, max_iter=1000):
    """Minimize (x-a)'H(x-a) over the box [lo, hi].

    Parameters
    ----------
    H : ndarray, shape (n, n)
        Symmetric positive definite quadratic form.
    a : ndarray, shape (n,)
        Unconstrained minimizer.
    lo, hi : ndarray, shape (n,)
        Componentwise bounds; -inf/+inf mark free coordinates and
        lo[i] == hi[i] pins coordinate i.

    Returns
    -------
    x : ndarray, shape (n,)
        The constrained minimizer.
    n_iter : int
        Active-set iterations used.
    """
    H = np.asarray(H, dtype=float)
    a = np.asarray(a, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    n = a.shape[0]

    state = np.full(n, _FREE, dtype=np.int64)
    pinned = lo == hi
    state[pinned] = _PINNED

    x = np.clip(a, lo, hi)
    # start with clipped coordinates in the working set
    state[(~pinned) & (x <= lo)] = _AT_LO
    state[(~pinned) & (x >= hi)] = _AT_HI

    scale = 1.0 + float(np.max(np.abs(H))) * (1.0 + float(np.max(np.abs(x - a))))
    mult_tol = 1e-11 * scale

    for it in range(1, max_iter + 1):
        free = np.flatnonzero(state == _FREE)
        fixed = np.flatnonzero(state != _FREE)

        if free.size:
            # equality-constrained optimum on the current working set
            rhs = H[np.ix_(free, free)] @ a[free]
            if fixed.size:
                rhs -= H[np.ix_(free, fixed)] @ (x[fixed] - a[fixed])
            target = np.linalg.solve(H[np.ix_(free, free)], rhs)
            d = target - x[free]

            # longest feasible step toward the target
            alpha = 1.0
            blocking = -1
            block_side = _FREE
            for k, i in enumerate(free):
                if d[k] > 0 and np.isfinite(hi[i]):
                    room = hi[i] - x[i]
                    if d[k] > room:
                        a_i = room / d[k]
                        if a_i < alpha:
                            alpha, blocking, block_side = a_i, i, _AT_HI
                elif d[k] < 0 and np.isfinite(lo[i]):
                    room = lo[i] - x[i]
                    if d[k] < room:
                        a_i = room / d[k]
                        if a_i < alpha:
                            alpha, blocking, block_side = a_i, i, _AT_LO
            x[free] += alpha * d
            if blocking >= 0:
                x[blocking] = hi[blocking] if block_side == _AT_HI else lo[blocking]
                state[blocking] = block_side
                continue

        # working-set optimum reached: check bound multipliers
        g = 2.0 * (H @ (x - a))
        worst = -mult_tol
        release = -1
        for i in range(n):
            if state[i] == _AT_HI:
                lam = -g[i]
            elif state[i] == _AT_LO:
                lam = g[i]
            else:
                continue
            if lam < worst:
                worst = lam
                release = i
        if release < 0:
            return x, it
        state[release] = _FREE

    raise QpError(f"box QP did not converge in {max_iter} iterations")
