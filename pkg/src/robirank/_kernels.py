"""Hot inner loops, JIT-compiled with numba when available.

Set ROBIRANK_NO_NUMBA=1 to force the pure-NumPy fallback path (useful
for debugging and for benchmarks/bench_kernels.py, which times both).
The fallback implementations are always importable under their
``*_fallback`` names regardless of the flag.

The sequential SGD loop cannot be vectorized (every update reads rows
written by earlier updates), so its fallback is a plain Python loop and
is much slower; the pair-sum kernel falls back to vectorized NumPy.
"""

from __future__ import annotations

import math
import os

import numpy as np

from .losses import _logistic_grad_raw, _logistic_raw

LN2 = math.log(2.0)


def _flag_disabled():
    return os.environ.get("ROBIRANK_NO_NUMBA", "").strip().lower() in {
        "1",
        "true",
        "yes",
        "on",
    }


NUMBA_ENABLED = False
if not _flag_disabled():
    try:
        import numba

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        NUMBA_ENABLED = False


def _sigma0(t):
    # scalar log2(1 + 2**-t), overflow-free on both tails
    u = math.exp(-abs(t) * LN2)
    v = math.log1p(u) / LN2
    if t < 0.0:
        v -= t
    return v


def _dsigma0(t):
    # scalar -1/(2**t + 1)
    u = math.exp(-abs(t) * LN2)
    if t >= 0.0:
        return -u / (1.0 + u)
    return -1.0 / (1.0 + u)


def _pair_inner_sums_impl(U, V, px, py, out):
    # px must arrive grouped by context so scores are computed once per block
    n = px.shape[0]
    m = V.shape[0]
    d = U.shape[1]
    s = np.empty(m, np.float64)
    cur = -1
    for j in range(n):
        x = px[j]
        if x != cur:
            for i in range(m):
                acc = 0.0
                for k in range(d):
                    acc += V[i, k] * U[x, k]
                s[i] = acc
            cur = x
        sy = s[py[j]]
        t = 0.0
        for i in range(m):
            t += _sigma0(sy - s[i])
        out[j] = t - 1.0  # drop the y'==y self term, sigma0(0) == 1
    return out


def _sgd_block_updates_impl(
    U, V, px, py, xi, pair_idx, choice, negraw, block_items, pos_in_block, eta, mu, scale
):
    d = U.shape[1]
    shrink = 1.0 - eta * mu
    for i in range(choice.shape[0]):
        j = pair_idx[choice[i]]
        x = px[j]
        y = py[j]
        r = negraw[i]
        if r >= pos_in_block[y]:
            r += 1
        yn = block_items[r]
        dot = 0.0
        for k in range(d):
            dot += U[x, k] * (V[y, k] - V[yn, k])
        g = eta * scale * xi[j] * _dsigma0(dot)
        for k in range(d):
            ux = U[x, k]
            vy = V[y, k]
            vn = V[yn, k]
            U[x, k] = shrink * ux - g * (vy - vn)
            V[y, k] = shrink * vy - g * ux
            V[yn, k] = shrink * vn + g * ux
    return 0


def pair_inner_sums_fallback(U, V, px, py, out):
    """Vectorized NumPy version of the pair-sum kernel (same contract)."""
    n = px.shape[0]
    start = 0
    while start < n:
        x = px[start]
        stop = start
        while stop < n and px[stop] == x:
            stop += 1
        s = V @ U[x]
        diffs = s[py[start:stop], None] - s[None, :]
        out[start:stop] = _logistic_raw(diffs).sum(axis=1) - 1.0
        start = stop
    return out


def sgd_block_updates_fallback(
    U, V, px, py, xi, pair_idx, choice, negraw, block_items, pos_in_block, eta, mu, scale
):
    """Python-loop version of the SGD kernel (sequential by nature)."""
    shrink = 1.0 - eta * mu
    for i in range(choice.shape[0]):
        j = int(pair_idx[choice[i]])
        x = int(px[j])
        y = int(py[j])
        r = int(negraw[i])
        if r >= pos_in_block[y]:
            r += 1
        yn = int(block_items[r])
        vdiff = V[y] - V[yn]
        g = eta * scale * float(xi[j]) * float(_logistic_grad_raw(float(U[x] @ vdiff)))
        ux = U[x].copy()
        U[x] = shrink * U[x] - g * vdiff
        V[y] = shrink * V[y] - g * ux
        V[yn] = shrink * V[yn] + g * ux
    return 0


if NUMBA_ENABLED:
    _sigma0 = numba.njit(cache=True, inline="always")(_sigma0)
    _dsigma0 = numba.njit(cache=True, inline="always")(_dsigma0)
    pair_inner_sums = numba.njit(cache=True, nogil=True)(_pair_inner_sums_impl)
    sgd_block_updates = numba.njit(cache=True, nogil=True)(_sgd_block_updates_impl)
else:
    pair_inner_sums = pair_inner_sums_fallback
    sgd_block_updates = sgd_block_updates_fallback
