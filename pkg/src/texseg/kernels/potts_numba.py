"""Numba-compiled Potts line kernels (default backend).

Twin of potts_numpy with identical floating-point evaluation order; scan
lines are independent, so solve_lines runs them under prange without
affecting results.
"""

from __future__ import annotations

import numpy as np
from numba import njit, prange


@njit(cache=True)
def line_dp(y, w, gamma, x_out):
    t_len, k_ch = y.shape
    wgt = np.empty(t_len + 1)
    s2 = np.empty(t_len + 1)
    s1 = np.empty((t_len + 1, k_ch))
    wgt[0] = 0.0
    s2[0] = 0.0
    for k in range(k_ch):
        s1[0, k] = 0.0
    for t in range(t_len):
        sq = 0.0
        for k in range(k_ch):
            sq += y[t, k] * y[t, k]
        wgt[t + 1] = wgt[t] + w[t]
        s2[t + 1] = s2[t] + w[t] * sq
        for k in range(k_ch):
            s1[t + 1, k] = s1[t, k] + w[t] * y[t, k]

    part = np.empty(t_len + 1)
    jumps = np.empty(t_len + 1, dtype=np.int64)
    last = np.empty(t_len + 1, dtype=np.int64)
    part[0] = -gamma
    jumps[0] = 0
    last[0] = 0

    for r in range(1, t_len + 1):
        best_e = np.inf
        best_j = np.int64(0)
        best_l = np.int64(0)
        for l in range(1, r + 1):
            q = 0.0
            for k in range(k_ch):
                d = s1[r, k] - s1[l - 1, k]
                q += d * d
            eps = (s2[r] - s2[l - 1]) - q / (wgt[r] - wgt[l - 1])
            e = (part[l - 1] + gamma) + eps
            j = jumps[l - 1] + 1
            if (
                e < best_e
                or (e == best_e and (j < best_j or (j == best_j and l > best_l)))
                or best_l == 0
            ):
                best_e = e
                best_j = j
                best_l = l
        part[r] = best_e
        jumps[r] = best_j
        last[r] = best_l

    r = t_len
    while r > 0:
        l = last[r]
        if l == r:
            for k in range(k_ch):
                x_out[r - 1, k] = y[r - 1, k]
        else:
            dw = wgt[r] - wgt[l - 1]
            for k in range(k_ch):
                m = (s1[r, k] - s1[l - 1, k]) / dw
                for t in range(l - 1, r):
                    x_out[t, k] = m
        r = l - 1
    return part[t_len]


@njit(cache=True, parallel=True)
def solve_lines(values, idx, starts, gamma):
    n_lines = starts.shape[0] - 1
    k_ch = values.shape[1]
    for j in prange(n_lines):
        a = starts[j]
        b = starts[j + 1]
        t_len = b - a
        y = np.empty((t_len, k_ch))
        for t in range(t_len):
            src = idx[a + t]
            for k in range(k_ch):
                y[t, k] = values[src, k]
        x = np.empty((t_len, k_ch))
        line_dp(y, np.ones(t_len), gamma, x)
        for t in range(t_len):
            dst = idx[a + t]
            for k in range(k_ch):
                values[dst, k] = x[t, k]
