"""Pure-numpy Potts line kernels (fallback backend).

Same recurrence and floating-point evaluation order as the numba twin: see
the package docstring.  Candidate energies for right end r are computed as a
vector over left ends l, then reduced with the tie rule (lowest energy, then
fewest jumps, then the shortest final segment, i.e. the largest l).
"""

from __future__ import annotations

import numpy as np


def line_dp(y, w, gamma, x_out):
    """Exact weighted 1-D Potts by dynamic programming; fills x_out, returns energy.

    y: (T, K) data, w: (T,) positive weights.  Segment costs come from prefix
    moments: eps(l, r) = S2 - |S1|^2 / W over the window.  Singleton segments
    write the input row back verbatim so a zero jump penalty reproduces the
    data bitwise.
    """
    t_len, k_ch = y.shape
    wgt = np.empty(t_len + 1)
    s2 = np.empty(t_len + 1)
    s1 = np.empty((t_len + 1, k_ch))
    wgt[0] = 0.0
    s2[0] = 0.0
    s1[0, :] = 0.0
    sq = np.zeros(t_len)
    for k in range(k_ch):
        sq += y[:, k] * y[:, k]
    np.cumsum(w, out=wgt[1:])
    np.cumsum(w * sq, out=s2[1:])
    np.cumsum(w[:, None] * y, axis=0, out=s1[1:])

    part = np.empty(t_len + 1)
    jumps = np.empty(t_len + 1, dtype=np.int64)
    last = np.empty(t_len + 1, dtype=np.int64)
    part[0] = -gamma
    jumps[0] = 0
    last[0] = 0

    for r in range(1, t_len + 1):
        q = np.zeros(r)
        for k in range(k_ch):
            d = s1[r, k] - s1[:r, k]
            q += d * d
        eps = (s2[r] - s2[:r]) - q / (wgt[r] - wgt[:r])
        e = (part[:r] + gamma) + eps
        best = e.min()
        cand = np.nonzero(e == best)[0]
        if cand.shape[0] > 1:
            j = jumps[cand]
            cand = cand[j == j.min()]
        l = int(cand[-1]) + 1
        part[r] = best
        jumps[r] = jumps[l - 1] + 1
        last[r] = l

    r = t_len
    while r > 0:
        l = last[r]
        if l == r:
            x_out[r - 1, :] = y[r - 1, :]
        else:
            dw = wgt[r] - wgt[l - 1]
            for k in range(k_ch):
                x_out[l - 1 : r, k] = (s1[r, k] - s1[l - 1, k]) / dw
        r = l - 1
    return part[t_len]


def solve_lines(values, idx, starts, gamma):
    """Unit-weight line_dp over each index list, updating `values` in place."""
    n_lines = starts.shape[0] - 1
    for j in range(n_lines):
        sel = idx[starts[j] : starts[j + 1]]
        y = np.ascontiguousarray(values[sel])
        x = np.empty_like(y)
        line_dp(y, np.ones(y.shape[0]), gamma, x)
        values[sel] = x
