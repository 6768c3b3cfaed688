"""Hot inner loops of the Potts solvers, with two interchangeable backends.

The numba backend compiles the exact-search dynamic program per scan line and
runs independent lines in parallel; the numpy backend vectorizes the same
recurrence per shift candidate.  Both follow one floating-point evaluation
order -- prefix sums accumulated channel by channel, candidate energies formed
as ((P + gamma) + eps) -- so their outputs agree bitwise and results do not
depend on thread count.

Backend selection: the TEXSEG_NUMBA environment variable set to 0/false/off
forces pure numpy, 1/true/on requires numba (ImportError if missing), unset
picks numba when importable.  set_backend() overrides at runtime.
"""

from __future__ import annotations

import os

import numpy as np

from . import potts_numpy

try:
    from . import potts_numba

    _HAS_NUMBA = True
except ImportError:
    potts_numba = None
    _HAS_NUMBA = False

_TRUE = {"1", "true", "on", "yes"}
_FALSE = {"0", "false", "off", "no"}


def _initial_backend():
    raw = os.environ.get("TEXSEG_NUMBA", "").strip().lower()
    if raw in _FALSE:
        return "numpy"
    if raw in _TRUE:
        if not _HAS_NUMBA:
            raise ImportError("TEXSEG_NUMBA requests numba but it is not importable")
        return "numba"
    return "numba" if _HAS_NUMBA else "numpy"


_backend = _initial_backend()


def backend_name():
    return _backend


def set_backend(name):
    """Switch kernels at runtime; name is 'numba', 'numpy', or 'auto'."""
    global _backend
    if name == "auto":
        _backend = _initial_backend()
    elif name == "numpy":
        _backend = "numpy"
    elif name == "numba":
        if not _HAS_NUMBA:
            raise ImportError("numba backend requested but numba is not importable")
        _backend = "numba"
    else:
        raise ValueError(f"unknown kernel backend {name!r}")
    return _backend


def _mod():
    return potts_numba if _backend == "numba" else potts_numpy


def line_dp(y, w, gamma):
    """Exact 1-D Potts: y (T, K) float64, w (T,) positive weights.

    Returns (x, energy) with x the optimal piecewise-constant approximation.
    """
    y = np.ascontiguousarray(y, dtype=np.float64)
    w = np.ascontiguousarray(w, dtype=np.float64)
    x = np.empty_like(y)
    if y.shape[0] == 0:
        return x, 0.0
    energy = _mod().line_dp(y, w, float(gamma), x)
    return x, float(energy)


def solve_lines(values, idx, starts, gamma):
    """Run the unit-weight line solver over many disjoint index lists, in place.

    values is (N, K) float64; line j covers values[idx[starts[j]:starts[j+1]]].
    """
    _mod().solve_lines(values, idx, starts, float(gamma))
