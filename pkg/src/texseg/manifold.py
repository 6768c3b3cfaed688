"""Filter banks and the geometry they live on.

Each learned filter is a side*side template, flattened row-major, constrained
to zero mean and unit Euclidean norm -- a point on the unit sphere intersected
with the hyperplane orthogonal to the all-ones vector.  A bank of K filters
lives on the K-fold product of that manifold.  This module provides tangent
projection, exact great-circle geodesics, parallel transport along them, and
a binary bank file format (TXSF).

An optional constant "mean filter" (all entries 1/sqrt(n)) can ride along
with a bank.  It is never optimized -- it is orthogonal to every zero-mean
filter by construction -- but it contributes a local-brightness channel when
the bank is applied to an image.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError

_MAGIC = b"TXSF"
_VERSION = 1
_FLAG_MEAN = 1


@dataclass(frozen=True)
class FilterBank:
    """Learned filter columns (n x K) plus bank metadata.

    columns holds only the learned filters; the constant mean filter is
    synthesized on demand when has_mean_filter is set.  Banks produced by
    learning keep every column zero-mean and unit-norm (the manifold ops
    assume it); the constructor itself only checks shape and finiteness so
    ad-hoc banks (e.g. a delta filter) can be applied to images too.
    """

    columns: np.ndarray
    side: int
    has_mean_filter: bool = False

    def __post_init__(self):
        cols = np.asarray(self.columns, dtype=np.float64)
        object.__setattr__(self, "columns", cols)
        if cols.ndim != 2:
            raise ValueError("filter bank columns must be a 2-D array")
        if cols.shape[0] != self.side * self.side:
            raise ValueError(
                f"filter length {cols.shape[0]} does not match side {self.side}"
            )
        if not np.all(np.isfinite(cols)):
            raise ValueError("filter bank contains non-finite entries")

    @property
    def n(self):
        return self.columns.shape[0]

    @property
    def k(self):
        """Number of learned filters (the mean filter not included)."""
        return self.columns.shape[1]

    @property
    def k_total(self):
        return self.k + (1 if self.has_mean_filter else 0)

    def mean_filter(self):
        return np.full(self.n, 1.0 / np.sqrt(self.n))

    def all_columns(self):
        """Learned columns, then the mean filter last when present."""
        if self.has_mean_filter:
            return np.concatenate([self.columns, self.mean_filter()[:, None]], axis=1)
        return self.columns.copy()


def project_tangent(bank, grad):
    """Project an ambient n x K gradient onto the tangent space at the bank.

    Per column: remove the mean component, then the radial component.  The
    result has zero column sums and is orthogonal to each base column.
    """
    cols = bank.columns
    g = np.asarray(grad, dtype=np.float64)
    if g.shape != cols.shape:
        raise ValueError(f"gradient shape {g.shape} != bank shape {cols.shape}")
    g = g - g.mean(axis=0, keepdims=True)
    g = g - cols * np.sum(cols * g, axis=0, keepdims=True)
    return g


def geodesic_step(bank, direction, t):
    """Move each filter along its great circle: cos(t|h|) phi + sin(t|h|) h/|h|.

    Columns with zero direction (or t == 0) are returned bitwise unchanged;
    moved columns are re-centered and re-normalized to absorb float drift.
    """
    cols = bank.columns
    out = cols.copy()
    for k in range(cols.shape[1]):
        h = direction[:, k]
        hn = float(np.linalg.norm(h))
        th = t * hn
        if th == 0.0:
            continue
        v = np.cos(th) * cols[:, k] + (np.sin(th) / hn) * h
        v = v - v.mean()
        out[:, k] = v / np.linalg.norm(v)
    return FilterBank(out, bank.side, bank.has_mean_filter)


def parallel_transport(vec, bank, direction, t):
    """Transport tangent columns `vec` along the geodesic taken from `bank`.

    Uses the closed-form rotation in the plane spanned by each base column and
    its unit direction; components orthogonal to that plane are untouched, so
    column norms are preserved.
    """
    cols = bank.columns
    out = np.array(vec, dtype=np.float64, copy=True)
    for k in range(cols.shape[1]):
        h = direction[:, k]
        hn = float(np.linalg.norm(h))
        th = t * hn
        if th == 0.0:
            continue
        u = h / hn
        a = float(np.dot(u, out[:, k]))
        out[:, k] += a * ((np.cos(th) - 1.0) * u - np.sin(th) * cols[:, k])
    return out


def random_init(side, k, seed=0):
    """Independent uniform draws on the constraint manifold via Philox(seed).

    Each column is a standard normal vector, centered then normalized; the
    (measure-zero) degenerate draws are rejected and redrawn.
    """
    n = side * side
    if n < 2:
        raise ValueError("filters need at least 2 entries for zero mean + unit norm")
    if k < 0:
        raise ValueError("filter count must be >= 0")
    rng = np.random.Generator(np.random.Philox(seed))
    cols = np.empty((n, k))
    for j in range(k):
        while True:
            v = rng.standard_normal(n)
            v = v - v.mean()
            nv = np.linalg.norm(v)
            if nv > 1e-12:
                cols[:, j] = v / nv
                break
    return FilterBank(cols, side, has_mean_filter=False)


def save_bank(path, bank):
    """Write a bank as TXSF: magic, version, flags, filter count, side, payload.

    All integers little-endian; payload is one float64 filter after another
    (column-major over the bank), the mean filter last when present.
    """
    cols = bank.all_columns()
    flags = _FLAG_MEAN if bank.has_mean_filter else 0
    header = struct.pack("<4sHHII", _MAGIC, _VERSION, flags, cols.shape[1], bank.side)
    payload = np.ascontiguousarray(cols.T, dtype="<f8").tobytes()
    with open(path, "wb") as f:
        f.write(header)
        f.write(payload)


def load_bank(path):
    """Read a TXSF bank file; strict on magic, version, flags, and length."""
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 16:
        raise FormatError(f"truncated bank file: {path}")
    magic, version, flags, k_stored, side = struct.unpack("<4sHHII", blob[:16])
    if magic != _MAGIC:
        raise FormatError(f"not a TXSF bank file: {path}")
    if version != _VERSION:
        raise FormatError(f"unsupported TXSF version {version} in {path}")
    if flags & ~_FLAG_MEAN:
        raise FormatError(f"unknown TXSF flag bits 0x{flags:04x} in {path}")
    has_mean = bool(flags & _FLAG_MEAN)
    n = side * side
    expect = 16 + 8 * k_stored * n
    if len(blob) != expect:
        raise FormatError(
            f"bank payload length mismatch in {path}: got {len(blob)}, want {expect}"
        )
    stored = np.frombuffer(blob[16:], dtype="<f8").reshape(k_stored, n).T
    if not np.all(np.isfinite(stored)):
        raise FormatError(f"bank contains non-finite coefficients: {path}")
    if has_mean:
        if k_stored < 1:
            raise FormatError(f"mean-filter flag set but no filters stored: {path}")
        mean_col = stored[:, -1]
        if np.max(np.abs(mean_col - 1.0 / np.sqrt(n))) > 1e-9:
            raise FormatError(f"stored mean filter is not constant 1/sqrt(n): {path}")
        learned = stored[:, :-1]
    else:
        learned = stored
    if learned.shape[1]:
        norms = np.linalg.norm(learned, axis=0)
        sums = learned.sum(axis=0)
        if np.max(np.abs(norms - 1.0)) > 1e-6 or np.max(np.abs(sums)) > 1e-6 * n:
            raise FormatError(f"stored filters violate zero-mean/unit-norm: {path}")
    return FilterBank(np.ascontiguousarray(learned), int(side), has_mean)
