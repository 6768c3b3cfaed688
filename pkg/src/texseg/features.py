"""From image to whitened feature tensor.

Applying a bank produces one response channel per filter (mean filter
included when the bank carries one): at each pixel the mask-weighted,
channel-summed patch around it is projected onto every filter column.
Borders are handled by symmetric reflection so every pixel has a full patch.
Responses then pass through the even log nonlinearity and are decorrelated by
the inverse square root of their empirical covariance (ridge-stabilized), so
all channels enter the Potts data term on comparable scales.

TXFT is a small binary dump of a feature tensor used by the CLI to hand
features between stages.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import FormatError
from .learn import sigma

_MAGIC = b"TXFT"

_STAGES = ("raw", "nonlinear", "whitened")


@dataclass(frozen=True)
class FeatureImage:
    """Feature tensor (H, W, K) tagged with its processing stage."""

    data: np.ndarray
    stage: str = "raw"

    def __post_init__(self):
        d = np.asarray(self.data, dtype=np.float64)
        if d.ndim != 3:
            raise ValueError("feature data must be (H, W, K)")
        if not np.all(np.isfinite(d)):
            raise ValueError("feature data must be finite")
        if self.stage not in _STAGES:
            raise ValueError(f"unknown feature stage {self.stage!r}")
        object.__setattr__(self, "data", d)

    @property
    def channels(self):
        return self.data.shape[2]


@dataclass(frozen=True)
class WhitenOp:
    """Ridge-stabilized covariance and its normalized inverse square root."""

    sigma: np.ndarray
    inv_sqrt: np.ndarray
    epsilon: float


def apply_filter_bank(img, bank, mask=None):
    """Correlate the mask-weighted, channel-summed image with every filter.

    Output (H, W, K_total) keeps the image size via symmetric border
    reflection; column k holds filter k's response map, the mean filter last
    when the bank carries one.
    """
    side = bank.side
    n = side * side
    if mask is None:
        mask = np.ones(n)
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != (n,):
        raise ValueError(f"mask must have length {n}")
    h, w = img.height, img.width
    if side > h or side > w:
        raise ValueError(f"filter side {side} exceeds image {h}x{w}")

    # Filters are tied across color channels with summed responses, which is
    # the same as filtering the channel-sum image once.
    plane = img.data.sum(axis=2)
    c = (side - 1) // 2
    pad = np.pad(plane, ((c, side - 1 - c), (c, side - 1 - c)), mode="symmetric")
    windows = sliding_window_view(pad, (side, side))
    templates = mask[:, None] * bank.all_columns()  # (n, K_total)

    out = np.empty((h, w, templates.shape[1]))
    block = max(1, (1 << 22) // max(1, w * n))  # ~32 MB of gathered windows
    for r0 in range(0, h, block):
        r1 = min(h, r0 + block)
        chunk = windows[r0:r1].reshape((r1 - r0) * w, n)
        out[r0:r1] = (chunk @ templates).reshape(r1 - r0, w, -1)
    return FeatureImage(out, "raw")


def nonlinearity(feat, mu):
    """Apply log(1 + mu x^2) channelwise; marks the tensor nonlinear."""
    if not mu > 0:
        raise ValueError("nonlinearity gain mu must be positive")
    return FeatureImage(sigma(feat.data, mu), "nonlinear")


def covariance(feat, epsilon_scale=1e-8):
    """Empirical channel covariance with a trace-scaled ridge, plus inverse root.

    The ridge is epsilon_scale * trace(Sigma) / K (or epsilon_scale alone for
    an all-zero tensor) so degenerate channels stay invertible.  The inverse
    square root is computed by symmetric eigendecomposition and divided by its
    largest entry, keeping the whitened features on an O(1) scale.
    """
    x = feat.data.reshape(-1, feat.channels)
    k = x.shape[1]
    if k == 0:
        raise ValueError("cannot whiten a zero-channel tensor")
    mean = x.mean(axis=0)
    xc = x - mean
    sig = (xc.T @ xc) / x.shape[0]
    tr = float(np.trace(sig))
    eps = epsilon_scale * tr / k if tr > 0 else float(epsilon_scale)
    sig = sig + eps * np.eye(k)
    evals, evecs = np.linalg.eigh(sig)
    inv_sqrt = (evecs / np.sqrt(evals)) @ evecs.T
    top = float(inv_sqrt.max())
    if top <= 0:
        top = float(np.abs(inv_sqrt).max())
    inv_sqrt = inv_sqrt / top
    return WhitenOp(sigma=sig, inv_sqrt=inv_sqrt, epsilon=eps)


def whiten(feat, op):
    """Map each feature vector through the normalized inverse covariance root."""
    out = feat.data @ op.inv_sqrt.T
    return FeatureImage(out, "whitened")


def save_features(path, feat):
    """Write a TXFT dump: magic, u32 H/W/K, float64 LE, pixel-major then channel."""
    h, w, k = feat.data.shape
    header = struct.pack("<4sIII", _MAGIC, h, w, k)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(feat.data, dtype="<f8").tobytes())


def load_features(path, stage="raw"):
    """Read a TXFT dump; the stage tag is not stored, so the caller names it."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 16:
        raise FormatError(f"truncated feature file: {path}")
    magic, h, w, k = struct.unpack("<4sIII", blob[:16])
    if magic != _MAGIC:
        raise FormatError(f"not a TXFT feature file: {path}")
    expect = 16 + 8 * h * w * k
    if len(blob) != expect:
        raise FormatError(
            f"feature payload length mismatch in {path}: got {len(blob)}, want {expect}"
        )
    data = np.frombuffer(blob[16:], dtype="<f8").reshape(h, w, k)
    return FeatureImage(data.copy(), stage)
