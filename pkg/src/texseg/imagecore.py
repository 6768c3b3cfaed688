"""Images, finite-difference stencils, Gaussian windows, and patch sampling.

Images are float64 arrays of shape (H, W, L) with intensities in [0, 1],
L = 1 for grayscale and 3 for RGB.  The stencil fixes which neighbor offsets
the learning objective and the 2-D Potts solver look at; the default uses
horizontal, vertical and both diagonal directions with weights chosen so the
discrete jump penalty approximates the Euclidean boundary length.

Patch sampling draws anchors from a counter-based Philox generator, so a
given (image, count, seed) always yields the same patch set regardless of
platform or thread count.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import cv2
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import FormatError

SQRT2 = float(np.sqrt(2.0))

# Rec. 601 luma weights, also used by the histology profile.
_LUMA = (0.299, 0.587, 0.114)

_SUPPORTED_EXT = {".png", ".pgm", ".ppm"}


@dataclass(frozen=True)
class Image:
    """A raster of real intensities in [0, 1], shape (height, width, channels)."""

    data: np.ndarray

    def __post_init__(self):
        if not isinstance(self.data, np.ndarray) or self.data.ndim != 3:
            raise ValueError("image data must be a (H, W, L) array")
        if self.data.shape[2] not in (1, 3):
            raise ValueError(f"images must have 1 or 3 channels, got {self.data.shape[2]}")
        if self.data.dtype != np.float64:
            object.__setattr__(self, "data", self.data.astype(np.float64))
        if not np.all(np.isfinite(self.data)):
            raise ValueError("image contains non-finite intensities")
        if self.data.size and (self.data.min() < 0.0 or self.data.max() > 1.0):
            raise ValueError("image intensities must lie in [0, 1]")

    @property
    def height(self):
        return self.data.shape[0]

    @property
    def width(self):
        return self.data.shape[1]

    @property
    def channels(self):
        return self.data.shape[2]


@dataclass(frozen=True)
class Stencil:
    """Neighbor offsets (row, col) with positive direction weights."""

    offsets: tuple
    weights: tuple

    def __post_init__(self):
        if len(self.offsets) != len(self.weights):
            raise ValueError("stencil needs one weight per offset")
        if len(self.offsets) == 0:
            raise ValueError("stencil must contain at least one offset")
        for a in self.offsets:
            if len(a) != 2 or a == (0, 0):
                raise ValueError(f"bad stencil offset {a!r}")
        if any(w <= 0 for w in self.weights):
            raise ValueError("stencil weights must be positive")

    def __len__(self):
        return len(self.offsets)

    @staticmethod
    def eight_connected():
        """Axis plus diagonal offsets weighted for near-isotropic boundary length."""
        return Stencil(
            offsets=((1, 0), (0, 1), (1, 1), (1, -1)),
            weights=(SQRT2 - 1.0, SQRT2 - 1.0, 1.0 - SQRT2 / 2.0, 1.0 - SQRT2 / 2.0),
        )

    @staticmethod
    def four_connected():
        return Stencil(offsets=((1, 0), (0, 1)), weights=(1.0, 1.0))


def load_image(path):
    """Read an 8- or 16-bit PNG/PGM/PPM into an Image with [0, 1] intensities."""
    ext = os.path.splitext(str(path))[1].lower()
    if ext not in _SUPPORTED_EXT:
        raise FormatError(f"unsupported image format {ext!r} (use PNG, PGM, or PPM)")
    if not os.path.exists(str(path)):
        raise IOError(f"no such image file: {path}")
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise IOError(f"could not decode image: {path}")
    if raw.ndim == 2:
        raw = raw[:, :, None]
    elif raw.ndim == 3 and raw.shape[2] == 3:
        raw = raw[:, :, ::-1]  # BGR -> RGB
    else:
        raise FormatError(f"unsupported channel layout {raw.shape} in {path}")
    if raw.dtype == np.uint8:
        scale = 255.0
    elif raw.dtype == np.uint16:
        scale = 65535.0
    else:
        raise FormatError(f"unsupported sample type {raw.dtype} in {path}")
    return Image(raw.astype(np.float64) / scale)


def save_image(path, img):
    """Write an Image as an 8-bit PNG/PGM/PPM, rounding intensities to 255ths."""
    ext = os.path.splitext(str(path))[1].lower()
    if ext not in _SUPPORTED_EXT:
        raise FormatError(f"unsupported image format {ext!r} (use PNG, PGM, or PPM)")
    if ext == ".pgm" and img.channels != 1:
        raise FormatError("PGM stores grayscale only; convert or use PNG/PPM")
    if ext == ".ppm" and img.channels != 3:
        raise FormatError("PPM stores RGB only; use PNG or PGM for grayscale")
    q = np.rint(img.data * 255.0).astype(np.uint8)
    if img.channels == 1:
        out = q[:, :, 0]
    else:
        out = q[:, :, ::-1]  # RGB -> BGR
    if not cv2.imwrite(str(path), out):
        raise IOError(f"could not write image: {path}")


def to_grayscale(img):
    """Collapse RGB to luma (0.299, 0.587, 0.114); grayscale input passes through."""
    if img.channels == 1:
        return img
    y = (
        _LUMA[0] * img.data[:, :, 0]
        + _LUMA[1] * img.data[:, :, 1]
        + _LUMA[2] * img.data[:, :, 2]
    )
    return Image(np.clip(y, 0.0, 1.0)[:, :, None])


def gaussian_mask(side, sigma=None):
    """Flattened side x side Gaussian window, peak-normalized to 1 at the center.

    sigma defaults to side / 4.  The window keeps patch energy concentrated near
    the patch center so the learned filters respond to local structure.
    """
    if side < 1:
        raise ValueError("mask side must be >= 1")
    if sigma is None:
        sigma = side / 4.0
    if sigma <= 0:
        raise ValueError("mask sigma must be positive")
    c = (side - 1) / 2.0
    ax = np.arange(side, dtype=np.float64) - c
    g = np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / (2.0 * sigma * sigma))
    g /= g.max()
    return g.ravel()


@dataclass(frozen=True)
class PatchSet:
    """Masked, flattened patches plus every stencil-shifted copy.

    center[i] is the mask-weighted patch at anchor i, flattened row-major, one
    column per image channel: shape (count, side*side, channels).  directional[s]
    holds the same patches shifted by stencil offset s.  anchors records the
    top-left corner of each center patch in the source image.
    """

    filter_side: int
    mask: np.ndarray
    center: np.ndarray
    directional: tuple
    anchors: np.ndarray

    @property
    def count(self):
        return self.center.shape[0]

    @property
    def channels(self):
        return self.center.shape[2]


def sample_super_patches(img, count, filter_side, stencil, mask=None, seed=0):
    """Draw `count` anchors with Philox(seed) and extract masked patch stacks.

    Anchors are uniform over positions where the patch and all its shifted
    copies stay inside the image.  Raises ValueError when the image is too
    small to place even one such super-patch.
    """
    if count < 1:
        raise ValueError("patch count must be >= 1")
    side = int(filter_side)
    n = side * side
    if mask is None:
        mask = np.ones(n)
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != (n,):
        raise ValueError(f"mask must have length {n}, got shape {mask.shape}")

    rows_off = [a[0] for a in stencil.offsets]
    cols_off = [a[1] for a in stencil.offsets]
    r_lo = max(0, -min(min(rows_off), 0))
    r_hi = img.height - side - max(max(rows_off), 0)
    c_lo = max(0, -min(min(cols_off), 0))
    c_hi = img.width - side - max(max(cols_off), 0)
    if r_hi < r_lo or c_hi < c_lo:
        raise ValueError(
            f"image {img.height}x{img.width} too small for side-{side} super-patches"
        )

    rng = np.random.Generator(np.random.Philox(seed))
    rr = rng.integers(r_lo, r_hi + 1, size=count)
    cc = rng.integers(c_lo, c_hi + 1, size=count)

    # (H-side+1, W-side+1, L, side, side) view; fancy-indexing copies out patches.
    windows = sliding_window_view(img.data, (side, side), axis=(0, 1))

    def grab(dr, dc):
        p = windows[rr + dr, cc + dc]  # (count, L, side, side)
        p = p.transpose(0, 2, 3, 1).reshape(count, n, -1)
        return np.ascontiguousarray(p * mask[None, :, None])

    center = grab(0, 0)
    directional = tuple(grab(a[0], a[1]) for a in stencil.offsets)
    anchors = np.stack([rr, cc], axis=1).astype(np.int64)
    return PatchSet(
        filter_side=side,
        mask=mask,
        center=center,
        directional=directional,
        anchors=anchors,
    )
