"""Turn piecewise-constant feature tensors into label maps, and run the
whole segmentation pipeline.

Label extraction joins 4-neighbors whose channel sums AND full feature
vectors agree within a relative tolerance, then labels connected components
in first-encounter raster order.  Regions smaller than a fraction of the
image are merged into the neighbor sharing the largest part of their
boundary.  Label maps travel as 16-bit single-channel PNGs, with an 8-bit
color preview for eyeballs.
"""

from __future__ import annotations

from dataclasses import dataclass

import colorsys

import cv2
import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import FormatError
from .features import apply_filter_bank, covariance, nonlinearity, whiten
from .imagecore import gaussian_mask, Stencil
from .potts import AdmmSchedule, PottsProblem, potts_2d_admm


@dataclass
class MergeParams:
    min_area_fraction: float = 1e-3
    connectivity: int = 4

    def __post_init__(self):
        if not 0 <= self.min_area_fraction < 1:
            raise ValueError("min_area_fraction must lie in [0, 1)")
        if self.connectivity != 4:
            raise ValueError("only 4-connectivity is supported")


@dataclass
class SegmentResult:
    labels: np.ndarray
    energy: float
    status: str
    n_regions: int


def _renumber(comp):
    """Remap arbitrary ids to 0..R-1 in first-encounter raster order."""
    flat = comp.ravel()
    if flat.size == 0:
        return comp.astype(np.int32)
    uniq, first = np.unique(flat, return_index=True)
    order = np.argsort(first, kind="stable")
    remap = np.empty(int(uniq.max()) + 1, dtype=np.int32)
    remap[uniq[order]] = np.arange(order.size, dtype=np.int32)
    return remap[flat].reshape(comp.shape)


def _grid_components(right, down):
    """Connected components of the pixel grid given edge-keep masks."""
    h = down.shape[0] + 1
    w = right.shape[1] + 1
    grid = np.arange(h * w).reshape(h, w)
    src = np.concatenate([grid[:, :-1][right], grid[:-1][down]])
    dst = np.concatenate([grid[:, 1:][right], grid[1:][down]])
    graph = coo_matrix(
        (np.ones(src.shape[0], dtype=np.int8), (src, dst)), shape=(h * w, h * w)
    )
    _, comp = connected_components(graph, directed=False)
    return comp.reshape(h, w)


def extract_labels(v_star, tol=1e-6):
    """4-connected components of a (near) piecewise-constant tensor.

    Neighbors join iff their channel sums differ by at most tol * (range of
    sums) and every channel differs by at most tol * (that channel's range);
    the conjunction keeps distinct vectors with colliding sums apart.
    """
    v = np.asarray(v_star, dtype=np.float64)
    if v.ndim == 2:
        v = v[:, :, None]
    if v.ndim != 3:
        raise ValueError("expected an (H, W, K) tensor")
    if tol < 0:
        raise ValueError("tolerance must be >= 0")
    h, w, _ = v.shape
    sums = v.sum(axis=2)
    tol_s = tol * float(sums.max() - sums.min()) if sums.size else 0.0
    tol_c = tol * (v.reshape(-1, v.shape[2]).max(axis=0) - v.reshape(-1, v.shape[2]).min(axis=0))
    right = (np.abs(sums[:, :-1] - sums[:, 1:]) <= tol_s) & np.all(
        np.abs(v[:, :-1] - v[:, 1:]) <= tol_c, axis=2
    )
    down = (np.abs(sums[:-1] - sums[1:]) <= tol_s) & np.all(
        np.abs(v[:-1] - v[1:]) <= tol_c, axis=2
    )
    return _renumber(_grid_components(right, down))


def _region_graph(labels):
    """Sizes and shared 4-boundary lengths between label pairs."""
    sizes = {int(r): int(c) for r, c in enumerate(np.bincount(labels.ravel()))}
    adj = {r: {} for r in sizes}
    for a, b in (
        (labels[:, :-1], labels[:, 1:]),
        (labels[:-1, :], labels[1:, :]),
    ):
        m = a != b
        lo = np.minimum(a[m], b[m])
        hi = np.maximum(a[m], b[m])
        pairs, counts = np.unique(np.stack([lo, hi], axis=1), axis=0, return_counts=True)
        for (p, q), c in zip(pairs, counts):
            p, q, c = int(p), int(q), int(c)
            adj[p][q] = adj[p].get(q, 0) + c
            adj[q][p] = adj[q].get(p, 0) + c
    return sizes, adj


def merge_small_regions(labels, params=None):
    """Absorb sub-threshold regions into their dominant boundary neighbor.

    Repeatedly the smallest region with area < min_area_fraction * H * W is
    merged into the neighbor sharing the largest part of its boundary (ties:
    larger neighbor, then smaller label id) until nothing is below threshold
    or one region remains.  Labels come back renumbered in raster order.
    """
    if params is None:
        params = MergeParams()
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise ValueError("label map must be 2-D")
    h, w = labels.shape
    threshold = params.min_area_fraction * h * w
    sizes, adj = _region_graph(labels)
    target = np.arange(max(sizes) + 1, dtype=np.int64)
    alive = set(sizes)

    while len(alive) > 1:
        small = [r for r in alive if sizes[r] < threshold]
        if not small:
            break
        r = min(small, key=lambda q: (sizes[q], q))
        nbrs = adj[r]
        if not nbrs:
            break
        tgt = min(nbrs, key=lambda q: (-nbrs[q], -sizes[q], q))
        sizes[tgt] += sizes.pop(r)
        for q, length in adj.pop(r).items():
            if q == tgt:
                adj[tgt].pop(r, None)
                continue
            adj[q].pop(r)
            adj[q][tgt] = adj[q].get(tgt, 0) + length
            adj[tgt][q] = adj[tgt].get(q, 0) + length
        adj[tgt].pop(r, None)
        alive.remove(r)
        target[r] = tgt

    # resolve merge chains, then renumber
    for r in range(target.size):
        t = r
        while target[t] != t:
            t = target[t]
        target[r] = t
    return _renumber(target[labels])


def segment_pipeline(
    img,
    bank,
    gamma,
    mu=2000.0,
    mask=None,
    epsilon_scale=1e-8,
    extract_tol=1e-6,
    merge=None,
    schedule=None,
    stencil=None,
):
    """Filter, whiten, Potts-partition, and label an image with a learned bank."""
    if stencil is None:
        stencil = Stencil.eight_connected()
    if mask is None:
        mask = gaussian_mask(bank.side)
    feats = apply_filter_bank(img, bank, mask)
    feats = nonlinearity(feats, mu)
    op = covariance(feats, epsilon_scale)
    feats = whiten(feats, op)
    result = potts_2d_admm(PottsProblem(feats.data, gamma, stencil), schedule)
    labels = extract_labels(result.values, extract_tol)
    labels = merge_small_regions(labels, merge)
    return SegmentResult(
        labels=labels,
        energy=result.energy,
        status=result.status,
        n_regions=int(labels.max()) + 1,
    )


def write_label_map(path, labels):
    """Store a label map as a single-channel 16-bit PNG."""
    labels = np.asarray(labels)
    if labels.ndim != 2:
        raise ValueError("label map must be 2-D")
    if labels.min() < 0 or labels.max() > 65535:
        raise ValueError("label ids must fit in uint16")
    if not cv2.imwrite(str(path), labels.astype(np.uint16)):
        raise IOError(f"could not write label map: {path}")


def read_label_map(path):
    """Read an 8- or 16-bit label PNG; color maps become first-encounter ids."""
    raw = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if raw is None:
        raise IOError(f"could not read label map: {path}")
    if raw.dtype not in (np.uint8, np.uint16):
        raise FormatError(f"unsupported label sample type {raw.dtype} in {path}")
    if raw.ndim == 3:
        if raw.shape[2] != 3:
            raise FormatError(f"unsupported label channel layout {raw.shape} in {path}")
        # color-coded ground truth: one id per distinct color
        flat = raw.reshape(-1, 3)
        _, inverse = np.unique(flat, axis=0, return_inverse=True)
        return _renumber(inverse.reshape(raw.shape[:2]))
    return raw.astype(np.int32)


def _palette(count):
    colors = np.empty((count, 3), dtype=np.uint8)
    for i in range(count):
        hue = (i * 0.61803398875) % 1.0
        r, g, b = colorsys.hsv_to_rgb(hue, 0.65, 0.95)
        colors[i] = (round(r * 255), round(g * 255), round(b * 255))
    return colors


def write_label_preview(path, labels):
    """Color-mapped 8-bit PNG of a label map, for quick inspection."""
    labels = np.asarray(labels)
    colors = _palette(int(labels.max()) + 1)
    rgb = colors[labels]
    if not cv2.imwrite(str(path), rgb[:, :, ::-1]):
        raise IOError(f"could not write preview: {path}")
