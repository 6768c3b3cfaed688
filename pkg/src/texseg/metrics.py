"""Segmentation quality measures between predicted and ground-truth label maps.

Three families, all computed from the contingency table between the two
partitions: region classification at an overlap threshold (correct / over- /
under-segmented / missed / noise, reported as pixel-weighted percentages),
consistency errors (GCE/LCE) built from pointwise set differences of the two
regions containing each pixel, and partition distances (Van Dongen, Mirkin,
and variation of information in bits).  Everything is invariant under
relabeling of either map.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass

import numpy as np


@dataclass
class MetricsReport:
    cs: float
    os: float
    us: float
    me: float
    ne: float
    gce: float
    lce: float
    dd: float
    dm: float
    dvi: float

    def to_dict(self):
        return asdict(self)


_FIELDS = ("cs", "os", "us", "me", "ne", "gce", "lce", "dd", "dm", "dvi")


def _contingency(pred, gt):
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape or pred.ndim != 2:
        raise ValueError(f"label map shapes differ: {pred.shape} vs {gt.shape}")
    if pred.size == 0:
        raise ValueError("label maps must be non-empty")
    _, pr = np.unique(pred.ravel(), return_inverse=True)
    _, gr = np.unique(gt.ravel(), return_inverse=True)
    n_p = int(pr.max()) + 1
    n_g = int(gr.max()) + 1
    table = np.bincount(pr * n_g + gr, minlength=n_p * n_g).reshape(n_p, n_g)
    return table.astype(np.int64)


def region_metrics(pred, gt, threshold=0.75):
    """Hoover-style region classification, pixel-weighted.

    A pred/GT pair is correct when the overlap is at least `threshold` of
    both regions.  A GT region is over-segmented when >= 2 pred regions each
    lie mostly (>= threshold of themselves) inside it and jointly cover it at
    threshold; under-segmentation is symmetric.  Remaining GT regions are
    missed, remaining pred regions are noise.  CS/OS/US/ME are percentages of
    GT pixels, NE of predicted pixels.  threshold must exceed 0.5, which makes
    correct pairs a matching.
    """
    if not 0.5 < threshold <= 1.0:
        raise ValueError("overlap threshold must lie in (0.5, 1]")
    table = _contingency(pred, gt)
    p_sz = table.sum(axis=1)
    g_sz = table.sum(axis=0)
    n = float(table.sum())
    n_p, n_g = table.shape

    used_p = np.zeros(n_p, dtype=bool)
    used_g = np.zeros(n_g, dtype=bool)
    cs_px = os_px = us_px = 0.0

    # correct pairs (a matching since threshold > 0.5)
    for i in range(n_p):
        for j in range(n_g):
            ov = table[i, j]
            if ov >= threshold * p_sz[i] and ov >= threshold * g_sz[j]:
                used_p[i] = used_g[j] = True
                cs_px += g_sz[j]

    # over-segmentation: several pred pieces inside one GT region
    for j in range(n_g):
        if used_g[j]:
            continue
        pieces = [
            i
            for i in range(n_p)
            if not used_p[i] and table[i, j] >= threshold * p_sz[i]
        ]
        if len(pieces) >= 2 and table[pieces, j].sum() >= threshold * g_sz[j]:
            used_g[j] = True
            used_p[pieces] = True
            os_px += g_sz[j]

    # under-segmentation: one pred region covering several GT regions
    for i in range(n_p):
        if used_p[i]:
            continue
        parts = [
            j
            for j in range(n_g)
            if not used_g[j] and table[i, j] >= threshold * g_sz[j]
        ]
        if len(parts) >= 2 and table[i, parts].sum() >= threshold * p_sz[i]:
            used_p[i] = True
            used_g[parts] = True
            us_px += g_sz[parts].sum()

    me_px = float(g_sz[~used_g].sum())
    ne_px = float(p_sz[~used_p].sum())
    return (
        float(100.0 * cs_px / n),
        float(100.0 * os_px / n),
        float(100.0 * us_px / n),
        float(100.0 * me_px / n),
        float(100.0 * ne_px / n),
    )


def consistency_metrics(pred, gt):
    """Global and local consistency errors.

    Pointwise refinement error E(A,B,p) = |R(A,p) \\ R(B,p)| / |R(A,p)|; GCE
    takes the better of the two one-sided sums, LCE the pointwise minimum, so
    GCE >= LCE and a pixelwise refinement in either direction gives GCE = 0.
    """
    table = _contingency(pred, gt).astype(np.float64)
    n = table.sum()
    p_sz = table.sum(axis=1, keepdims=True)
    g_sz = table.sum(axis=0, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        e_pg = np.where(table > 0, (p_sz - table) / p_sz, 0.0)
        e_gp = np.where(table > 0, (g_sz - table) / g_sz, 0.0)
    sum_pg = float(np.sum(table * e_pg))
    sum_gp = float(np.sum(table * e_gp))
    gce = float(min(sum_pg, sum_gp) / n)
    lce = float(np.sum(table * np.minimum(e_pg, e_gp)) / n)
    return gce, lce


def distance_metrics(pred, gt):
    """Van Dongen, Mirkin, and variation-of-information partition distances."""
    table = _contingency(pred, gt)
    n = float(table.sum())
    p_sz = table.sum(axis=1)
    g_sz = table.sum(axis=0)
    dd = (2.0 * n - table.max(axis=1).sum() - table.max(axis=0).sum()) / (2.0 * n)
    dm = (
        float(np.sum(p_sz.astype(np.float64) ** 2))
        + float(np.sum(g_sz.astype(np.float64) ** 2))
        - 2.0 * float(np.sum(table.astype(np.float64) ** 2))
    ) / (n * n)

    def entropy(counts):
        p = counts[counts > 0] / n
        return float(-np.sum(p * np.log2(p)))

    h_joint = entropy(table.ravel().astype(np.float64))
    dvi = 2.0 * h_joint - entropy(p_sz.astype(np.float64)) - entropy(g_sz.astype(np.float64))
    return float(dd), float(dm), max(0.0, float(dvi))


def compare_segmentations(pred, gt, threshold=0.75):
    """All metrics between two label maps as one MetricsReport."""
    cs, os_, us, me, ne = region_metrics(pred, gt, threshold)
    gce, lce = consistency_metrics(pred, gt)
    dd, dm, dvi = distance_metrics(pred, gt)
    return MetricsReport(cs, os_, us, me, ne, gce, lce, dd, dm, dvi)


def write_reports_csv(path, reports):
    """reports: list of (name, MetricsReport) rows -> CSV with a header."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("name",) + _FIELDS)
        for name, rep in reports:
            d = rep.to_dict()
            writer.writerow([name] + [repr(d[f]) for f in _FIELDS])


def write_reports_json(path, reports):
    payload = {name: rep.to_dict() for name, rep in reports}
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
