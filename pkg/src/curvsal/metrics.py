"""Repeatability metrics between 2D and depth feature point sets.

Point sets are ``(N, 2)`` float arrays of ``(x, y)`` pixel coordinates.
"""
import csv

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .errors import UndefinedScoreError

POINT_PERCENTILE = 90.0


def as_points(P):
    P = np.asarray(P, dtype=np.float64)
    if P.size == 0:
        return P.reshape(0, 2)
    return P.reshape(-1, 2)


def nearest_distances(A, B):
    """Distance from each point of ``A`` to its nearest neighbour in ``B``."""
    A, B = as_points(A), as_points(B)
    if len(B) == 0:
        return np.full(len(A), np.inf)
    if len(A) == 0:
        return np.zeros(0)
    _, idx = cKDTree(B).query(A, k=1)
    # recompute the matched distance so it does not depend on the tree's arithmetic
    diff = A - B[idx]
    return np.hypot(diff[:, 0], diff[:, 1])


def intersection_percentage(A, B, eps):
    """Percentage of ``A`` lying within ``eps`` pixels of some point of ``B``."""
    A = as_points(A)
    if len(A) == 0:
        raise UndefinedScoreError("intersection percentage needs a non-empty first set")
    return 100.0 * np.count_nonzero(nearest_distances(A, B) <= eps) / len(A)


def directed_hausdorff(A, B):
    return float(nearest_distances(A, B).max())


def hausdorff(A, B):
    """Symmetric Hausdorff distance ``max(h(A, B), h(B, A))``."""
    A, B = as_points(A), as_points(B)
    if len(A) == 0 or len(B) == 0:
        raise UndefinedScoreError("Hausdorff distance needs two non-empty sets")
    return max(directed_hausdorff(A, B), directed_hausdorff(B, A))


def extract_points(smap, percentile=POINT_PERCENTILE):
    """Feature points of a saliency map.

    Keeps positive pixels at or above the given percentile of the map (over
    the pixels where it is defined) that are also maximal along their
    orientation (thin curves).
    """
    v = np.where(smap.mask, smap.value, 0.0)
    if not np.any(v > 0):
        return np.zeros((0, 2))
    thr = np.percentile(v[smap.mask], percentile)
    h, w = v.shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    nx, ny = smap.orient[..., 0], smap.orient[..., 1]
    vm = ndimage.map_coordinates(v, [yy - ny, xx - nx], order=1, mode="constant")
    vp = ndimage.map_coordinates(v, [yy + ny, xx + nx], order=1, mode="constant")
    keep = (v >= thr) & (v > 0) & (v >= vm) & (v >= vp)
    r, c = np.nonzero(keep)
    return np.stack([c, r], axis=1).astype(np.float64)


def write_report(path, rows, header_note=""):
    """CSV with one row per (query, view) pair: ``query, view, ip, hd, error``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if header_note:
            fh.write(f"# {header_note}\n")
        wr = csv.writer(fh)
        wr.writerow(["query", "view", "ip", "hd", "error"])
        for r in rows:
            wr.writerow([r.get("query", ""), r.get("view", ""),
                         "" if r.get("ip") is None else f"{r['ip']:.6f}",
                         "" if r.get("hd") is None else f"{r['hd']:.6f}",
                         r.get("error", "")])
