"""Saliency-weighted orientation histograms and the whitened similarity
``(d - mu)^T (Sigma + lam I)^-1 q`` used to compare a query with rendered views.
"""
import base64
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import ParameterError

GRID = 8
BINS = 9
CELL_EPS = 1e-3
REG_FRACTION = 0.01
REG_FLOOR = 1e-6


@dataclass
class HogDescriptor:
    data: np.ndarray  # (GRID * GRID * BINS,)
    source: str = "CS"
    grid: tuple = (GRID, GRID)
    bins: int = BINS

    @property
    def is_zero(self):
        return not np.any(self.data)

    def cells(self):
        """View as ``(cells_y, cells_x, bins)``."""
        return self.data.reshape(self.grid[1], self.grid[0], self.bins)


def _cell_coords(n, side, offset, cells):
    # letterbox: the image sits centred in a side x side square split into
    # cells; returns the continuous cell coordinate of each pixel centre,
    # measured from the centre of cell 0
    return (np.arange(n) + offset + 0.5) * cells / side - 0.5


def _spatial_weights(pos, cells, spatial):
    """Per-pixel ``(i0, w0, i1, w1)`` cell indices and weights along one axis."""
    if spatial == "hard":
        i0 = np.clip(np.floor(pos + 0.5).astype(np.int64), 0, cells - 1)
        return i0, np.ones_like(pos), i0, np.zeros_like(pos)
    i0 = np.floor(pos).astype(np.int64)
    f = pos - i0
    w0, w1 = 1.0 - f, f
    # outside the first/last cell centre everything goes to the edge cell
    lo, hi = i0 < 0, i0 >= cells - 1
    w0 = np.where(lo, 0.0, np.where(hi, 1.0, w0))
    w1 = np.where(lo, 1.0, np.where(hi, 0.0, w1))
    return np.clip(i0, 0, cells - 1), w0, np.clip(i0 + 1, 0, cells - 1), w1


def oriented_hog(smap, grid=GRID, bins=BINS, source=None, spatial="hard"):
    """Histogram of unsigned orientations, weighted by saliency, per grid cell.

    Saliency is first divided by its maximum (so the descriptor ignores the
    detector's units). Each pixel votes linearly into the two nearest of
    ``bins`` bins over [0, 180) degrees and, with ``spatial="bilinear"``,
    into the four nearest cells as in Dalal-Triggs HOG (``"hard"`` puts
    the whole vote in the containing cell). Each cell histogram is then
    L2-normalized as ``h / sqrt(|h|^2 + eps^2)``.
    """
    if spatial not in ("bilinear", "hard"):
        raise ParameterError(f"unknown spatial binning {spatial!r}")
    value = np.where(smap.mask, smap.value, 0.0)
    h, w = value.shape
    out = np.zeros((grid, grid, bins))
    vmax = value.max(initial=0.0)
    src = source or smap.source
    if vmax <= 0:
        return HogDescriptor(out.ravel(), src, (grid, grid), bins)
    nz = value > 0
    wgt = value[nz] / vmax
    theta = np.degrees(np.arctan2(smap.orient[..., 1], smap.orient[..., 0]))[nz] % 180.0
    pos = theta / (180.0 / bins) - 0.5
    b0 = np.floor(pos).astype(np.int64)
    frac = pos - b0
    b0 %= bins
    b1 = (b0 + 1) % bins
    side = max(h, w)
    ry, rx = np.nonzero(nz)
    cy = _spatial_weights(_cell_coords(h, side, (side - h) / 2.0, grid), grid, spatial)
    cx = _spatial_weights(_cell_coords(w, side, (side - w) / 2.0, grid), grid, spatial)
    flat = out.reshape(-1)
    for iy, wy in ((cy[0], cy[1]), (cy[2], cy[3])):
        for ix, wx in ((cx[0], cx[1]), (cx[2], cx[3])):
            cw = wgt * wy[ry] * wx[rx]
            base = (iy[ry] * grid + ix[rx]) * bins
            np.add.at(flat, base + b0, cw * (1.0 - frac))
            np.add.at(flat, base + b1, cw * frac)
    norm = np.sqrt((out ** 2).sum(axis=2, keepdims=True) + CELL_EPS ** 2)
    return HogDescriptor((out / norm).ravel(), src, (grid, grid), bins)


@dataclass
class DescriptorStats:
    mu_s: np.ndarray
    Sigma: np.ndarray  # sample covariance, unregularized
    lam: float

    def __post_init__(self):
        self._chol = cho_factor(self.Sigma + self.lam * np.eye(len(self.mu_s)), lower=True)

    def solve(self, q):
        """``(Sigma + lam I)^-1 q`` by Cholesky back-substitution."""
        return cho_solve(self._chol, q)

    def to_json(self):
        return {"dim": int(self.mu_s.size), "lam": self.lam,
                "mu_s": _b64(self.mu_s), "Sigma": _b64(self.Sigma)}

    @classmethod
    def from_json(cls, obj):
        d = obj["dim"]
        return cls(_unb64(obj["mu_s"]), _unb64(obj["Sigma"]).reshape(d, d), float(obj["lam"]))


def _vec(d):
    return d.data if isinstance(d, HogDescriptor) else np.asarray(d, dtype=np.float64)


def fit_stats(descriptors):
    """Mean, sample covariance and ridge term ``1%`` of the mean variance."""
    X = np.array([_vec(d) for d in descriptors], dtype=np.float64)
    if X.ndim != 2 or len(X) < 2:
        raise ParameterError("need at least 2 descriptors to fit statistics")
    mu = X.mean(axis=0)
    C = X - mu
    Sigma = C.T @ C / (len(X) - 1)
    Sigma = 0.5 * (Sigma + Sigma.T)
    lam = max(REG_FRACTION * np.trace(Sigma) / X.shape[1], REG_FLOOR)
    return DescriptorStats(mu, Sigma, float(lam))


def s_hog(query, db, stats):
    q, d = _vec(query), _vec(db)
    if q.shape != stats.mu_s.shape or d.shape != stats.mu_s.shape:
        raise ParameterError("descriptor dimension mismatch")
    return float((d - stats.mu_s) @ stats.solve(q))


HOG_MODES = ("literal", "centered", "cosine")


def s_hog_batch(query, dbs, stats, mode="literal"):
    """``s_hog`` of one query against a stack of database descriptors.

    ``"literal"``: ``(d - mu)^T W q`` with ``W = (Sigma + lam I)^-1``.
    ``"centered"``: the query is centred too, ``(d - mu)^T W (q - mu)``.
    ``"cosine"``: the centred form divided by both ``W``-norms, so the
    score is at most 1 and reaches it when ``d = q``.
    """
    q = _vec(query)
    D = np.array([_vec(d) for d in dbs], dtype=np.float64)
    if q.shape != stats.mu_s.shape or D.shape[1:] != stats.mu_s.shape:
        raise ParameterError("descriptor dimension mismatch")
    if mode == "literal":
        return (D - stats.mu_s) @ stats.solve(q)
    if mode not in HOG_MODES:
        raise ParameterError(f"unknown s_hog mode {mode!r}")
    C = D - stats.mu_s
    wq = stats.solve(q - stats.mu_s)
    out = C @ wq
    if mode == "cosine":
        qn = np.sqrt(max((q - stats.mu_s) @ wq, 0.0))
        dn = np.sqrt(np.maximum(np.einsum("ij,ji->i", C, stats.solve(C.T)), 0.0))
        den = qn * dn
        out = np.where(den > 0, out / np.where(den > 0, den, 1.0), 0.0)
    return out


def _b64(a):
    return base64.b64encode(np.ascontiguousarray(a, dtype="<f8").tobytes()).decode("ascii")


def _unb64(s):
    return np.frombuffer(base64.b64decode(s), dtype="<f8").copy()


def descriptor_to_json(d):
    return {"source": d.source, "grid": list(d.grid), "bins": d.bins, "data": _b64(d.data)}


def descriptor_from_json(obj):
    return HogDescriptor(_unb64(obj["data"]), obj.get("source", "CS"),
                         tuple(obj.get("grid", (GRID, GRID))), int(obj.get("bins", BINS)))
