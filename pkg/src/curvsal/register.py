"""Ranking rendered views against a photograph and refining the pose.

Each view is scored by two similarities:

* ``s_hog``: whitened descriptor similarity (see :mod:`curvsal.descriptor`);
* ``s_rep``: a Gaussian of the non-repeatability ``R = 1 - rep`` of the
  query's feature points among the view's depth feature points.

They are combined as ``minmax(s_hog) * s_rep``. The best views seed a local
grid search on a finer grid that is halved every round until the estimated
pose stops moving.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import Config
from .descriptor import DescriptorStats, fit_stats, oriented_hog, s_hog_batch
from .errors import ParameterError, UndefinedScoreError
from .meshrender import (PoseTransform, Viewpoint, default_pixel_scale, pca_normalize,
                         render_depth, sample_viewpoints, viewpoint_to_pose)
from .metrics import as_points, extract_points, nearest_distances
from .saliency_depth import curvilinear_saliency_depth
from .saliency_image import image_curvilinear_saliency, multi_focus_curves, multi_scale_cs

log = logging.getLogger(__name__)

SIGMA_R = 0.1
TOP_K = 3
MAX_ROUNDS = 6
EPS_CONVERGE = 0.05


@dataclass
class RepScore:
    rep: float
    eps_px: float

    @property
    def non_repeatability(self):
        return 1.0 - self.rep


def repeatability(query_pts, depth_pts, eps_px=3.0):
    """Fraction of ``query_pts`` with a point of ``depth_pts`` within ``eps_px``.

    The first set is the one being tested; view scoring passes the depth
    points first, measuring how many of them the photograph reproduces.
    """
    q = as_points(query_pts)
    if len(q) == 0:
        raise UndefinedScoreError("repeatability needs at least one point in the tested set")
    d = nearest_distances(q, depth_pts)
    return RepScore(float(np.count_nonzero(d <= eps_px)) / len(q), float(eps_px))


REP_MODES = ("best", "one_sided", "two_sided")


def s_rep(reps, sigma_r=SIGMA_R, mode="best"):
    """Gaussian repeatability similarity per view, in (0, 1].

    With ``R_i = 1 - rep_i``:

    * ``"two_sided"``: ``exp(-(R_i - mean R)^2 / (2 sigma_r^2))``;
    * ``"one_sided"``: as above but only views repeating worse than the
      mean are penalized;
    * ``"best"`` (default): centred on the best view, ``exp(-(R_i - min R)^2
      / (2 sigma_r^2))``, so the score falls off with the gap to the most
      repeatable view.
    """
    if sigma_r <= 0:
        raise ParameterError("sigma_r must be positive")
    R = np.array([1.0 - (r.rep if isinstance(r, RepScore) else float(r)) for r in reps])
    if R.size == 0:
        raise ParameterError("need at least one view")
    if mode == "two_sided":
        dev = R - R.mean()
    elif mode == "one_sided":
        dev = np.maximum(R - R.mean(), 0.0)
    elif mode == "best":
        dev = R - R.min()
    else:
        raise ParameterError(f"unknown s_rep mode {mode!r}")
    return np.exp(-dev ** 2 / (2.0 * sigma_r ** 2))


def minmax(x):
    x = np.asarray(x, dtype=np.float64)
    lo, hi = x.min(), x.max()
    if hi - lo <= 0:
        return np.ones_like(x)
    return (x - lo) / (hi - lo)


@dataclass
class SimilarityTable:
    view_ids: np.ndarray
    viewpoints: list
    s_hog: np.ndarray  # raw
    s_hog_norm: np.ndarray
    s_rep: np.ndarray
    s_combined: np.ndarray
    rep: np.ndarray = None

    def __len__(self):
        return len(self.view_ids)

    def order(self):
        """Indices by descending ``s_combined``, ties broken by view id."""
        return np.lexsort((self.view_ids, -self.s_combined))

    def record(self, i):
        vp = self.viewpoints[i] if self.viewpoints is not None else None
        h, a, v = vp.as_tuple() if vp is not None else (None, None, None)
        return {"view": int(self.view_ids[i]), "h": h, "a": a, "v": v,
                "s_hog": float(self.s_hog[i]), "s_rep": float(self.s_rep[i]),
                "s_combined": float(self.s_combined[i]),
                "rep": None if self.rep is None else float(self.rep[i])}

    def records(self):
        return [self.record(i) for i in range(len(self))]


def combine(s_hog, s_rep, view_ids=None, viewpoints=None, rep=None):
    """Hadamard product of min-max normalized ``s_hog`` with ``s_rep``."""
    s_hog = np.asarray(s_hog, dtype=np.float64)
    s_rep = np.asarray(s_rep, dtype=np.float64)
    if s_hog.shape != s_rep.shape or s_hog.ndim != 1:
        raise ParameterError("s_hog and s_rep must be 1-d and of equal length")
    if len(s_hog) == 0:
        raise ParameterError("empty similarity table")
    ids = np.arange(len(s_hog)) if view_ids is None else np.asarray(view_ids)
    norm = minmax(s_hog)
    return SimilarityTable(ids, viewpoints, s_hog, norm, s_rep, norm * s_rep,
                           None if rep is None else np.asarray(rep, dtype=np.float64))


def rank_views(table, k=TOP_K):
    """Top-``k`` view records by combined similarity."""
    if not 1 <= k <= len(table):
        raise ParameterError(f"k must be in [1, {len(table)}]")
    return [table.record(i) for i in table.order()[:k]]


# -- pose error -------------------------------------------------------------

def relative_pose(Te, Tref=None):
    """``M = Te^-1 Tref`` as a 4x4 array (``Tref`` defaults to identity)."""
    M = Te.inverse().matrix
    return M if Tref is None else M @ Tref.matrix


def pose_error(Tg, Te):
    """``|Te^-1 Tg - I|_F``: zero iff the two poses coincide."""
    return float(np.linalg.norm(relative_pose(Te, Tg) - np.eye(4)))


def iteration_change(Te_prev, Te_cur, Tref=None):
    """``E = |M_cur - M_prev|_F`` between successive estimates."""
    return float(np.linalg.norm(relative_pose(Te_cur, Tref) - relative_pose(Te_prev, Tref)))


# -- features ---------------------------------------------------------------

@dataclass
class ViewFeatures:
    descriptor: object
    points: np.ndarray
    saliency: object = None


def _features(smap, cfg, keep_map):
    return ViewFeatures(oriented_hog(smap, cfg.grid, cfg.bins),
                        extract_points(smap, cfg.point_percentile),
                        smap if keep_map else None)


def depth_features(depth, cfg, keep_map=False):
    return _features(curvilinear_saliency_depth(depth, cfg.deriv_sigma), cfg, keep_map)


def query_saliency(intensity, cfg, mode=None):
    mode = mode or cfg.query_mode
    kw = dict(kappa_rel=cfg.kappa_rel, iterations=cfg.diffusion_iterations)
    if mode == "CS":
        return image_curvilinear_saliency(intensity, cfg.deriv_sigma)
    if mode == "MCS":
        return multi_scale_cs(intensity, cfg.scales, cfg.deriv_sigma, **kw)
    if mode == "MFC":
        return multi_focus_curves(intensity, cfg.scales, cfg.deriv_sigma,
                                  band_radius=cfg.band_radius, **kw)
    raise ParameterError(f"unknown query mode {mode!r}")


def query_features(intensity, cfg, mode=None, keep_map=False):
    return _features(query_saliency(intensity, cfg, mode), cfg, keep_map)


def _map(fn, items, threads):
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))


# -- view database ----------------------------------------------------------

@dataclass
class ViewDatabase:
    mesh: object  # normalized mesh the views were rendered from
    viewpoints: list
    features: list
    stats: object
    pixel_scale: float
    cfg: Config
    normalization: PoseTransform = field(default_factory=PoseTransform)

    def __len__(self):
        return len(self.viewpoints)

    def descriptors(self):
        return np.array([f.descriptor.data for f in self.features])

    def render(self, vp):
        return render_depth(self.mesh, vp, self.cfg.image_size, self.pixel_scale,
                            self.cfg.projection)

    def describe(self, viewpoints, threads=None):
        threads = self.cfg.threads if threads is None else threads
        return _map(lambda vp: depth_features(self.render(vp), self.cfg), list(viewpoints), threads)


def resolve_pixel_scale(mesh, cfg):
    if cfg.pixel_scale > 0:
        return cfg.pixel_scale
    return default_pixel_scale(mesh, cfg.image_size, cfg.fill_distance or cfg.v_min)


def config_viewpoints(cfg):
    return sample_viewpoints(cfg.h_step, cfg.a_step, cfg.v_min, cfg.v_max, cfg.v_step, cfg.h_start)


def build_database(mesh, cfg=None, viewpoints=None, normalize=True, threads=None):
    """Render, detect and describe every viewpoint of the configured grid."""
    cfg = cfg or Config()
    norm = PoseTransform()
    if normalize:
        mesh, norm = pca_normalize(mesh)
    vps = list(viewpoints) if viewpoints is not None else config_viewpoints(cfg)
    if not vps:
        raise ParameterError("empty viewpoint list")
    db = ViewDatabase(mesh, vps, [], None, resolve_pixel_scale(mesh, cfg), cfg, norm)
    db.features = db.describe(vps, threads)
    if len(vps) >= 2:
        db.stats = fit_stats([f.descriptor for f in db.features])
    else:
        # a single view has no spread: plain inner product
        dim = db.features[0].descriptor.data.size
        db.stats = DescriptorStats(np.zeros(dim), np.zeros((dim, dim)), 1.0)
    return db


def score_views(query, features, stats, cfg, view_ids=None, viewpoints=None):
    """Similarity table of one query against a list of :class:`ViewFeatures`."""
    if not features:
        raise ParameterError("no views to score")
    sh = s_hog_batch(query.descriptor, [f.descriptor for f in features], stats, cfg.hog_mode)
    if len(as_points(query.points)) == 0:
        log.warning("query has no feature points; ranking by descriptor only")
        reps = np.zeros(len(features))
        sr = np.ones(len(features))
    else:
        # how many of the view's depth points reappear in the query
        reps = np.array([repeatability(f.points, query.points, cfg.eps_px).rep
                         if len(f.points) else 0.0 for f in features])
        sr = s_rep(reps, cfg.sigma_r, cfg.rep_mode)
    return combine(sh, sr, view_ids, viewpoints, reps)


# -- refinement -------------------------------------------------------------

def _adiff(a, b):
    d = abs(a - b) % 360.0
    return min(d, 360.0 - d)


def coherent_seeds(seeds, coarse_steps, tol=1e-6):
    """Seeds (in rank order) that are pairwise within one coarse grid step."""
    dh, da, dv = coarse_steps
    keep = [seeds[0]]
    for s in seeds[1:]:
        if all(abs(s.elevation_h - k.elevation_h) <= dh + tol
               and _adiff(s.azimuth_a, k.azimuth_a) <= da + tol
               and abs(s.distance_v - k.distance_v) <= dv * (1 + tol) for k in keep):
            keep.append(s)
    return keep


def search_box(seeds, coarse_steps):
    """Per-axis ``(low, high)`` around the seeds, relative to ``seeds[0]``.

    Several seeds span their ``[min, max]`` widened by half a coarse step; a
    lone seed gets one coarse step on each side. Azimuth offsets are taken
    on the circle.
    """
    ref = seeds[0]
    pad = [s if len(seeds) == 1 else 0.5 * s for s in coarse_steps]
    offs = np.array([[s.elevation_h - ref.elevation_h,
                      ((s.azimuth_a - ref.azimuth_a + 180.0) % 360.0) - 180.0,
                      s.distance_v - ref.distance_v] for s in seeds])
    lo = offs.min(axis=0) - pad
    hi = offs.max(axis=0) + pad
    return list(zip(lo, hi))


def _axis(center, lo, hi, step):
    k0 = int(np.ceil(lo / step - 1e-9))
    k1 = int(np.floor(hi / step + 1e-9))
    return [center + k * step for k in range(k0, k1 + 1)]


def grid_around(center, box, steps):
    """Viewpoints ``center + k * step`` inside ``box`` (offsets per axis).

    Elevations outside [0, 180) and non-positive distances are dropped;
    azimuths wrap. The centre itself is always included.
    """
    h0, a0, v0 = center.as_tuple()
    hs = [h for h in _axis(h0, *box[0], steps[0]) if 0.0 <= h < 180.0]
    as_ = _axis(a0, *box[1], steps[1])
    vs = [v for v in _axis(v0, *box[2], steps[2]) if v > 1e-9]
    seen, out = set(), []
    for h in hs:
        for a in as_:
            for v in vs:
                vp = Viewpoint.wrapped(h, a, v)
                key = tuple(np.round(vp.as_tuple(), 9))
                if key not in seen:
                    seen.add(key)
                    out.append(vp)
    return out


@dataclass
class RefineResult:
    viewpoint: Viewpoint
    pose: PoseTransform
    converged: bool
    trace: list
    seeds: list

    def to_json(self):
        h, a, v = self.viewpoint.as_tuple()
        return {"h": h, "a": a, "v": v, "R": [float(x) for x in self.pose.R.ravel()],
                "t": [float(x) for x in self.pose.t], "converged": self.converged,
                "seeds": [list(s.as_tuple()) for s in self.seeds], "trace": self.trace}


def refine_pose(db, query, table, cfg=None, reference=None, threads=None):
    """Local grid refinement around the top-ranked coherent views.

    ``E`` is the Frobenius change of ``M = Te^-1 Tref`` between successive
    rounds (``Tref`` is ``reference`` if given, else the identity); the
    search stops once ``E <= cfg.eps`` or after ``cfg.max_rounds`` rounds.
    When ``reference`` is given each trace entry also carries the absolute
    error ``|M - I|_F``.
    """
    cfg = cfg or db.cfg
    k = min(cfg.top_k, len(table))
    top = [table.viewpoints[r] for r in table.order()[:k]]
    seeds = coherent_seeds(top, cfg.coarse_steps)
    box = search_box(seeds, cfg.coarse_steps)
    steps = list(cfg.fine_steps)
    best = seeds[0]
    best_pose = viewpoint_to_pose(best)

    def entry(rnd, vp, n, s, E):
        pose = viewpoint_to_pose(vp)
        rec = {"round": rnd, "h": vp.elevation_h, "a": vp.azimuth_a, "v": vp.distance_v,
               "n_views": n, "s_combined": s, "E": E}
        if reference is not None:
            rec["abs_error"] = pose_error(reference, pose)
        return rec

    trace = [entry(0, best, len(table), float(table.s_combined[table.order()[0]]), None)]
    converged = False
    for rnd in range(1, cfg.max_rounds + 1):
        cands = grid_around(best, box, steps)
        feats = db.describe(cands, threads)
        t = score_views(query, feats, db.stats, cfg, viewpoints=cands)
        i = int(t.order()[0])
        new, new_pose = cands[i], viewpoint_to_pose(cands[i])
        E = iteration_change(best_pose, new_pose, reference)
        trace.append(entry(rnd, new, len(cands), float(t.s_combined[i]), E))
        log.info("round %d: %d views, best %s, E=%.4g", rnd, len(cands), new.as_tuple(), E)
        best, best_pose = new, new_pose
        if E <= cfg.eps:
            converged = True
            break
        box = [(-s, s) for s in steps]
        steps = [0.5 * s for s in steps]
    if not converged:
        log.warning("refinement did not converge after %d rounds", cfg.max_rounds)
    return RefineResult(best, best_pose, converged, trace, seeds)


def register_query(intensity, db, cfg=None, reference=None, threads=None):
    """Full pipeline for one photograph: features, ranking, refinement."""
    cfg = cfg or db.cfg
    q = query_features(intensity, cfg)
    table = score_views(q, db.features, db.stats, cfg, viewpoints=db.viewpoints)
    result = refine_pose(db, q, table, cfg, reference, threads)
    return table, result
