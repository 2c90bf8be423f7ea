"""Curvilinear features of photographs.

* ``image_curvilinear_saliency``: for the intensity surface ``(x, y, I)`` the
  first fundamental form ``Id + grad I grad I^T`` has eigenvalues
  ``|grad I|^2 + 1`` and ``1``, so the eigen-difference is ``|grad I|^2`` and
  the leading eigenvector is ``grad I / |grad I|``.
* ``multi_scale_cs`` (MCS): saliency on a Perona-Malik pyramid, keeping
  pixels whose normalized saliency clears ``exp(-n)`` on every level.
* ``blur_ratio_stack`` / ``blur_amount``: defocus estimation from the ratio
  of squared gradients before and after re-blurring. For an edge blurred by
  ``s`` and measured with derivative scale ``b``, the ratio at the edge
  centre is ``R = 1 + sigma_i^2 / (s^2 + b^2)``.
* ``multi_focus_curves`` (MFC): MCS support restricted to curves that are in
  focus at every re-blur scale, valued by ``1 / max_i s_i``.
"""
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .imgmath import anisotropic_diffuse, as_field, derivatives1, gaussian_smooth
from .saliency_depth import SaliencyMap

EPS_D = 1e-8
EPS_R = 1e-6
# Smallest blur we report, in pixels; keeps 1/s finite on ideal steps.
S_FLOOR = 0.1
KAPPA_REL = 0.1
DIFFUSION_ITERATIONS = 10
REC601 = (0.299, 0.587, 0.114)


def to_intensity(img, bit_depth=None):
    """Convert an integer or float image (gray or RGB) to luminance in [0, 1]."""
    a = np.asarray(img)
    if bit_depth is None and np.issubdtype(a.dtype, np.integer):
        bit_depth = 16 if a.max(initial=0) > 255 else 8
    a = a.astype(np.float64)
    if bit_depth:
        a = a / (2 ** bit_depth - 1)
    if a.ndim == 3:
        a = a[..., :3] @ np.array(REC601[:a.shape[2]])
    return np.clip(a, 0.0, 1.0)


def _unit(gx, gy):
    n = np.hypot(gx, gy)
    ok = n > 0
    safe = np.where(ok, n, 1.0)
    return np.stack([np.where(ok, gx / safe, 1.0), np.where(ok, gy / safe, 0.0)], -1)


def image_curvilinear_saliency(I, sigma=1.0):
    """Squared gradient magnitude with the gradient direction as orientation."""
    I = as_field(I, "image")
    ix, iy = derivatives1(I, sigma)
    return SaliencyMap(ix * ix + iy * iy, _unit(ix, iy), np.ones(I.shape, bool), "CS")


def pyramid(I, n, kappa_rel=KAPPA_REL, iterations=DIFFUSION_ITERATIONS):
    """``n`` levels: the image itself followed by successive diffusions.

    The conduction constant is ``kappa_rel`` times the image value range, so
    the pyramid is equivariant under affine intensity changes.
    """
    I = as_field(I, "image")
    span = float(I.max() - I.min())
    levels = [I]
    if span == 0:
        return levels * n
    for _ in range(n - 1):
        levels.append(anisotropic_diffuse(levels[-1], iterations, kappa_rel * span))
    return levels


def normalized_levels(I, n, sigma=1.0, **kw):
    """Per-level saliency, each divided by its own maximum."""
    out = []
    for L in pyramid(I, n, **kw):
        v = image_curvilinear_saliency(L, sigma).value
        m = v.max()
        out.append(v / m if m > 0 else np.zeros_like(v))
    return np.stack(out)


def survivors(levels, threshold):
    """Pixels at or above ``threshold`` on every level."""
    return np.all(levels >= threshold, axis=0)


def multi_scale_cs(I, n=5, sigma=1.0, **kw):
    """Multi-scale curvilinear saliency with the ``exp(-n)`` keep rule."""
    if n < 2:
        raise ValueError("n must be >= 2")
    I = as_field(I, "image")
    levels = normalized_levels(I, n, sigma, **kw)
    keep = survivors(levels, np.exp(-n))
    value = np.where(keep, levels.max(axis=0), 0.0)
    orient = image_curvilinear_saliency(I, sigma).orient
    return SaliencyMap(value, orient, np.ones(I.shape, bool), "MCS")


@dataclass
class FocusScaleStack:
    base_sigma: float
    sigmas: np.ndarray  # re-blur scales
    cs: np.ndarray  # squared gradient at base scale
    orient: np.ndarray  # (H, W, 2)
    ridge: np.ndarray  # (H, W) bool: local maxima of cs across the edge
    offset: np.ndarray  # sub-pixel ridge offset along orient
    ratios: np.ndarray  # (k, H, W); NaN off the ridge

    def __post_init__(self):
        self.sigmas = np.asarray(self.sigmas, dtype=np.float64)


def _sample(f, yy, xx):
    return ndimage.map_coordinates(f, [yy, xx], order=1, mode="nearest")


def _log_peak(lm, l0, lp, delta):
    """Value at ``delta`` of the parabola through log samples at -1, 0, +1."""
    return np.exp(l0 + 0.5 * (lp - lm) * delta + 0.5 * (lm - 2 * l0 + lp) * delta ** 2)


def blur_ratio_stack(I, base_sigma=1.0, sigmas=(1.0, 2.0, 3.0, 4.0)):
    """Ratios ``cs / cs_i`` of the squared gradient before and after re-blurring
    by each ``sigmas[i]``, evaluated at ridge pixels of ``cs``.

    Ridge pixels are local maxima of ``cs`` along the gradient direction; the
    peak is located to sub-pixel accuracy with a parabola fitted to the log of
    three samples, which is exact for the Gaussian profile of a blurred edge.
    """
    I = as_field(I, "image")
    sigmas = np.asarray(sigmas, dtype=np.float64)
    if sigmas.ndim != 1 or sigmas.size == 0 or np.any(sigmas <= 0) or np.any(np.diff(sigmas) <= 0):
        raise ValueError("sigmas must be positive and strictly increasing")
    base = image_curvilinear_saliency(I, base_sigma)
    cs, orient = base.value, base.orient
    h, w = I.shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    nx, ny = orient[..., 0], orient[..., 1]
    cm = _sample(cs, yy - ny, xx - nx)
    cp = _sample(cs, yy + ny, xx + nx)
    ridge = (cs > cm) & (cs >= cp) & (cs > EPS_D)
    log = lambda v: np.log(np.maximum(v, 1e-300))  # noqa: E731
    lm, l0, lp = log(cm), log(cs), log(cp)
    curv = lm - 2 * l0 + lp
    delta = np.where(curv < 0, 0.5 * (lm - lp) / np.where(curv < 0, curv, -1.0), 0.0)
    delta = np.clip(delta, -0.5, 0.5)
    peak = _log_peak(lm, l0, lp, delta)
    ratios = np.full((sigmas.size, h, w), np.nan)
    for k, s in enumerate(sigmas):
        ci = image_curvilinear_saliency(gaussian_smooth(I, s), base_sigma).value
        pk = _log_peak(log(_sample(ci, yy - ny, xx - nx)), log(ci),
                       log(_sample(ci, yy + ny, xx + nx)), delta)
        ratios[k][ridge] = peak[ridge] / np.maximum(pk[ridge], EPS_D)
    return FocusScaleStack(float(base_sigma), sigmas, cs, orient, ridge,
                           np.where(ridge, delta, 0.0), ratios)


def blur_amount(stack, propagate_radius=0):
    """Per-scale blur estimates ``s_i`` in pixels, shape ``(k, H, W)``.

    ``s_i^2 = sigma_i^2 / (R_i - 1) - base_sigma^2``: the derivative filter's
    own blur is removed in quadrature. Values are NaN off the ridge unless
    ``propagate_radius > 0``, in which case pixels within that distance of a
    ridge pixel take its estimates.
    """
    r = stack.ratios
    sig = stack.sigmas[:, None, None]
    total2 = sig ** 2 / np.maximum(r - 1.0, EPS_R)
    s = np.sqrt(np.maximum(total2 - stack.base_sigma ** 2, 0.0))
    s = np.maximum(s, S_FLOOR)
    s[np.isnan(r)] = np.nan
    if propagate_radius > 0 and stack.ridge.any():
        dist, (iy, ix) = ndimage.distance_transform_edt(~stack.ridge, return_indices=True)
        near = dist <= propagate_radius
        prop = s[:, iy, ix]
        s = np.where(near[None], prop, np.nan)
    return s


def focus_levels(s, sigmas):
    """Focus in [0, 1] per scale: ``exp(-(s_i / sigma_i)^2)``, equal to
    ``exp(-1 / (R_i - 1))`` in the absence of derivative blur."""
    sig = np.asarray(sigmas, dtype=np.float64)[:, None, None]
    return np.exp(-(s / sig) ** 2)


def multi_focus_curves(I, n=5, sigma=1.0, sigmas=None, band_radius=3.0, **kw):
    """MFC map: MCS support kept only where the nearest salient curve is in
    focus (``focus >= exp(-n)``) at all ``n - 1`` re-blur scales.

    Values are ``1 / max_i s_i``; orientation is the gradient direction.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    I = as_field(I, "image")
    if sigmas is None:
        sigmas = np.arange(1, n, dtype=np.float64)
    sigmas = np.asarray(sigmas, dtype=np.float64)
    if sigmas.size != n - 1:
        raise ValueError("need exactly n - 1 re-blur scales")
    T = np.exp(-n)
    mcs = multi_scale_cs(I, n, sigma, **kw)
    support = mcs.value > 0
    stack = blur_ratio_stack(I, sigma, sigmas)
    curves = stack.ridge & support
    value = np.zeros(I.shape)
    if curves.any():
        s = blur_amount(stack)
        s = np.where(np.isnan(s), np.inf, s)
        in_focus = curves & np.all(focus_levels(s, sigmas) >= T, axis=0)
        sharp = np.where(in_focus, 1.0 / s.max(axis=0), 0.0)
        dist, (iy, ix) = ndimage.distance_transform_edt(~curves, return_indices=True)
        take = support & (dist <= band_radius)
        value = np.where(take, sharp[iy, ix], 0.0)
    orient = image_curvilinear_saliency(I, sigma).orient
    return SaliencyMap(value, orient, np.ones(I.shape, bool), "MFC")
