"""Curvilinear saliency of depth images.

For a depth surface ``D(x, y) = (x, y, Z(x, y))`` we form the 2x2 matrix

    M = [[(Zy^2+1) Zxx - Zx Zy Zxy,  (Zy^2+1) Zxy - Zx Zy Zyy],
         [(Zx^2+1) Zxy - Zx Zy Zxx,  (Zx^2+1) Zyy - Zx Zy Zxy]]

which equals ``(1 + |grad Z|^2) I^-1 H`` (first fundamental form ``I``,
Hessian ``H``), take the ordered eigenvalues ``lambda1 >= lambda2`` of
``-M`` and report

    CS = |grad Z| (lambda1 - lambda2),
    CS^2 = |grad Z|^2 ((trace M)^2 - 4 det M).

``M`` is not symmetric in general, so eigenvalues are obtained in closed form
and tiny negative discriminants are clamped to zero. Depth is converted to
pixel units before differentiation so that x, y and Z share one unit.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import EmptyFieldError
from .imgmath import derivatives1, derivatives2, eig2_field
from .meshrender import DepthImage

log = logging.getLogger(__name__)

BOUNDARY_PERCENTILE = 99.0
# Saliency below this (pixel units) is rasterization round-off, not shape.
ZERO_TOL = 1e-9
# The occluding contour is at least as salient as a unit-slope crease.
BOUNDARY_FLOOR = 1.0


@dataclass
class SaliencyMap:
    value: np.ndarray  # (H, W) >= 0
    orient: np.ndarray  # (H, W, 2) unit (x, y) vectors
    mask: np.ndarray  # (H, W) bool, pixels where the detector is defined
    source: str = "CS"

    @property
    def shape(self):
        return self.value.shape

    def oriented(self):
        """The saliency-weighted orientation field ``value * orient``."""
        return self.value[..., None] * self.orient


@dataclass
class DepthShapeField:
    m11: np.ndarray
    m12: np.ndarray
    m21: np.ndarray
    m22: np.ndarray
    grad_norm: np.ndarray
    lambda1: np.ndarray  # eigenvalues of -M, lambda1 >= lambda2
    lambda2: np.ndarray
    e1: np.ndarray  # (H, W, 2) eigenvector of lambda1
    e2: np.ndarray
    kappa1: np.ndarray  # |grad Z| * lambda_i, the weighting CS is built from
    kappa2: np.ndarray
    curvature1: np.ndarray  # principal curvatures of the depth surface, k1 >= k2
    curvature2: np.ndarray
    valid: np.ndarray  # foreground minus a 1-px band along the background
    foreground: np.ndarray
    n_clamped: int = 0

    @property
    def boundary(self):
        return self.foreground & ~self.valid

    def dominant_direction(self):
        """Eigenvector of the eigenvalue with the larger magnitude: the
        direction across a ridge or valley regardless of its sign."""
        use2 = np.abs(self.lambda2) > np.abs(self.lambda1)
        return np.where(use2[..., None], self.e2, self.e1)


def _depth_in_pixels(Z):
    if isinstance(Z, DepthImage):
        return Z.depth / Z.pixel_scale
    return np.asarray(Z, dtype=np.float64)


def _fill_background(z, fg):
    """Replace background by the nearest foreground depth so derivative
    stencils never see the sentinel."""
    if fg.all():
        return z
    _, (iy, ix) = ndimage.distance_transform_edt(~fg, return_indices=True)
    return z[iy, ix]


def depth_shape_operator(Z, sigma=1.0):
    """Per-pixel ``M`` entries, eigen data and curvatures of a depth map.

    ``Z`` is a :class:`DepthImage` (metric depth, converted to pixel units) or
    a bare array already in pixel units; non-finite entries are background.
    """
    z = _depth_in_pixels(Z)
    fg = np.isfinite(z)
    if not fg.any():
        raise EmptyFieldError("depth image has no foreground pixels")
    z = _fill_background(np.where(fg, z, 0.0), fg)
    zx, zy = derivatives1(z, sigma)
    zxx, zxy, zyy = derivatives2(z, sigma)
    cross = zx * zy
    m11 = (zy ** 2 + 1) * zxx - cross * zxy
    m12 = (zy ** 2 + 1) * zxy - cross * zyy
    m21 = (zx ** 2 + 1) * zxy - cross * zxx
    m22 = (zx ** 2 + 1) * zyy - cross * zxy
    l1, l2, e1x, e1y, e2x, e2y, n_clamped = eig2_field(-m11, -m12, -m21, -m22)
    g2 = zx ** 2 + zy ** 2
    g = np.sqrt(g2)
    alpha3 = (1.0 + g2) ** -1.5
    # eigenvalues of M are -lambda; shape operator is alpha^3 M
    c1, c2 = -alpha3 * l2, -alpha3 * l1
    if fg.all():
        valid = fg.copy()
    else:
        valid = fg & ~ndimage.binary_dilation(~fg, structure=np.ones((3, 3), bool))
    if n_clamped:
        log.debug("clamped %d negative discriminants", n_clamped)
    return DepthShapeField(m11, m12, m21, m22, g, l1, l2,
                           np.stack([e1x, e1y], -1), np.stack([e2x, e2y], -1),
                           g * l1, g * l2, c1, c2, valid, fg, n_clamped)


def silhouette_normals(fg, sigma=1.0):
    """Unit normals of the foreground outline from the smoothed mask gradient."""
    mx, my = derivatives1(fg.astype(np.float64), sigma)
    n = np.hypot(mx, my)
    ok = n > 1e-12
    out = np.zeros(fg.shape + (2,))
    out[..., 0] = np.where(ok, mx / np.where(ok, n, 1.0), 1.0)
    out[..., 1] = np.where(ok, my / np.where(ok, n, 1.0), 0.0)
    return out


def curvilinear_saliency_depth(Z, sigma=1.0, field=None):
    """CS map of a depth image.

    Interior pixels get ``|grad Z| (lambda1 - lambda2)``, with values below
    ``ZERO_TOL`` set to 0; the occluding contour (foreground pixels touching
    background) gets the 99th percentile of the interior values, but no less
    than ``BOUNDARY_FLOOR``; background is 0.
    """
    f = field if field is not None else depth_shape_operator(Z, sigma)
    value = np.where(f.valid, f.grad_norm * (f.lambda1 - f.lambda2), 0.0)
    value = np.where(value > ZERO_TOL, value, 0.0)
    orient = f.dominant_direction()
    boundary = f.boundary
    if boundary.any():
        interior = value[f.valid]
        cap = np.percentile(interior, BOUNDARY_PERCENTILE) if interior.size else 0.0
        value[boundary] = max(cap, BOUNDARY_FLOOR)
        normals = silhouette_normals(f.foreground)
        orient = np.where(boundary[..., None], normals, orient)
    return SaliencyMap(value, orient, f.foreground.copy(), "CS")


def cs_squared_closed_form(field):
    """``|grad Z|^2 ((trace M)^2 - 4 det M)``, the squared saliency without
    any eigen decomposition."""
    tr = field.m11 + field.m22
    det = field.m11 * field.m22 - field.m12 * field.m21
    return field.grad_norm ** 2 * (tr ** 2 - 4.0 * det)
