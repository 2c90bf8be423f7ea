"""Dense image numerics: Gaussian smoothing and derivatives, Perona-Malik
diffusion, and closed-form eigen decomposition of 2x2 matrices.

Fields are plain 2D float64 arrays indexed ``[row, col]`` = ``[y, x]``.
All filters use replicate ("nearest") borders.
"""
from math import ceil
from typing import NamedTuple

import numpy as np
from scipy.ndimage import correlate1d

from .errors import NumericDomainError, ParameterError

# Discriminants down to -DISC_TOL * scale are treated as round-off and clamped.
DISC_TOL = 1e-12


def as_field(f, name="field"):
    f = np.asarray(f, dtype=np.float64)
    if f.ndim != 2 or f.size == 0:
        raise ParameterError(f"{name} must be a non-empty 2D array, got shape {f.shape}")
    if not np.all(np.isfinite(f)):
        raise ParameterError(f"{name} contains non-finite values")
    return f


def gaussian_kernel(sigma, order=0):
    """Sampled 1D Gaussian (derivative) kernel for use with ``correlate1d``.

    The kernels are moment-normalized so that smoothing reproduces constants,
    the first derivative is exact on linear ramps and the second derivative is
    exact on quadratics. ``sigma == 0`` gives central differences.
    """
    if sigma < 0:
        raise ParameterError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return {0: np.array([1.0]),
                1: np.array([-0.5, 0.0, 0.5]),
                2: np.array([1.0, -2.0, 1.0])}[order]
    radius = max(1, int(ceil(3.0 * sigma)))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    g = np.exp(-0.5 * (x / sigma) ** 2)
    if order == 0:
        return g / g.sum()
    if order == 1:
        k = x * g
        return k / np.sum(k * x)
    if order == 2:
        k = (x ** 2 - np.sum(x ** 2 * g) / g.sum()) * g
        return k / (0.5 * np.sum(k * x ** 2))
    raise ParameterError(f"unsupported derivative order {order}")


def _separable(f, kx, ky):
    out = correlate1d(f, kx, axis=1, mode="nearest")
    return correlate1d(out, ky, axis=0, mode="nearest")


def gaussian_smooth(f, sigma):
    """Separable Gaussian blur, kernel radius ``ceil(3 sigma)``."""
    f = as_field(f)
    if not sigma > 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    g = gaussian_kernel(sigma, 0)
    return _separable(f, g, g)


def derivatives1(f, sigma=1.0):
    """First derivatives ``(fx, fy)``; x runs along columns, y along rows."""
    f = as_field(f)
    g0 = gaussian_kernel(sigma, 0)
    g1 = gaussian_kernel(sigma, 1)
    return _separable(f, g1, g0), _separable(f, g0, g1)


def derivatives2(f, sigma=1.0):
    """Second derivatives ``(fxx, fxy, fyy)``."""
    f = as_field(f)
    g0 = gaussian_kernel(sigma, 0)
    g1 = gaussian_kernel(sigma, 1)
    g2 = gaussian_kernel(sigma, 2)
    return _separable(f, g2, g0), _separable(f, g1, g1), _separable(f, g0, g2)


class Eig2(NamedTuple):
    lambda1: float
    lambda2: float
    e1: tuple
    e2: tuple


def _disc_scale(tr, det):
    return 1.0 + tr * tr + 4.0 * np.abs(det)


def _eigvec(a, b, c, d, lam, scale):
    """Unit eigenvector of [[a, b], [c, d]] for eigenvalue ``lam`` (vectorized).

    Picks whichever of the two null-space candidates is better conditioned;
    falls back to ``(1, 0)`` where the matrix is a multiple of the identity.
    """
    v1x, v1y = b, lam - a
    v2x, v2y = lam - d, c
    n1 = np.hypot(v1x, v1y)
    n2 = np.hypot(v2x, v2y)
    use1 = n1 >= n2
    vx = np.where(use1, v1x, v2x)
    vy = np.where(use1, v1y, v2y)
    n = np.maximum(n1, n2)
    tiny = n <= 1e-14 * scale
    n = np.where(tiny, 1.0, n)
    vx = np.where(tiny, 1.0, vx / n)
    vy = np.where(tiny, 0.0, vy / n)
    return _canonical_sign(vx, vy)


def _canonical_sign(vx, vy):
    # first non-negligible component positive
    flip = np.where(np.abs(vx) > 1e-12, vx < 0, vy < 0)
    return np.where(flip, -vx, vx), np.where(flip, -vy, vy)


def eig2_field(m11, m12, m21, m22):
    """Vectorized eigen decomposition of per-pixel real 2x2 matrices.

    Returns ``(l1, l2, e1x, e1y, e2x, e2y, n_clamped)`` with ``l1 >= l2``.
    Negative discriminants (possible for non-symmetric input) are clamped to
    zero and counted in ``n_clamped`` rather than raised.
    """
    a, b, c, d = (np.asarray(m, dtype=np.float64) for m in (m11, m12, m21, m22))
    tr = a + d
    det = a * d - b * c
    disc = tr * tr - 4.0 * det
    n_clamped = int(np.count_nonzero(disc < 0))
    root = np.sqrt(np.maximum(disc, 0.0))
    l1 = 0.5 * (tr + root)
    l2 = 0.5 * (tr - root)
    scale = np.abs(a) + np.abs(b) + np.abs(c) + np.abs(d) + 1e-300
    e1x, e1y = _eigvec(a, b, c, d, l1, scale)
    e2x, e2y = _eigvec(a, b, c, d, l2, scale)
    # repeated eigenvalue or symmetric input: keep the basis orthonormal
    ortho = (b == c) | (root <= 1e-14 * scale)
    px, py = _canonical_sign(-e1y, e1x)
    e2x = np.where(ortho, px, e2x)
    e2y = np.where(ortho, py, e2y)
    return l1, l2, e1x, e1y, e2x, e2y, n_clamped


def eig2(m11, m12, m21, m22):
    """Eigenvalues and unit eigenvectors of a real 2x2 matrix with real spectrum.

    >>> eig2(2.0, 0.0, 0.0, 1.0).lambda1
    2.0
    """
    tr = m11 + m22
    det = m11 * m22 - m12 * m21
    disc = tr * tr - 4.0 * det
    if disc < -DISC_TOL * _disc_scale(tr, det):
        raise NumericDomainError(f"complex spectrum: discriminant {disc:.3e} < 0")
    l1, l2, e1x, e1y, e2x, e2y, _ = eig2_field(m11, m12, m21, m22)
    return Eig2(float(l1), float(l2), (float(e1x), float(e1y)), (float(e2x), float(e2y)))


def anisotropic_diffuse(f, iterations=10, kappa=0.02, step=0.2):
    """Perona-Malik diffusion with exponential conduction on a 4-neighbourhood.

    Borders are insulating (zero flux), so the value range never grows.
    """
    f = as_field(f)
    if iterations < 1:
        raise ParameterError("iterations must be >= 1")
    if not kappa > 0:
        raise ParameterError("kappa must be positive")
    if not 0 < step <= 0.25:
        raise ParameterError("step must be in (0, 0.25] for stability")
    u = f.copy()
    for _ in range(iterations):
        dy = np.diff(u, axis=0)
        dx = np.diff(u, axis=1)
        fy = np.exp(-(dy / kappa) ** 2) * dy
        fx = np.exp(-(dx / kappa) ** 2) * dx
        upd = np.zeros_like(u)
        upd[:-1, :] += fy
        upd[1:, :] -= fy
        upd[:, :-1] += fx
        upd[:, 1:] -= fx
        u += step * upd
    return u
