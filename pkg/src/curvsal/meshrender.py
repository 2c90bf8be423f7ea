"""Triangle meshes, canonical PCA frame, viewpoint grids and depth rendering.

Camera convention: a viewpoint ``(h, a, v)`` places the camera at
``v * (sin h cos a, sin h sin a, cos h)`` (h is measured from world +z)
looking at the origin. The image "up" is world +z projected on the image
plane (+x at the poles); image x runs right, image y runs down, camera z
points forward so depth is the camera-frame z coordinate.

Projection is orthographic. With ``projection="scaled"`` (the default) the
pixel footprint grows linearly with the viewing distance, which keeps the
distance observable in the rendered image; ``"orthographic"`` uses a fixed
footprint.
"""
import logging
from dataclasses import dataclass, field
from math import cos, radians, sin

import numba
import numpy as np

from .errors import DegenerateGeometryError, EmptyMeshError, MeshParseError, ParameterError

log = logging.getLogger(__name__)

AREA_TOL = 1e-12
FILL_FRACTION = 0.8


@dataclass
class Mesh:
    vertices: np.ndarray  # (N, 3) float64, meters
    triangles: np.ndarray  # (M, 3) int64

    def __post_init__(self):
        self.vertices = np.ascontiguousarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.ascontiguousarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if self.triangles.size and (self.triangles.min() < 0
                                    or self.triangles.max() >= len(self.vertices)):
            raise ParameterError("triangle index out of range")

    @property
    def circumradius(self):
        """Largest vertex distance from the origin."""
        return float(np.sqrt((self.vertices ** 2).sum(axis=1).max()))

    def triangle_areas(self):
        p = self.vertices[self.triangles]
        return 0.5 * np.linalg.norm(np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1)

    def transformed(self, pose):
        v = self.vertices @ pose.R.T + pose.t
        return Mesh(v, self.triangles.copy())


def drop_degenerate(mesh):
    keep = mesh.triangle_areas() > AREA_TOL
    return Mesh(mesh.vertices, mesh.triangles[keep]), int((~keep).sum())


def load_mesh(path):
    """Read a Wavefront OBJ file (``v`` and ``f`` records only).

    Faces with more than three corners are fan-triangulated; negative
    indices count back from the most recent vertex.
    """
    verts, tris = [], []
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for lineno, raw in enumerate(fh, start=1):
            parts = raw.split("#", 1)[0].split()
            if not parts:
                continue
            tag = parts[0]
            try:
                if tag == "v":
                    if len(parts) < 4:
                        raise ValueError("vertex needs 3 coordinates")
                    verts.append([float(p) for p in parts[1:4]])
                elif tag == "f":
                    idx = []
                    for p in parts[1:]:
                        k = int(p.split("/")[0])
                        if k == 0:
                            raise ValueError("index 0 is invalid in OBJ")
                        k = k - 1 if k > 0 else len(verts) + k
                        if not 0 <= k < len(verts):
                            raise ValueError(f"vertex index {p} out of range")
                        idx.append(k)
                    if len(idx) < 3:
                        raise ValueError("face needs at least 3 vertices")
                    for j in range(1, len(idx) - 1):
                        tris.append([idx[0], idx[j], idx[j + 1]])
            except ValueError as exc:
                raise MeshParseError(str(exc), path=path, line=lineno) from None
    if not tris:
        raise EmptyMeshError(f"{path}: mesh has no faces")
    mesh, dropped = drop_degenerate(Mesh(np.array(verts), np.array(tris)))
    if len(mesh.triangles) == 0:
        raise EmptyMeshError(f"{path}: all faces are degenerate")
    log.info("loaded %s: %d vertices, %d triangles (%d degenerate dropped)",
             path, len(mesh.vertices), len(mesh.triangles), dropped)
    return mesh


def save_mesh(mesh, path):
    with open(path, "w", encoding="utf-8") as fh:
        for x, y, z in mesh.vertices.tolist():
            fh.write(f"v {x!r} {y!r} {z!r}\n")
        for a, b, c in mesh.triangles.tolist():
            fh.write(f"f {a + 1} {b + 1} {c + 1}\n")


@dataclass(frozen=True)
class Viewpoint:
    elevation_h: float  # degrees from world +z, [0, 180)
    azimuth_a: float  # degrees, [0, 360)
    distance_v: float  # meters

    def __post_init__(self):
        if not 0.0 <= self.elevation_h < 180.0:
            raise ParameterError(f"elevation {self.elevation_h} outside [0, 180)")
        if not 0.0 <= self.azimuth_a < 360.0:
            raise ParameterError(f"azimuth {self.azimuth_a} outside [0, 360)")
        if not self.distance_v > 0:
            raise ParameterError(f"distance {self.distance_v} must be positive")

    @classmethod
    def wrapped(cls, h, a, v):
        """Build a viewpoint, clamping elevation and wrapping azimuth."""
        h = min(max(float(h), 0.0), 180.0 - 1e-9)
        a = float(a) % 360.0
        if a >= 360.0:
            a = 0.0
        return cls(h, a, float(v))

    def as_tuple(self):
        return (self.elevation_h, self.azimuth_a, self.distance_v)

    def camera_center(self):
        h, a = radians(self.elevation_h), radians(self.azimuth_a)
        return self.distance_v * np.array([sin(h) * cos(a), sin(h) * sin(a), cos(h)])


@dataclass
class PoseTransform:
    """Rigid world-to-camera transform stored as a 4x4 homogeneous matrix."""

    matrix: np.ndarray = field(default_factory=lambda: np.eye(4))

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (4, 4):
            raise ParameterError("pose matrix must be 4x4")
        R = m[:3, :3]
        if (np.abs(R.T @ R - np.eye(3)).max() > 1e-9 or abs(np.linalg.det(R) - 1.0) > 1e-9
                or np.abs(m[3] - [0, 0, 0, 1]).max() > 0):
            raise ParameterError("pose matrix is not a proper rigid transform")
        self.matrix = m

    @classmethod
    def from_rt(cls, R, t):
        m = np.eye(4)
        m[:3, :3] = R
        m[:3, 3] = t
        return cls(m)

    @property
    def R(self):
        return self.matrix[:3, :3]

    @property
    def t(self):
        return self.matrix[:3, 3]

    def inverse(self):
        return PoseTransform.from_rt(self.R.T, -self.R.T @ self.t)

    def __matmul__(self, other):
        m = self.matrix @ other.matrix
        return PoseTransform.from_rt(m[:3, :3], m[:3, 3])

    def to_record(self, model, vp):
        return {"model": model, "h_deg": vp.elevation_h, "a_deg": vp.azimuth_a,
                "v_m": vp.distance_v, "R": [float(x) for x in self.R.ravel()],
                "t": [float(x) for x in self.t]}

    @classmethod
    def from_record(cls, rec):
        return cls.from_rt(np.array(rec["R"], dtype=np.float64).reshape(3, 3),
                           np.array(rec["t"], dtype=np.float64))


def pca_normalize(mesh):
    """Center the vertex cloud and rotate its principal axes onto x, y, z.

    Each axis is oriented so the third moment of the coordinates along it is
    non-negative; when that moment vanishes (symmetric shapes) the first
    vertex, in file order, with a non-zero coordinate decides. The third axis
    is then fixed by ``det(R) = +1``.
    """
    v = mesh.vertices
    if len(v) < 3:
        raise DegenerateGeometryError("need at least 3 vertices")
    c = v.mean(axis=0)
    d = v - c
    cov = d.T @ d / len(v)
    w, U = np.linalg.eigh(cov)
    order = np.argsort(w)[::-1]
    w, U = w[order], U[:, order]
    scale = max(w[0], 1e-300)
    if w[1] <= 1e-12 * scale:
        raise DegenerateGeometryError("vertices are collinear")
    R = U.T.copy()
    proj = d @ R.T
    tol = 1e-9 * np.sqrt(scale)
    for k in range(3):
        m3 = np.mean(proj[:, k] ** 3)
        if abs(m3) > 1e-9 * scale ** 1.5:
            flip = m3 < 0
        else:
            nz = np.flatnonzero(np.abs(proj[:, k]) > tol)
            flip = bool(nz.size) and proj[nz[0], k] < 0
        if flip:
            R[k] = -R[k]
    if np.linalg.det(R) < 0:
        R[2] = -R[2]
    pose = PoseTransform.from_rt(R, -R @ c)
    return mesh.transformed(pose), pose


def _grid(start, stop, step, inclusive):
    n = (stop - start) / step
    count = int(np.floor(n + 1e-9)) + 1 if inclusive else int(np.ceil(n - 1e-9))
    return [start + i * step for i in range(max(count, 0))]


def sample_viewpoints(h_step=50.0, a_step=20.0, v_min=0.3, v_max=2.0, v_step=0.3, h_start=0.0):
    """Cartesian viewpoint grid; elevation outermost, distance innermost.

    Elevation covers [h_start, 180), azimuth [0, 360) and distance
    ``v_min, v_min + v_step, ... <= v_max``. A positive ``h_start`` keeps
    the grid off the pole, where every azimuth gives the same image.
    """
    if not (h_step > 0 and a_step > 0 and v_step > 0):
        raise ParameterError("grid steps must be positive")
    if not 0 < v_min <= v_max:
        raise ParameterError("need 0 < v_min <= v_max")
    if not 0.0 <= h_start < 180.0:
        raise ParameterError("h_start must lie in [0, 180)")
    hs = _grid(h_start, 180.0, h_step, False)
    as_ = _grid(0.0, 360.0, a_step, False)
    vs = _grid(v_min, v_max, v_step, True)
    views = [Viewpoint(h, a, v) for h in hs for a in as_ for v in vs]
    if not views:
        raise ParameterError("empty viewpoint grid")
    return views


def viewpoint_to_pose(vp):
    """World-to-camera transform of the look-at camera described above."""
    C = vp.camera_center()
    fwd = -C / np.linalg.norm(C)
    # x = fwd x up spans the same frame as projecting up onto the image plane,
    # without the cancellation that breaks orthogonality just off the poles
    x_cam = np.cross(fwd, [0.0, 0.0, 1.0])
    if np.linalg.norm(x_cam) < 1e-9:
        x_cam = np.cross(fwd, [1.0, 0.0, 0.0])
    x_cam /= np.linalg.norm(x_cam)
    y_cam = np.cross(fwd, x_cam)
    R = np.vstack([x_cam, y_cam, fwd])
    return PoseTransform.from_rt(R, -R @ C)


def default_pixel_scale(mesh, image_size=256, fill_distance=1.0):
    """Pixel footprint at 1 m such that the bounding sphere spans
    ``FILL_FRACTION`` of the frame when viewed from ``fill_distance``."""
    return 2.0 * mesh.circumradius / (FILL_FRACTION * image_size * fill_distance)


@dataclass
class DepthImage:
    depth: np.ndarray  # (H, W), +inf on background
    viewpoint: object = None
    pixel_scale: float = 1.0  # meters per pixel in this image

    @property
    def mask(self):
        return np.isfinite(self.depth)

    @property
    def shape(self):
        return self.depth.shape


@numba.njit(cache=True, nogil=True)
def _rasterize(px, py, pz, tris, height, width):
    zbuf = np.full((height, width), np.inf)
    fid = np.full((height, width), -1, dtype=np.int64)
    for f in range(tris.shape[0]):
        i0, i1, i2 = tris[f, 0], tris[f, 1], tris[f, 2]
        x0, y0, z0 = px[i0], py[i0], pz[i0]
        x1, y1, z1 = px[i1], py[i1], pz[i1]
        x2, y2, z2 = px[i2], py[i2], pz[i2]
        area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
        if abs(area) < 1e-12:
            continue
        cmin = max(int(np.ceil(min(x0, x1, x2) - 1e-9)), 0)
        cmax = min(int(np.floor(max(x0, x1, x2) + 1e-9)), width - 1)
        rmin = max(int(np.ceil(min(y0, y1, y2) - 1e-9)), 0)
        rmax = min(int(np.floor(max(y0, y1, y2) + 1e-9)), height - 1)
        inv = 1.0 / area
        eps = 1e-9
        for r in range(rmin, rmax + 1):
            for c in range(cmin, cmax + 1):
                w0 = ((x1 - c) * (y2 - r) - (x2 - c) * (y1 - r)) * inv
                w1 = ((x2 - c) * (y0 - r) - (x0 - c) * (y2 - r)) * inv
                w2 = 1.0 - w0 - w1
                if w0 < -eps or w1 < -eps or w2 < -eps:
                    continue
                z = z0 + w1 * (z1 - z0) + w2 * (z2 - z0)
                if z < zbuf[r, c]:
                    zbuf[r, c] = z
                    fid[r, c] = f
    return zbuf, fid


def footprint(distance, pixel_scale, projection="scaled"):
    if projection == "scaled":
        return pixel_scale * distance
    if projection == "orthographic":
        return pixel_scale
    raise ParameterError(f"unknown projection {projection!r}")


def rasterize(mesh, pose, image_size=256, pixel_scale=0.004, projection="scaled"):
    """Z-buffer the mesh seen through ``pose``.

    Returns ``(depth, face_index, footprint)``; background depth is +inf and
    background face index is -1.
    """
    if isinstance(image_size, (int, np.integer)):
        height = width = int(image_size)
    else:
        height, width = (int(s) for s in image_size)
    cam = mesh.vertices @ pose.R.T + pose.t
    s = footprint(float(pose.t[2]), pixel_scale, projection)
    px = cam[:, 0] / s + 0.5 * width - 0.5
    py = cam[:, 1] / s + 0.5 * height - 0.5
    zbuf, fid = _rasterize(px, py, np.ascontiguousarray(cam[:, 2]),
                           mesh.triangles, height, width)
    return zbuf, fid, s


def render_depth(mesh, vp, image_size=256, pixel_scale=0.004, projection="scaled"):
    """Orthographic depth image of ``mesh`` from viewpoint ``vp``.

    ``pixel_scale`` is the pixel footprint in meters at 1 m distance
    (``"scaled"``) or the fixed footprint (``"orthographic"``).
    """
    pose = vp if isinstance(vp, PoseTransform) else viewpoint_to_pose(vp)
    zbuf, _, s = rasterize(mesh, pose, image_size, pixel_scale, projection)
    if not np.isfinite(zbuf).any():
        log.warning("mesh entirely outside the view frustum for %s", vp)
    return DepthImage(zbuf, vp if isinstance(vp, Viewpoint) else None, s)
