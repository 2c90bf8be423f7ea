"""Procedural meshes and flat-shaded renders used to build synthetic queries."""
import numpy as np
from scipy.special import erf

from .meshrender import Mesh, PoseTransform, rasterize, viewpoint_to_pose

# Light direction in the camera frame, pointing from the surface to the light
# (up-left and towards the viewer).
LIGHT_DIR = np.array([-0.35, -0.45, -1.0]) / np.linalg.norm([-0.35, -0.45, -1.0])


def _grid_mesh(n_u, n_v, point, wrap_v=True, caps=None):
    """Quad grid over (u, v) in [0,1]x[0,1) mapped by ``point(u, v)``."""
    nv = n_v if wrap_v else n_v + 1
    verts = [point(i / n_u, j / n_v) for i in range(n_u + 1) for j in range(nv)]
    tris = []
    for i in range(n_u):
        for j in range(n_v):
            jn = (j + 1) % n_v if wrap_v else j + 1
            a, b = i * nv + j, i * nv + jn
            c, d = (i + 1) * nv + j, (i + 1) * nv + jn
            tris += [[a, c, b], [b, c, d]]
    verts = np.array(verts, dtype=np.float64)
    tris = np.array(tris, dtype=np.int64)
    if caps:
        for ring, center in caps:
            k = len(verts)
            verts = np.vstack([verts, center])
            idx = [ring * nv + j for j in range(n_v)]
            tris = np.vstack([tris, [[k, idx[j], idx[(j + 1) % n_v]] for j in range(n_v)]])
    return verts, tris


def _weld(verts, tris, tol=1e-12):
    key = np.round(verts / max(tol, 1e-12)).astype(np.int64)
    _, first, inverse = np.unique(key, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.ravel()
    v = verts[first]
    t = inverse[tris]
    keep = (t[:, 0] != t[:, 1]) & (t[:, 1] != t[:, 2]) & (t[:, 0] != t[:, 2])
    return v, t[keep]


def sphere(radius=0.2, n_lat=24, n_lon=48):
    def point(u, v):
        th, ph = np.pi * u, 2 * np.pi * v
        return radius * np.array([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)])
    verts, tris = _weld(*_grid_mesh(n_lat, n_lon, point), tol=1e-9 * radius)
    return Mesh(verts, tris)


def box(sx=0.4, sy=0.25, sz=0.15):
    x, y, z = sx / 2, sy / 2, sz / 2
    v = np.array([[-x, -y, -z], [x, -y, -z], [x, y, -z], [-x, y, -z],
                  [-x, -y, z], [x, -y, z], [x, y, z], [-x, y, z]])
    f = [[0, 2, 1], [0, 3, 2], [4, 5, 6], [4, 6, 7], [0, 1, 5], [0, 5, 4],
         [1, 2, 6], [1, 6, 5], [2, 3, 7], [2, 7, 6], [3, 0, 4], [3, 4, 7]]
    return Mesh(v, np.array(f))


def cylinder(radius=0.1, length=0.4, n_around=48, n_along=8):
    def point(u, v):
        ph = 2 * np.pi * v
        return np.array([radius * np.cos(ph), radius * np.sin(ph), length * (u - 0.5)])
    caps = [(0, [0.0, 0.0, -length / 2]), (n_along, [0.0, 0.0, length / 2])]
    verts, tris = _grid_mesh(n_along, n_around, point, caps=caps)
    return Mesh(verts, tris)


def torus(major=0.16, minor=0.06, n_major=48, n_minor=24):
    def point(u, v):
        th, ph = 2 * np.pi * u, 2 * np.pi * v
        r = major + minor * np.cos(ph)
        return np.array([r * np.cos(th), r * np.sin(th), minor * np.sin(ph)])
    verts, tris = _weld(*_grid_mesh(n_major, n_minor, point), tol=1e-9 * major)
    return Mesh(verts, tris)


def blob(radius=0.18, n_lat=32, n_lon=64, seed=7):
    """Lumpy, asymmetric closed surface (a stand-in for a scanned object)."""
    rng = np.random.default_rng(seed)
    centers = rng.normal(size=(6, 3))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    amps = rng.uniform(0.15, 0.45, size=6)
    widths = rng.uniform(0.35, 0.8, size=6)
    stretch = np.array([1.35, 1.0, 0.8])

    def point(u, v):
        th, ph = np.pi * u, 2 * np.pi * v
        d = np.array([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)])
        bump = np.sum(amps * np.exp(-np.sum((centers - d) ** 2, axis=1) / widths ** 2))
        return radius * (1.0 + bump) * d * stretch / 1.6
    verts, tris = _weld(*_grid_mesh(n_lat, n_lon, point), tol=1e-9 * radius)
    return Mesh(verts, tris)


def merge(*meshes):
    """Concatenate meshes into one triangle soup."""
    verts, tris, k = [], [], 0
    for m in meshes:
        verts.append(m.vertices)
        tris.append(m.triangles + k)
        k += len(m.vertices)
    return Mesh(np.vstack(verts), np.vstack(tris))


def _moved(mesh, offset):
    return Mesh(mesh.vertices + np.asarray(offset, dtype=np.float64), mesh.triangles)


def bracket():
    """An L-shaped block with a peg on one arm: no rotational or mirror
    symmetry, so every viewpoint gives a distinct image."""
    return merge(box(0.36, 0.12, 0.1),
                 _moved(box(0.1, 0.22, 0.1), (-0.13, 0.17, 0.0)),
                 _moved(cylinder(0.04, 0.12, 24, 2), (0.12, 0.0, 0.11)))


PRIMITIVES = {"sphere": sphere, "box": box, "cylinder": cylinder, "torus": torus, "blob": blob}
ASYMMETRIC = {"blob": blob, "bracket": bracket}


def render_shaded(mesh, vp, image_size=256, pixel_scale=0.004, projection="scaled",
                  ambient=0.15, diffuse=0.8, background=0.0):
    """Flat-shaded Lambertian intensity image in [0, 1] with a fixed light."""
    pose = vp if isinstance(vp, PoseTransform) else viewpoint_to_pose(vp)
    _, fid, _ = rasterize(mesh, pose, image_size, pixel_scale, projection)
    p = mesh.vertices[mesh.triangles] @ pose.R.T
    n = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    n /= np.maximum(np.linalg.norm(n, axis=1, keepdims=True), 1e-300)
    n[n[:, 2] > 0] *= -1.0  # face the camera
    shade = ambient + diffuse * np.clip(n @ LIGHT_DIR, 0.0, None)
    img = np.full(fid.shape, float(background))
    fg = fid >= 0
    img[fg] = shade[fid[fg]]
    return np.clip(img, 0.0, 1.0)


def blurred_step(shape, x0, sigma, amplitude=1.0, offset=0.0, angle_deg=0.0):
    """Straight step edge through column ``x0`` (image centre row), convolved
    analytically with a Gaussian of std ``sigma`` and sampled at pixel centres."""
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    t = np.radians(angle_deg)
    d = (xx - x0) * np.cos(t) + (yy - (h - 1) / 2) * np.sin(t)
    if sigma <= 0:
        prof = (d >= 0).astype(np.float64)
    else:
        prof = 0.5 * (1.0 + erf(d / (np.sqrt(2.0) * sigma)))
    return offset + amplitude * prof
