import numpy as np
import pytest
from hypothesis import given, strategies as st

from curvsal import synthetic
from curvsal.errors import DegenerateGeometryError, EmptyMeshError, MeshParseError, ParameterError
from curvsal.meshrender import (DepthImage, Mesh, PoseTransform, Viewpoint, load_mesh,
                                pca_normalize, rasterize, render_depth, sample_viewpoints,
                                save_mesh, viewpoint_to_pose)

angles_h = st.floats(0, 179.9)
angles_a = st.floats(0, 359.9)
dists = st.floats(0.2, 3.0)


def write(tmp_path, text, name="m.obj"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def rot_z(deg):
    t = np.radians(deg)
    return np.array([[np.cos(t), -np.sin(t), 0], [np.sin(t), np.cos(t), 0], [0, 0, 1]])


# -- load_mesh ----------------------------------------------------------------------------

def test_load_single_triangle(tmp_path):
    m = load_mesh(write(tmp_path, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n"))
    assert m.vertices.shape == (3, 3) and m.triangles.tolist() == [[0, 1, 2]]


def test_load_quad_is_fan_triangulated(tmp_path):
    m = load_mesh(write(tmp_path, "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1 2/2 3/3 4/4\n"))
    assert m.triangles.tolist() == [[0, 1, 2], [0, 2, 3]]


def test_load_negative_indices_and_comments(tmp_path):
    text = "# header\nvn 0 0 1\nv 0 0 0\nv 1 0 0\nv 0 1 0 # last\nf -3 -2 -1\n"
    assert load_mesh(write(tmp_path, text)).triangles.tolist() == [[0, 1, 2]]


def test_load_drops_degenerate(tmp_path):
    text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 2 0 0\nf 1 2 3\nf 1 2 4\n"
    assert len(load_mesh(write(tmp_path, text)).triangles) == 1


def test_load_no_faces(tmp_path):
    with pytest.raises(EmptyMeshError):
        load_mesh(write(tmp_path, "v 0 0 0\nv 1 0 0\n"))


def test_load_parse_error_has_line(tmp_path):
    with pytest.raises(MeshParseError) as exc:
        load_mesh(write(tmp_path, "v 0 0 0\nv 1 0 x\n"))
    assert exc.value.line == 2
    with pytest.raises(MeshParseError):
        load_mesh(write(tmp_path, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n"))


def test_save_load_round_trip(tmp_path):
    m = synthetic.box()
    p = str(tmp_path / "box.obj")
    save_mesh(m, p)
    back = load_mesh(p)
    assert np.array_equal(back.vertices, m.vertices)
    assert np.array_equal(back.triangles, m.triangles)


# -- pca_normalize --------------------------------------------------------------------------

def test_pca_centered_box_is_axis_aligned():
    _, T = pca_normalize(synthetic.box(0.4, 0.25, 0.15))
    assert np.allclose(np.abs(T.R), np.eye(3), atol=1e-9)


def test_pca_undoes_rotation_about_z():
    box = synthetic.box(0.4, 0.25, 0.15)
    turned = box.transformed(PoseTransform.from_rt(rot_z(90), np.zeros(3)))
    m, _ = pca_normalize(turned)
    # covariance eigen oracle: extents along x, y, z sorted decreasing
    ext = m.vertices.max(axis=0) - m.vertices.min(axis=0)
    assert np.allclose(ext, [0.4, 0.25, 0.15], atol=1e-9)


def test_pca_centroid_at_origin():
    s = synthetic.sphere(1.0)
    moved = s.transformed(PoseTransform.from_rt(np.eye(3), [3.0, -2.0, 5.0]))
    m, _ = pca_normalize(moved)
    assert np.linalg.norm(m.vertices.mean(axis=0)) < 1e-9


def test_pca_idempotent():
    m, _ = pca_normalize(synthetic.blob())
    _, T2 = pca_normalize(m)
    assert np.abs(T2.matrix - np.eye(4)).max() < 1e-6


def test_pca_collinear_raises():
    m = Mesh(np.array([[0, 0, 0], [1, 1, 1], [2, 2, 2.0]]), np.array([[0, 1, 2]]))
    with pytest.raises(DegenerateGeometryError):
        pca_normalize(m)


# -- viewpoints --------------------------------------------------------------------------------

def test_grid_small():
    vps = sample_viewpoints(90, 180, 1, 1, 1)
    assert [v.as_tuple() for v in vps] == [(0, 0, 1), (0, 180, 1), (90, 0, 1), (90, 180, 1)]


def test_grid_default_count():
    # independent enumeration: h in [0,180) step 50, a in [0,360) step 20, v 0.3..2.0 step 0.3
    nh = len([h for h in range(0, 180, 50)])
    na = len([a for a in range(0, 360, 20)])
    nv = len([k for k in range(1, 100) if 0.3 * k <= 2.0 + 1e-9])
    assert len(sample_viewpoints()) == nh * na * nv == 432


def test_grid_single_azimuth():
    assert {v.azimuth_a for v in sample_viewpoints(90, 360, 1, 1, 1)} == {0.0}


def test_grid_order_h_outer_v_inner():
    vps = sample_viewpoints(60, 120, 0.5, 1.0, 0.5)
    assert [v.as_tuple() for v in vps[:3]] == [(0, 0, 0.5), (0, 0, 1.0), (0, 120, 0.5)]


def test_grid_rejects():
    with pytest.raises(ParameterError):
        sample_viewpoints(0, 20, 0.3, 2, 0.3)
    with pytest.raises(ParameterError):
        sample_viewpoints(50, 20, 2, 1, 0.3)


@pytest.mark.parametrize("h,a,v", [(-1, 0, 1), (180, 0, 1), (0, 360, 1), (0, 0, 0)])
def test_viewpoint_invariants(h, a, v):
    with pytest.raises(ParameterError):
        Viewpoint(h, a, v)


def test_pose_rejects_reflection():
    with pytest.raises(ParameterError):
        PoseTransform(np.diag([1.0, 1.0, -1.0, 1.0]))


# -- viewpoint_to_pose ----------------------------------------------------------------------------

def test_pose_on_x_axis():
    T = viewpoint_to_pose(Viewpoint(90, 0, 1))
    cam_center = -T.R.T @ T.t
    assert np.allclose(cam_center, [1, 0, 0], atol=1e-12)
    assert np.allclose(T.R[2], [-1, 0, 0], atol=1e-12)  # looks at the origin
    assert np.allclose(T.R[1], [0, 0, -1], atol=1e-12)  # image y down = world -z


def test_pose_pole_fallback():
    T = viewpoint_to_pose(Viewpoint(0, 0, 1))
    assert np.allclose(T.R[2], [0, 0, -1], atol=1e-12)
    assert np.allclose(T.R[1], [-1, 0, 0], atol=1e-12)


@given(angles_h, angles_a, dists)
def test_pose_is_rigid(h, a, v):
    T = viewpoint_to_pose(Viewpoint(h, a, v))
    assert np.abs(T.R.T @ T.R - np.eye(3)).max() < 1e-9
    assert abs(np.linalg.det(T.R) - 1) < 1e-9
    assert np.array_equal(T.matrix[3], [0, 0, 0, 1])
    assert np.abs(T.t - [0, 0, v]).max() < 1e-12 * (1 + v)


# -- rendering -----------------------------------------------------------------------------------

def test_parallel_triangle_exact_depth():
    m = Mesh(np.array([[-1, -1, 0], [1, -1, 0], [0, 1, 0.0]]), np.array([[0, 1, 2]]))
    d = render_depth(m, PoseTransform.from_rt(np.eye(3), [0, 0, 2.5]), 32, 0.05,
                     "orthographic")
    assert np.isfinite(d.depth).sum() > 100
    assert np.all(d.depth[np.isfinite(d.depth)] == 2.5)


def test_zbuffer_keeps_nearest():
    v = np.array([[-1, -1, 0], [1, -1, 0], [0, 1, 0],
                  [-1, -1, 0.5], [1, -1, 0.5], [0, 1, 0.5]], float)
    m = Mesh(v, np.array([[3, 4, 5], [0, 1, 2]]))
    d = render_depth(m, PoseTransform.from_rt(np.eye(3), [0, 0, 1]), 32, 0.05, "orthographic")
    assert np.all(d.depth[np.isfinite(d.depth)] == 1.0)


def test_sphere_center_depth():
    s = synthetic.sphere(1.0, 48, 96)
    for vp in (Viewpoint(90, 0, 3), Viewpoint(40, 130, 2.5)):
        d = render_depth(s, vp, 65, 0.05, "orthographic")
        # ray through the image centre hits the sphere at distance v - 1
        assert abs(d.depth[32, 32] - (vp.distance_v - 1)) <= 0.05


def test_render_matches_pose_render():
    m = synthetic.blob()
    vp = Viewpoint(70, 200, 1.0)
    a = render_depth(m, vp, 64, 0.005)
    b = render_depth(m, viewpoint_to_pose(vp), 64, 0.005)
    assert np.array_equal(a.depth, b.depth)
    assert a.pixel_scale == b.pixel_scale == 0.005


def test_render_outside_frustum_is_background(caplog):
    m = synthetic.box().transformed(PoseTransform.from_rt(np.eye(3), [50, 0, 0]))
    d = render_depth(m, Viewpoint(0, 0, 2), 32, 0.01)
    assert not np.isfinite(d.depth).any()
    assert "outside" in caplog.text


def test_render_deterministic():
    m = synthetic.torus()
    vp = Viewpoint(50, 40, 0.9)
    assert np.array_equal(render_depth(m, vp, 96, 0.004).depth,
                          render_depth(m, vp, 96, 0.004).depth)


@given(angles_h, angles_a, st.floats(0.8, 2.0))
def test_convex_depths_within_circumradius(h, a, v):
    m, _ = pca_normalize(synthetic.box())
    d = render_depth(m, Viewpoint(h, a, v), 48, 0.004)
    z = d.depth[np.isfinite(d.depth)]
    r = m.circumradius
    assert z.size and z.min() >= v - r - 1e-9 and z.max() <= v + r + 1e-9


def test_azimuth_rotation_keeps_sphere_silhouette():
    s = synthetic.sphere(0.3, 48, 96)
    a = np.isfinite(render_depth(s, Viewpoint(60, 0, 1), 96, 0.01).depth)
    b = np.isfinite(render_depth(s, Viewpoint(60, 20, 1), 96, 0.01).depth)
    assert (a & b).sum() / (a | b).sum() >= 0.98


def test_azimuth_rotation_maps_to_rotated_mesh():
    m = synthetic.blob()
    turned = m.transformed(PoseTransform.from_rt(rot_z(-20), np.zeros(3)))
    a = np.isfinite(render_depth(m, Viewpoint(60, 40, 1), 96, 0.005).depth)
    b = np.isfinite(render_depth(turned, Viewpoint(60, 20, 1), 96, 0.005).depth)
    assert (a & b).sum() / (a | b).sum() >= 0.98


def test_scaled_projection_shrinks_with_distance():
    m = synthetic.sphere(0.2)
    near = np.isfinite(render_depth(m, Viewpoint(90, 0, 1.0), 96, 0.005).depth).sum()
    far = np.isfinite(render_depth(m, Viewpoint(90, 0, 2.0), 96, 0.005).depth).sum()
    assert far == pytest.approx(near / 4, rel=0.1)


def test_depth_image_mask():
    d = DepthImage(np.array([[1.0, np.inf]]))
    assert d.mask.tolist() == [[True, False]]
