import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from curvsal import synthetic
from curvsal.config import Config
from curvsal.errors import ParameterError, UndefinedScoreError
from curvsal.meshrender import PoseTransform, Viewpoint, viewpoint_to_pose
from curvsal.register import (RepScore, build_database, coherent_seeds, combine, depth_features,
                              grid_around,
                              iteration_change, minmax, pose_error, rank_views, refine_pose,
                              register_query, repeatability, s_rep, score_views, search_box)

scores = arrays(np.float64, st.integers(2, 30), elements=st.floats(-100, 100))


def grid_pts(step=8, n=6):
    return np.array([(x, y) for x in range(0, step * n, step) for y in range(0, step * n, step)],
                    float)


# -- repeatability -------------------------------------------------------------------------------

def test_rep_identical():
    P = grid_pts()
    for eps in (0, 1, 5):
        assert repeatability(P, P, eps).rep == 1


def test_rep_disjoint():
    assert repeatability([[0, 0]], [[10, 10]], 3).rep == 0


def test_rep_shifted_grid():
    P = grid_pts()
    Q = P + [2, 0]
    assert repeatability(P, Q, 3).rep == 1
    assert repeatability(P, Q, 1).rep == 0


def test_rep_empty_raises():
    with pytest.raises(UndefinedScoreError):
        repeatability(np.zeros((0, 2)), [[0, 0]])


@given(st.floats(0, 20), st.floats(0, 20))
def test_rep_monotone_in_eps(e1, e2):
    rng = np.random.default_rng(2)
    A, B = rng.uniform(0, 50, (2, 40, 2))
    lo, hi = sorted((e1, e2))
    a, b = repeatability(A, B, lo).rep, repeatability(A, B, hi).rep
    assert 0 <= a <= b <= 1


def test_rep_score_fields():
    r = RepScore(0.25, 3.0)
    assert r.non_repeatability == 0.75


# -- s_rep -------------------------------------------------------------------------------------------

@pytest.mark.parametrize("mode", ["best", "one_sided", "two_sided"])
def test_s_rep_equal_reps(mode):
    assert np.array_equal(s_rep([0.4] * 5, 0.1, mode), np.ones(5))


def test_s_rep_literal_value():
    # R = [0.3, 0.5]: mean 0.4, each view one sigma away
    assert s_rep([0.7, 0.5], 0.1, "two_sided") == pytest.approx([np.exp(-0.5)] * 2)


def test_s_rep_one_sided_and_best():
    assert s_rep([0.7, 0.5], 0.1, "one_sided") == pytest.approx([1, np.exp(-0.5)])
    assert s_rep([0.7, 0.5], 0.1, "best") == pytest.approx([1, np.exp(-2)])


@given(arrays(np.float64, st.integers(1, 20), elements=st.floats(0, 1)),
       st.sampled_from(["best", "one_sided", "two_sided"]))
def test_s_rep_range(reps, mode):
    s = s_rep(reps, 0.1, mode)
    assert np.all(s > 0) and np.all(s <= 1)


def test_s_rep_accepts_scores():
    assert s_rep([RepScore(1.0, 3), RepScore(1.0, 3)]).tolist() == [1, 1]


def test_s_rep_rejects():
    with pytest.raises(ParameterError):
        s_rep([0.5], 0.0)
    with pytest.raises(ParameterError):
        s_rep([0.5], 0.1, "median")


# -- combine and ranking ---------------------------------------------------------------------------------

def test_combine_unit_rep_ranks_by_hog():
    h = np.array([3.0, -1.0, 7.0, 0.5])
    t = combine(h, np.ones(4))
    assert list(t.order()) == list(np.argsort(-h))


def test_combine_best_view_wins():
    t = combine([1.0, 5.0, 2.0], [0.3, 1.0, 0.9])
    assert t.order()[0] == 1


def test_combine_elementwise(rng):
    h, r = rng.normal(size=10), rng.uniform(0.01, 1, 10)
    t = combine(h, r)
    norm = (h - h.min()) / (h.max() - h.min())
    assert np.allclose(t.s_combined, norm * r, atol=1e-15)
    assert np.all((t.s_hog_norm >= 0) & (t.s_hog_norm <= 1))


def test_combine_length_mismatch():
    with pytest.raises(ParameterError):
        combine([1.0, 2.0], [1.0])


def test_minmax_constant():
    assert minmax([2.0, 2.0]).tolist() == [1.0, 1.0]


# scores on a 0.01 grid so that a * h + b cannot merge distinct values in rounding
grid_scores = arrays(np.float64, st.integers(2, 30),
                     elements=st.integers(-10_000, 10_000).map(lambda k: k / 100))


@given(grid_scores, st.floats(0.01, 100), st.floats(-100, 100))
def test_ranking_invariant_to_affine_hog(h, a, b):
    r = np.linspace(0.2, 1.0, len(h))
    assert np.array_equal(combine(h, r).order(), combine(a * h + b, r).order()) or \
        np.allclose(combine(h, r).s_combined, combine(a * h + b, r).s_combined, atol=1e-9)


def test_rank_views():
    t = combine([0.0, 2.0, 2.0, 1.0], np.ones(4), view_ids=[10, 12, 11, 13])
    top = rank_views(t, 4)
    assert [r["view"] for r in top] == [11, 12, 13, 10]
    assert rank_views(t, 1)[0]["view"] == 11
    with pytest.raises(ParameterError):
        rank_views(t, 5)


# -- pose error --------------------------------------------------------------------------------------------

def test_pose_error_identity():
    T = viewpoint_to_pose(Viewpoint(40, 100, 1.2))
    assert pose_error(T, T) == pytest.approx(0, abs=1e-12)


def test_pose_error_half_turn():
    Rz = np.diag([-1.0, -1.0, 1.0])
    T = PoseTransform.from_rt(Rz, np.zeros(3))
    assert pose_error(T, PoseTransform()) == pytest.approx(2 * np.sqrt(2))


def test_iteration_change_zero_for_repeat():
    T = viewpoint_to_pose(Viewpoint(40, 100, 1.2))
    assert iteration_change(T, T) == 0


# -- refinement helpers -----------------------------------------------------------------------------------------

def test_coherent_seeds_filter():
    a, b, c = Viewpoint(60, 0, 1), Viewpoint(60, 340, 1), Viewpoint(120, 180, 1)
    assert coherent_seeds([a, b, c], (50, 20, 0.3)) == [a, b]
    assert coherent_seeds([c, a], (50, 20, 0.3)) == [c]


def test_search_box_single_seed():
    assert search_box([Viewpoint(60, 0, 1)], (50, 20, 0.3)) == [(-50, 50), (-20, 20), (-0.3, 0.3)]


def test_search_box_wraps_azimuth():
    box = search_box([Viewpoint(60, 0, 1), Viewpoint(60, 340, 1)], (50, 20, 0.3))
    assert box[1] == (-30, 10)


def test_grid_around_bounds():
    vps = grid_around(Viewpoint(5, 355, 0.1), [(-10, 10), (-10, 10), (-0.1, 0.1)], (5, 5, 0.05))
    hs = {v.elevation_h for v in vps}
    as_ = {v.azimuth_a for v in vps}
    assert hs == {0, 5, 10, 15} and as_ == {345, 350, 355, 0, 5}
    assert min(v.distance_v for v in vps) > 0
    assert Viewpoint(5, 355, 0.1) in vps


# -- end to end on a small database ------------------------------------------------------------------------------

@pytest.fixture(scope="module")
def small_db():
    cfg = Config(image_size=96, h_step=20, a_step=20, v_min=0.8, v_max=1.2, v_step=0.2,
                 fill_distance=0.8, query_mode="MCS", fine_h=10, fine_a=10, fine_v=0.1)
    vps = [Viewpoint(h, a, v) for h in (40, 60, 80) for a in (80, 100, 120) for v in (0.8, 1.0, 1.2)]
    return build_database(synthetic.blob(), cfg, vps)


def test_database_stats(small_db):
    assert len(small_db) == 27
    assert small_db.descriptors().shape == (27, 576)
    assert np.linalg.norm(small_db.mesh.vertices.mean(axis=0)) < 1e-9


def _within_fine_step(res, truth, cfg):
    h, a, v = res.viewpoint.as_tuple()
    th, ta, tv = truth.as_tuple()
    da = abs((a - ta + 180) % 360 - 180)
    return abs(h - th) <= cfg.fine_h and da <= cfg.fine_a and abs(v - tv) <= cfg.fine_v + 1e-9


def test_self_query_ranks_source_view_first(small_db):
    truth = Viewpoint(60, 100, 1.0)
    img = synthetic.render_shaded(small_db.mesh, truth, 96, small_db.pixel_scale)
    table, res = register_query(img, small_db, reference=viewpoint_to_pose(truth))
    assert small_db.viewpoints[table.order()[0]] == truth
    assert "abs_error" in res.trace[0]


@pytest.mark.parametrize("hog_mode", ["centered", "cosine"])
def test_self_query_refinement_same_modality(small_db, hog_mode):
    # query features taken from the database's own depth rendering
    cfg = small_db.cfg.updated(hog_mode=hog_mode)
    db = build_database(small_db.mesh, cfg, small_db.viewpoints, normalize=False)
    truth = Viewpoint(60, 100, 1.0)
    q = depth_features(db.render(truth), cfg)
    table = score_views(q, db.features, db.stats, cfg, viewpoints=db.viewpoints)
    res = refine_pose(db, q, table, cfg)
    assert db.viewpoints[table.order()[0]] == truth
    assert res.converged and len(res.trace) - 1 <= 2
    assert _within_fine_step(res, truth, cfg)


@pytest.mark.xfail(strict=True, reason="raw HOG inner product drifts during refinement of a "
                                       "shaded query; see README limitations")
def test_self_query_refinement_literal_shaded(small_db):
    truth = Viewpoint(60, 100, 1.0)
    img = synthetic.render_shaded(small_db.mesh, truth, 96, small_db.pixel_scale)
    _, res = register_query(img, small_db, reference=viewpoint_to_pose(truth))
    assert _within_fine_step(res, truth, small_db.cfg)


def test_single_view_database():
    cfg = Config(image_size=64, fill_distance=1.0, query_mode="CS", h_step=30, a_step=30,
                 v_step=0.5, fine_h=15, fine_a=15, fine_v=0.25, max_rounds=2)
    db = build_database(synthetic.box(), cfg, [Viewpoint(60, 30, 1.0)])
    img = synthetic.render_shaded(db.mesh, Viewpoint(60, 30, 1.0), 64, db.pixel_scale)
    from curvsal.register import query_features
    q = query_features(img, cfg)
    t = score_views(q, db.features, db.stats, cfg, viewpoints=db.viewpoints)
    assert len(t) == 1 and t.s_combined[0] == 1
    res = refine_pose(db, q, t, cfg)
    # the lone seed searches one coarse step around itself
    n = res.trace[1]["n_views"]
    assert n == 5 * 5 * 5
