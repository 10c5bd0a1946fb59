import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swarmplan.geometry import (
    AABox,
    InfeasibleRegionError,
    ObstacleMap,
    box_clearance,
    build_bvc,
    build_bvc_all,
    build_sfc,
    check_hull_free,
    closest_segment_points,
    dist_point_boxes,
    dist_segment_boxes,
    dist_triangle_boxes,
    hull_clearance,
    region_contains,
    region_from_box,
    select_sfc_points,
    sfc_box,
)

R = 0.15


# --- independent oracles ----------------------------------------------------


def brute_seg_seg_distance(a0, a1, b0, b1, step=1e-3):
    """Distance oracle: dense parameter grid over both segments."""
    s = np.arange(0.0, 1.0 + step / 2, step)
    pa = a0[None, :] + s[:, None] * (a1 - a0)[None, :]
    pb = b0[None, :] + s[:, None] * (b1 - b0)[None, :]
    d2 = (
        np.sum(pa * pa, axis=1)[:, None]
        + np.sum(pb * pb, axis=1)[None, :]
        - 2.0 * (pa @ pb.T)
    )
    return float(np.sqrt(max(d2.min(), 0.0)))


def sampled_hull_box_distance(points, lo, hi, n=1200):
    """Distance oracle: barycentric sampling of the hull vs dense box sampling."""
    pts = np.atleast_2d(points)
    rng = np.random.default_rng(0)
    w = rng.dirichlet(np.ones(pts.shape[0]), size=n)
    hull_samples = w @ pts
    axes = [np.linspace(lo[k], hi[k], 9) for k in range(3)]
    bx = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    d = np.linalg.norm(hull_samples[:, None, :] - bx[None, :, :], axis=-1)
    return float(d.min())


# --- closest segment points -------------------------------------------------


def test_degenerate_segments_are_points():
    p = np.array([0.0, 0.0, 0.0])
    q = np.array([1.0, 2.0, 2.0])
    pair = closest_segment_points(p, p, q, q)
    assert np.allclose(pair.c_ab, p)
    assert np.allclose(pair.c_ba, q)
    assert pair.distance == pytest.approx(3.0)


def test_skew_perpendicular_segments():
    # classic closed form: crossing segments offset by 1 on z
    pair = closest_segment_points(
        np.array([-1.0, 0.0, 0.0]),
        np.array([1.0, 0.0, 0.0]),
        np.array([0.0, -1.0, 1.0]),
        np.array([0.0, 1.0, 1.0]),
    )
    assert pair.distance == pytest.approx(1.0)
    assert np.allclose(pair.c_ab, [0.0, 0.0, 0.0], atol=1e-12)
    assert np.allclose(pair.c_ba, [0.0, 0.0, 1.0], atol=1e-12)


def test_parallel_overlapping_segments_tie_break():
    a0 = np.array([0.0, 0.0, 0.0])
    a1 = np.array([2.0, 0.0, 0.0])
    b0 = np.array([1.0, 1.0, 0.0])
    b1 = np.array([3.0, 1.0, 0.0])
    pair = closest_segment_points(a0, a1, b0, b1)
    assert pair.distance == pytest.approx(1.0)
    # smallest parameter on segment a among minimisers, then smallest on b
    assert pair.s == pytest.approx(0.5)
    assert pair.t == pytest.approx(0.0)
    d = brute_seg_seg_distance(a0, a1, b0, b1)
    assert abs(pair.distance - d) <= 2e-3


@settings(max_examples=50, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_segment_distance_matches_grid_oracle(seed):
    rng = np.random.default_rng(seed)
    a0, a1, b0, b1 = rng.uniform(-2, 2, size=(4, 3))
    pair = closest_segment_points(a0, a1, b0, b1)
    oracle = brute_seg_seg_distance(a0, a1, b0, b1)
    assert pair.distance <= oracle + 1e-12
    assert abs(pair.distance - oracle) <= 2e-3
    # returned points actually lie on their segments
    assert 0.0 <= pair.s <= 1.0 and 0.0 <= pair.t <= 1.0


def test_thousand_random_pairs_vs_grid_oracle():
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(1000):
        a0, a1, b0, b1 = rng.uniform(-2, 2, size=(4, 3))
        pair = closest_segment_points(a0, a1, b0, b1)
        oracle = brute_seg_seg_distance(a0, a1, b0, b1)
        worst = max(worst, abs(pair.distance - oracle))
    assert worst <= 2e-3


# --- hull clearance ----------------------------------------------------------


def unit_box_at_origin():
    return ObstacleMap.from_boxes([((-0.5, -0.5, -0.5), (0.5, 0.5, 0.5))])


def test_point_clearance_true_when_far():
    obs = unit_box_at_origin()
    # point 0.2 m from the nearest face
    assert check_hull_free([np.array([0.7, 0.0, 0.0])], R, obs)


def test_segment_through_box_blocked():
    obs = unit_box_at_origin()
    pts = [np.array([-1.0, 0.0, 0.0]), np.array([1.0, 0.0, 0.0])]
    assert hull_clearance(pts, obs) == 0.0
    assert not check_hull_free(pts, R, obs)


def test_grazing_at_exactly_r_blocked():
    obs = unit_box_at_origin()
    # exactly representable clearance: face at 0.5, triangle plane at 0.75
    r = 0.25
    tri = [
        np.array([0.75, -0.2, -0.2]),
        np.array([0.75, 0.4, 0.0]),
        np.array([0.75, -0.2, 0.3]),
    ]
    assert hull_clearance(tri, obs) == r
    assert not check_hull_free(tri, r, obs)
    assert check_hull_free(tri, r - 1e-9, obs)


def test_hull_point_count_validation():
    obs = unit_box_at_origin()
    with pytest.raises(ValueError):
        hull_clearance(np.zeros((4, 3)), obs)


@settings(max_examples=60, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_hull_clearance_vs_sampling_oracle(seed):
    rng = np.random.default_rng(seed)
    lo = rng.uniform(-1.0, 0.0, 3)
    hi = lo + rng.uniform(0.2, 1.0, 3)
    obs = ObstacleMap(lo[None, :], hi[None, :])
    pts = rng.uniform(-2.0, 2.0, size=(rng.integers(1, 4), 3))
    exact = hull_clearance(pts, obs)
    approx = sampled_hull_box_distance(pts, lo, hi)
    # sampling can only overestimate the true distance
    assert exact <= approx + 1e-9
    assert exact >= approx - 0.12  # coarse grid slack


def test_triangle_box_distance_overlapping():
    obs = unit_box_at_origin()
    tri = np.array([[0.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 2.0, 0.0]])
    assert float(dist_triangle_boxes(tri, obs)[0]) == 0.0


def test_segment_box_corner_distance_exact():
    obs = unit_box_at_origin()
    # segment passing diagonally past the (+,+,+) corner
    p0 = np.array([1.5, 0.0, 1.0])
    p1 = np.array([0.0, 1.5, 1.0])
    d = float(dist_segment_boxes(p0, p1, obs)[0])
    corner = np.array([0.5, 0.5, 0.5])
    expected = brute_seg_seg_distance(p0, p1, corner, corner)
    assert d == pytest.approx(expected, abs=2e-3)


# --- safe flight corridor -----------------------------------------------------


def test_sfc_empty_map_fills_workspace():
    bounds = AABox((0.0, 0.0, 0.0), (3.0, 3.0, 1.0))
    region = build_sfc([np.array([1.0, 1.0, 0.5])], R, ObstacleMap.empty(), bounds)
    lo, hi = sfc_box(region)
    assert np.allclose(lo, bounds.lo + R)
    assert np.allclose(hi, bounds.hi - R)


def test_sfc_gap_between_boxes():
    # two boxes 0.5 m apart across y; corridor width must be 0.5 - 2r = 0.2
    obs = ObstacleMap.from_boxes(
        [((-1.0, -1.0, -1.0), (1.0, -0.25, 1.0)), ((-1.0, 0.25, -1.0), (1.0, 1.0, 1.0))]
    )
    bounds = AABox((-2.0, -2.0, -2.0), (2.0, 2.0, 2.0))
    pts = [np.array([-0.5, 0.0, 0.0]), np.array([0.5, 0.0, 0.0])]
    region = build_sfc(pts, R, obs, bounds)
    lo, hi = sfc_box(region)
    assert hi[1] - lo[1] == pytest.approx(0.5 - 2 * R)
    for p in pts:
        assert region_contains(region, p, tol=1e-12)


def test_sfc_blocked_seed_box_raises():
    obs = unit_box_at_origin()
    bounds = AABox((-2.0, -2.0, -2.0), (2.0, 2.0, 2.0))
    pts = [np.array([-1.0, 0.0, 0.0]), np.array([1.0, 0.0, 0.0])]
    with pytest.raises(InfeasibleRegionError):
        build_sfc(pts, R, obs, bounds)


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=0, max_value=10_000))
def test_sfc_random_scene_soundness(seed):
    rng = np.random.default_rng(seed)
    bounds = AABox((-3.0, -3.0, 0.0), (3.0, 3.0, 2.0))
    lo = rng.uniform(-2.5, 2.0, size=(6, 3))
    lo[:, 2] = rng.uniform(0.0, 1.5, 6)
    hi = lo + rng.uniform(0.2, 0.8, size=(6, 3))
    obs = ObstacleMap(lo, hi)
    seed_pt = rng.uniform(-2.5, 2.5, 3)
    seed_pt[2] = rng.uniform(0.2, 1.8)
    if hull_clearance([seed_pt], obs) <= R:
        return
    region = build_sfc([seed_pt], R, obs, bounds)
    blo, bhi = sfc_box(region)
    assert region_contains(region, seed_pt, tol=1e-12)
    # soundness: inflation by r still misses every obstacle (box-vs-box exact)
    assert box_clearance(blo, bhi, obs) >= R * (1 - 1e-12)


def test_select_sfc_points_cases():
    obs = unit_box_at_origin()
    p = np.array([2.0, 0.0, 0.0])
    g = np.array([2.0, 0.5, 0.0])
    w = np.array([2.0, 1.0, 0.0])
    assert len(select_sfc_points(0, p, None, w, R, obs)) == 2
    assert len(select_sfc_points(3, p, g, w, R, obs)) == 3
    # waypoint on the far side of the obstacle blocks the three-point hull
    w_blocked = np.array([-2.0, 0.0, 0.0])
    pts = select_sfc_points(3, p, g, w_blocked, R, obs)
    assert len(pts) == 2
    assert np.allclose(pts[1], g)


# --- buffered Voronoi cells ---------------------------------------------------


def test_bvc_two_stationary_agents_halfspaces():
    p = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    regions = build_bvc_all(p, p, R)
    # agent 0: x <= 0.35  <=>  -x >= -0.35 ; agent 1: x >= 0.65
    n0, b0 = regions[0].normals[0], regions[0].offsets[0]
    n1, b1 = regions[1].normals[0], regions[1].offsets[0]
    assert np.allclose(n0, [-1.0, 0.0, 0.0])
    assert b0 == pytest.approx(-0.35)
    assert np.allclose(n1, [1.0, 0.0, 0.0])
    assert b1 == pytest.approx(0.65)
    # mirror symmetry through the midplane x = 0.5
    for x in np.linspace(-0.5, 1.5, 21):
        probe = np.array([x, 0.2, -0.1])
        mirrored = np.array([1.0 - x, 0.2, -0.1])
        assert region_contains(regions[0], probe, 1e-12) == region_contains(
            regions[1], mirrored, 1e-12
        )


def test_bvc_single_matches_all():
    rng = np.random.default_rng(7)
    p = rng.uniform(0, 3, size=(4, 3))
    g = p + rng.uniform(-0.4, 0.4, size=(4, 3))
    all_regions = build_bvc_all(p, g, R)
    for i in range(4):
        solo = build_bvc(i, p, g, R)
        assert np.array_equal(solo.normals, all_regions[i].normals)
        assert np.array_equal(solo.offsets, all_regions[i].offsets)


def test_bvc_coincident_positions_error():
    p = np.zeros((2, 3))
    with pytest.raises(ValueError):
        build_bvc_all(p, p, R)


def _random_separated_config(rng, n=5, min_gap=2 * R):
    """Positions/subgoals whose segments are pairwise at least min_gap apart."""
    while True:
        p = rng.uniform(0, 4, size=(n, 3))
        g = p + rng.uniform(-0.5, 0.5, size=(n, 3))
        ok = True
        for i in range(n):
            for j in range(i + 1, n):
                pair = closest_segment_points(p[i], g[i], p[j], g[j])
                if pair.distance < min_gap:
                    ok = False
        if ok:
            return p, g


def test_bvc_contains_own_segment_when_separated():
    rng = np.random.default_rng(3)
    for _ in range(5):
        p, g = _random_separated_config(rng)
        regions = build_bvc_all(p, g, R)
        ts = np.linspace(0, 1, 100)
        for i in range(len(p)):
            pts = p[i][None, :] + ts[:, None] * (g[i] - p[i])[None, :]
            margins = pts @ regions[i].normals.T - regions[i].offsets
            assert margins.min() >= -1e-9


def test_bvc_pairwise_safety_sampled():
    # membership in both cells implies separation >= 2r (within 1e-9)
    rng = np.random.default_rng(11)
    checked = 0
    for _ in range(200):
        p = rng.uniform(0, 2, size=(2, 3))
        g = p + rng.uniform(-0.5, 0.5, size=(2, 3))
        if closest_segment_points(p[0], g[0], p[1], g[1]).distance <= 1e-9:
            continue
        regions = build_bvc_all(p, g, R)
        xs = rng.uniform(-1, 3, size=(400, 3))
        in0 = (xs @ regions[0].normals.T - regions[0].offsets).min(axis=1) >= 0
        in1 = (xs @ regions[1].normals.T - regions[1].offsets).min(axis=1) >= 0
        a, b = xs[in0], xs[in1]
        if len(a) and len(b):
            d = np.linalg.norm(a[:, None, :] - b[None, :, :], axis=-1)
            assert d.min() >= 2 * R - 1e-9
            checked += d.size
    assert checked > 50


# --- region primitives --------------------------------------------------------


def test_region_contains_tolerance_convention():
    region = region_from_box((0.0, -1.0, -1.0), (1.0, 1.0, 1.0))
    assert region_contains(region, np.array([0.5, 0.0, 0.0]), 1e-9)
    assert region_contains(region, np.array([-1e-12, 0.0, 0.0]), 1e-9)
    assert not region_contains(region, np.array([-1.0, 0.0, 0.0]), 1e-9)


def test_point_box_distance_batched():
    lo = np.array([[0.0, 0.0, 0.0]])
    hi = np.array([[1.0, 1.0, 1.0]])
    d = dist_point_boxes(np.array([[2.0, 0.5, 0.5], [0.5, 0.5, 0.5]]), lo, hi)
    assert d.shape == (2, 1)
    assert d[0, 0] == pytest.approx(1.0)
    assert d[1, 0] == 0.0
