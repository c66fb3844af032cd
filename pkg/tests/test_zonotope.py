import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.stats import chi2

from pzplan.zonotope import (
    THREE_SIGMA,
    ConfidenceConfig,
    ProbabilisticZonotope,
    Zonotope,
    chi2_quantile,
    confidence_zonotope,
    contains,
    contains_points_2d,
    covariation,
    intersects_2d,
    linear_map,
    minkowski_sum,
    polygon_is_convex,
    project,
    reduce_order,
    zonotopes_intersect,
)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def box(cx, cy, hx=1.0, hy=1.0):
    return np.array([[cx - hx, cy - hy], [cx + hx, cy - hy], [cx + hx, cy + hy], [cx - hx, cy + hy]])


def test_minkowski_sum_example():
    a = ProbabilisticZonotope([1, 0], [[1], [0]], np.zeros((2, 2)))
    b = ProbabilisticZonotope([0, 1], [[0], [2]], np.zeros((2, 2)))
    s = minkowski_sum(a, b)
    np.testing.assert_array_equal(s.center, [1, 1])
    np.testing.assert_array_equal(s.generators, [[1, 0], [0, 2]])


def test_minkowski_identity_and_covariance_additivity():
    p = ProbabilisticZonotope([1, 2], [[1, 2], [3, 4]], np.eye(2))
    s = minkowski_sum(p, ProbabilisticZonotope.zero(2))
    np.testing.assert_array_equal(s.generators, p.generators)
    np.testing.assert_array_equal(s.covariance, p.covariance)
    t = minkowski_sum(ProbabilisticZonotope.gaussian([5, 5], np.eye(2)), ProbabilisticZonotope.gaussian([0, 0], 2 * np.eye(2)))
    np.testing.assert_array_equal(t.covariance, 3 * np.eye(2))


def test_dimension_errors():
    with pytest.raises(ValueError):
        minkowski_sum(ProbabilisticZonotope.zero(2), ProbabilisticZonotope.zero(3))
    with pytest.raises(ValueError):
        linear_map(np.eye(3), ProbabilisticZonotope.zero(2))


def test_invalid_covariances_rejected():
    with pytest.raises(ValueError):
        ProbabilisticZonotope([0, 0], None, [[1, 0.5], [0, 1]])
    with pytest.raises(ValueError):
        ProbabilisticZonotope([0, 0], None, [[-1, 0], [0, 1]])
    with pytest.raises(ValueError):
        Zonotope([0, np.nan], None)


def test_linear_map_examples():
    p = ProbabilisticZonotope([1, 0], [[1], [1]], np.eye(2))
    same = linear_map(np.eye(2), p)
    np.testing.assert_array_equal(same.center, p.center)
    np.testing.assert_array_equal(linear_map(2 * np.eye(2), p).covariance, 4 * np.eye(2))
    rot = np.array([[0.0, -1.0], [1.0, 0.0]])
    np.testing.assert_allclose(linear_map(rot, p).center, [0, 1])


def test_chi2_quantile_matches_reference():
    for p in (0.5, 0.9, 0.95, 0.99, THREE_SIGMA, 0.999999):
        for dof in (1, 2, 3, 6):
            assert chi2_quantile(p, dof) == pytest.approx(chi2.ppf(p, dof), rel=1e-10)
    assert chi2_quantile(0.95, 2) == pytest.approx(5.9915, abs=1e-4)


def test_three_sigma_preset():
    assert THREE_SIGMA == pytest.approx(0.9973002, abs=1e-7)
    assert ConfidenceConfig(THREE_SIGMA, 1).alpha == pytest.approx(3.0, rel=1e-9)


def test_confidence_config_rejects_bounds():
    for bad in (0.0, 1.0, -0.1):
        with pytest.raises(ValueError):
            ConfidenceConfig(bad, 2)


def test_confidence_zonotope_examples():
    p = ProbabilisticZonotope([0, 0], [[1.0], [0.0]], np.zeros((2, 2)))
    np.testing.assert_array_equal(confidence_zonotope(p, 0.95).generators, p.generators)
    z = confidence_zonotope(ProbabilisticZonotope.gaussian([0, 0], np.eye(2)), 0.95)
    assert z.num_generators == 2
    np.testing.assert_allclose(np.linalg.norm(z.generators, axis=0), 2.4477, atol=1e-4)
    assert abs(z.generators[:, 0] @ z.generators[:, 1]) < 1e-12
    alpha = math.sqrt(chi2.ppf(0.9, 2))
    z = confidence_zonotope(ProbabilisticZonotope.gaussian([0, 0], np.diag([4.0, 1.0])), 0.9)
    np.testing.assert_allclose(sorted(np.abs(z.generators).max(axis=0)), [alpha, 2 * alpha])


def test_confidence_zonotope_drops_zero_eigenvalues():
    z = confidence_zonotope(ProbabilisticZonotope.gaussian([0, 0, 0], np.diag([1.0, 0.0, 2.0])), 0.9)
    assert z.num_generators == 2


def test_covariation_examples():
    assert covariation(Zonotope([0, 0], np.eye(2))) == 2
    assert covariation(Zonotope([0, 0], None)) == 0
    assert covariation(Zonotope([0, 0], [[3], [4]])) == 25


def test_contains_examples():
    z = Zonotope([0, 0], np.eye(2))
    assert contains(z, [0.5, 0.5]) and not contains(z, [1.5, 0])
    assert contains(z, z.center)
    seg = Zonotope([0, 0], [[1.0], [1.0]])
    assert contains(seg, [0.5, 0.5]) and not contains(seg, [0.5, 0.4])
    pt = Zonotope([1, 1], None)
    assert contains(pt, [1, 1]) and not contains(pt, [1, 1.001])


def test_contains_nd_uses_lp():
    z = Zonotope(np.zeros(3), np.eye(3))
    assert contains(z, [0.9, -0.9, 0.9]) and not contains(z, [1.1, 0, 0])


def test_intersection_examples():
    z = Zonotope([0, 0], np.eye(2))
    assert not intersects_2d(z, box(3, 0))
    assert intersects_2d(z, box(1.5, 0))
    assert intersects_2d(z, box(2, 0))  # shared edge counts as contact
    with pytest.raises(ValueError):
        intersects_2d(z, np.array([[0, 0], [2, 0], [1, 0.5], [2, 2], [0, 2]]))


def test_star_polygon_is_not_convex():
    star = np.array([[np.cos(t), np.sin(t)] for t in np.arange(5) * 4 * np.pi / 5])
    assert not polygon_is_convex(star)
    assert polygon_is_convex(box(0, 0))


def test_reduce_order_identity_and_hull():
    rng = np.random.default_rng(0)
    z = Zonotope([0, 0], rng.normal(size=(2, 5)))
    assert reduce_order(z, 10) is z
    big = Zonotope([1, -1], rng.normal(size=(2, 50)))
    red = reduce_order(big, 10)
    assert red.num_generators == 10
    assert np.all(red.radius() >= big.radius() - 1e-12)
    pts = big.sample(rng, 1000)
    assert contains_points_2d(red, pts).all()
    full_box = reduce_order(big, 2)
    np.testing.assert_allclose(full_box.radius(), big.radius())
    with pytest.raises(ValueError):
        reduce_order(big, 1)


def test_zonotopes_intersect():
    a = Zonotope([0, 0], np.eye(2))
    assert zonotopes_intersect(a, Zonotope([2, 0], np.eye(2)))
    assert not zonotopes_intersect(a, Zonotope([2.5, 0], np.eye(2)))
    assert zonotopes_intersect(a, Zonotope([1.5, 1.5], [[0.6, 0.0], [0.6, 0.0]]))


def test_project():
    p = ProbabilisticZonotope([1, 2, 3], np.eye(3), np.diag([1.0, 2.0, 3.0]))
    q = project(p)
    np.testing.assert_array_equal(q.center, [1, 2])
    np.testing.assert_array_equal(q.covariance, np.diag([1.0, 2.0]))


def test_arrays_are_immutable():
    z = Zonotope([0, 0], np.eye(2))
    with pytest.raises(ValueError):
        z.center[0] = 1.0


@st.composite
def pzs(draw, n=2, r=3):
    c = draw(arrays(float, n, elements=finite))
    g = draw(arrays(float, (n, r), elements=finite))
    m = draw(arrays(float, (n, n), elements=st.floats(-2, 2)))
    return ProbabilisticZonotope(c, g, m @ m.T)


@settings(max_examples=100, deadline=None)
@given(pzs(), pzs(), pzs())
def test_minkowski_commutative_associative(a, b, c):
    ab, ba = minkowski_sum(a, b), minkowski_sum(b, a)
    np.testing.assert_array_equal(ab.center, ba.center)
    np.testing.assert_array_equal(ab.covariance, ba.covariance)
    assert sorted(map(tuple, ab.generators.T)) == sorted(map(tuple, ba.generators.T))
    left, right = minkowski_sum(ab, c), minkowski_sum(a, minkowski_sum(b, c))
    np.testing.assert_allclose(left.center, right.center, atol=1e-12)
    np.testing.assert_array_equal(left.generators, right.generators)


@settings(max_examples=100, deadline=None)
@given(pzs(), arrays(float, (2, 2), elements=finite), arrays(float, (2, 2), elements=finite))
def test_linear_map_composition(p, t1, t2):
    a = linear_map(t2, linear_map(t1, p))
    b = linear_map(t2 @ t1, p)
    scale = 1 + np.abs(t2).max() * np.abs(t1).max()
    np.testing.assert_allclose(a.center, b.center, atol=1e-9 * scale * (1 + np.abs(p.center).max()))
    np.testing.assert_allclose(a.covariance, b.covariance, rtol=1e-9, atol=1e-9 * scale**2 * (1 + np.abs(p.covariance).max()))


@settings(max_examples=100, deadline=None)
@given(pzs(), pzs(), arrays(float, (2, 2), elements=finite))
def test_linear_map_distributes(a, b, t):
    lhs = linear_map(t, minkowski_sum(a, b))
    rhs = minkowski_sum(linear_map(t, a), linear_map(t, b))
    np.testing.assert_allclose(lhs.generators, rhs.generators, atol=1e-9)
    np.testing.assert_allclose(lhs.covariance, rhs.covariance, atol=1e-8)


@settings(max_examples=100, deadline=None)
@given(arrays(float, (2, 4), elements=finite), st.floats(0, 2 * np.pi), st.permutations(range(4)))
def test_covariation_invariances(g, angle, perm):
    z = Zonotope([0, 0], g)
    flipped = Zonotope([0, 0], g[:, list(perm)] * np.array([1, -1, 1, -1]))
    assert covariation(flipped) == pytest.approx(covariation(z))
    rot = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
    assert covariation(Zonotope([0, 0], rot @ g)) == pytest.approx(covariation(z), rel=1e-9, abs=1e-12)


def test_confidence_nesting_and_coverage():
    rng = np.random.default_rng(3)
    m = rng.normal(size=(2, 2))
    p = ProbabilisticZonotope.gaussian([1, 2], m @ m.T + 0.1 * np.eye(2))
    small, large = confidence_zonotope(p, 0.5), confidence_zonotope(p, 0.95)
    assert contains_points_2d(large, small.sample(rng, 2000)).all()
    samples = rng.multivariate_normal(p.center, p.covariance, size=100_000)
    assert contains_points_2d(large, samples).mean() >= 0.95


def test_membership_against_rejection_sampling():
    rng = np.random.default_rng(4)
    for _ in range(20):
        z = Zonotope(rng.normal(size=2), rng.normal(size=(2, rng.integers(1, 6))))
        pts = z.center + rng.uniform(-1, 1, size=(20_000, 2)) * (z.radius() + 0.5)
        fast = contains_points_2d(z, pts)
        # linear-programming membership as an independent reference
        for i in rng.choice(len(pts), 30, replace=False):
            from scipy.optimize import linprog

            res = linprog(np.zeros(z.num_generators), A_eq=z.generators, b_eq=pts[i] - z.center, bounds=[(-1, 1)] * z.num_generators)
            if z.num_generators >= 2 and abs(np.linalg.det(z.generators @ z.generators.T)) > 1e-6:
                assert fast[i] == (res.status == 0)
        # sampled members are always inside
        assert contains_points_2d(z, z.sample(rng, 1000)).all()


def test_intersection_against_sampling():
    rng = np.random.default_rng(5)
    for _ in range(50):
        z = Zonotope(rng.uniform(-3, 3, 2), rng.normal(size=(2, 3)) * 0.7)
        poly = box(*rng.uniform(-2, 2, 2), *rng.uniform(0.2, 1.5, 2))
        lo, hi = poly.min(axis=0), poly.max(axis=0)
        pts = rng.uniform(lo, hi, size=(100_000, 2))
        hit = contains_points_2d(z, pts).any()
        if hit:
            assert intersects_2d(z, poly)
        elif intersects_2d(z, poly):
            # sampling can miss thin overlaps; confirm with a finer look at the overlap
            zp = z.sample(rng, 100_000)
            inside = np.all((zp >= lo - 1e-9) & (zp <= hi + 1e-9), axis=1)
            assert inside.any() or _gap(z, poly) < 0.05


def _gap(z, poly):
    best = np.inf
    for d in np.stack([np.cos(np.linspace(0, np.pi, 360)), np.sin(np.linspace(0, np.pi, 360))], axis=1):
        zc, zr = d @ z.center, np.abs(d @ z.generators).sum()
        pr = poly @ d
        best = min(best, max(pr.min() - (zc + zr), (zc - zr) - pr.max()))
    return abs(best)
