import json
import math

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from pzplan.gnss import (
    AlmanacError,
    AlmanacRecord,
    CA_CHIP_LENGTH,
    Constellation,
    GnssEnvironment,
    MultipathEnvelope,
    SceneError,
    SignalKind,
    WorstCaseConstant,
    UniformPerEpoch,
    ZeroBias,
    classify_signal,
    decompose_convex,
    elevation_azimuth,
    format_yuma,
    load_scene,
    make_bias_policy,
    multipath_bias_bound,
    orbital_plane_position,
    parse_yuma,
    pseudorange_noise_var,
    sat_position,
    scene_from_dict,
    simulate_measurements,
)
from pzplan.gnss.almanac import GM_EARTH, _kepler
from pzplan.models import measurement

YUMA = """******** Week 200 almanac for PRN-05 ********
ID:                         05
Health:                     000
Eccentricity:               0.5817413330E-002
Time of Applicability(s):  405504.0000
Orbital Inclination(rad):   0.9553592205
Rate of Right Ascen(r/s):  -0.7874613715E-008
SQRT(A)  (m 1/2):           5153.645508
Right Ascen at Week(rad):  -0.1037397385E+001
Argument of Perigee(rad):   0.633928776
Mean Anom(rad):             0.1741197109E+001
Af0(s):                     0.3862380981E-003
Af1(s/s):                   0.3637978807E-011
week:                        200

******** Week 200 almanac for PRN-07 ********
ID:                         07
Health:                     000
Eccentricity:               0.1401901245E-001
Time of Applicability(s):  405504.0000
Orbital Inclination(rad):   0.9534854889
Rate of Right Ascen(r/s):  -0.7920331158E-008
SQRT(A)  (m 1/2):           5153.584961
Right Ascen at Week(rad):   0.2152085066E+001
Argument of Perigee(rad):  -2.175282836
Mean Anom(rad):            -0.1960513473E+001
Af0(s):                    -0.3185272217E-003
Af1(s/s):                   0.0000000000E+000
week:                        200
"""


def wall_scene(height=30.0, altitude=10.0):
    # thin wall along x = 20, from y = -50 to 50
    fp = [[20, -50], [21, -50], [21, 50], [20, 50]]
    return scene_from_dict({"buildings": [{"footprint": fp, "height": height}], "altitude": altitude})


# ---------------------------------------------------------------- almanac


def test_parse_two_records():
    recs = parse_yuma(YUMA)
    assert [r.prn for r in recs] == [5, 7]
    assert recs[0].sqrt_a == pytest.approx(5153.645508)
    assert recs[1].arg_perigee == pytest.approx(-2.175282836)


def test_round_trip():
    recs = parse_yuma(YUMA)
    again = parse_yuma(format_yuma(recs))
    for a, b in zip(recs, again):
        for f in ("eccentricity", "toa", "inclination", "raan_rate", "sqrt_a", "raan0", "arg_perigee", "mean_anomaly", "af0", "af1"):
            assert getattr(b, f) == pytest.approx(getattr(a, f), rel=1e-10, abs=1e-20)
        assert (a.prn, a.week, a.health) == (b.prn, b.week, b.health)


def test_empty_and_missing_field():
    assert parse_yuma("") == []
    bad = "\n".join(line for line in YUMA.splitlines()[:14] if not line.startswith("SQRT"))
    with pytest.raises(AlmanacError, match=r"PRN 5.*SQRT\(A\)"):
        parse_yuma(bad)


def test_unknown_labels_ignored():
    text = YUMA.replace("week:", "Comment:  hello\nweek:", 1)
    assert len(parse_yuma(text)) == 2


def _rec(e=0.0, **kw):
    base = dict(prn=1, eccentricity=e, toa=0.0, inclination=0.95, raan_rate=0.0, sqrt_a=5153.6, raan0=0.3, arg_perigee=0.7, mean_anomaly=0.2, week=200)
    base.update(kw)
    return AlmanacRecord(**base)


def test_circular_orbit_radius_constant():
    rec = _rec(0.0)
    assert _kepler(1.234, 0.0) == 1.234
    for t in np.linspace(0, 86400, 25):
        assert np.linalg.norm(sat_position(rec, t)) == pytest.approx(rec.semi_major_axis, rel=1e-12)


def test_radius_within_ellipse_bounds():
    rec = _rec(0.3)
    a = rec.semi_major_axis
    for t in np.linspace(0, 86400, 200):
        r = np.linalg.norm(sat_position(rec, t))
        assert a * 0.7 - 1e-6 <= r <= a * 1.3 + 1e-6


def test_orbital_period():
    rec = _rec(0.1)
    period = 2 * math.pi * math.sqrt(rec.semi_major_axis**3 / GM_EARTH)
    for t in (0.0, 1000.0, 30000.0):
        np.testing.assert_allclose(orbital_plane_position(rec, t), orbital_plane_position(rec, t + period), atol=1.0)


def test_kepler_rejects_nonconvergence():
    with pytest.raises(AlmanacError):
        AlmanacRecord(1, 1.2, 0, 0, 0, 5000, 0, 0, 0, 1)


def test_constellation_cache_is_quantized():
    con = Constellation(parse_yuma(YUMA), quantum=0.2)
    a = con.positions(100.0)
    b = con.positions(100.04)
    assert a is b


# ---------------------------------------------------------------- geometry


def test_elevation_azimuth_conventions():
    assert elevation_azimuth([0, 0, 0], [0, 0, 1e7])[0] == pytest.approx(math.pi / 2)
    assert elevation_azimuth([0, 0, 0], [1e7, 0, 0])[0] == pytest.approx(0.0)
    assert elevation_azimuth([0, 0, 0], [1e7, 0, 1e6])[1] == pytest.approx(math.pi / 2)
    assert elevation_azimuth([0, 0, 0], [0, 1e7, 1e6])[1] == pytest.approx(0.0)


# ---------------------------------------------------------------- noise


def test_noise_constants_and_examples():
    assert pseudorange_noise_var(math.pi / 2) == pytest.approx(5.0)
    assert pseudorange_noise_var(math.radians(30)) == pytest.approx(20.0)
    assert math.isfinite(pseudorange_noise_var(math.radians(10)))
    with pytest.raises(ValueError):
        pseudorange_noise_var(math.radians(9))


# ---------------------------------------------------------------- scenes


def test_scene_loading_errors(tmp_path):
    with pytest.raises(SceneError, match="building 0"):
        scene_from_dict({"altitude": 10, "buildings": [{"footprint": [[0, 0], [1, 0]], "height": 5}]})
    with pytest.raises(SceneError, match="building 1"):
        scene_from_dict({"altitude": 10, "buildings": [{"footprint": [[0, 0], [1, 0], [0, 1]], "height": 5}, {"footprint": [[0, 0], [1, 0], [0, 1]], "height": -1}]})
    p = tmp_path / "bad.json"
    p.write_text('{"altitude": 10,\n "buildings": [,]}')
    with pytest.raises(SceneError, match="line 2"):
        load_scene(p)


def test_scene_round_trip(tmp_path):
    s = wall_scene()
    p = tmp_path / "s.json"
    p.write_text(json.dumps(s.to_dict()))
    t = load_scene(p)
    assert t.altitude == s.altitude and len(t.buildings) == 1


def test_decompose_l_shape():
    l_shape = np.array([[0, 0], [2, 0], [2, 1], [1, 1], [1, 2], [0, 2]], dtype=float)
    pieces = decompose_convex(l_shape)
    def area(p):
        x, y = p[:, 0], p[:, 1]
        return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))

    total = sum(area(p) for p in pieces)
    assert len(pieces) >= 2
    assert total == pytest.approx(3.0)


# ---------------------------------------------------------------- ray tracing


def test_empty_scene_is_open():
    scene = scene_from_dict({"buildings": [], "altitude": 50})
    for az in np.linspace(0, 2 * np.pi, 12, endpoint=False):
        sat = 2e7 * np.array([np.cos(az), np.sin(az), 0.8])
        assert classify_signal([0, 0], sat, scene).kind is SignalKind.OPEN


def test_low_satellite_behind_building_blocked():
    scene = wall_scene(height=120.0, altitude=65.0)
    sat = 2e7 * np.array([1.0, 0.0, 0.2])
    assert classify_signal([0, 0], sat, scene).kind is SignalKind.BLOCKED


def test_blocking_monotone_in_height():
    rng = np.random.default_rng(0)
    for _ in range(50):
        sat = 2e7 * np.array([*rng.normal(size=2), rng.uniform(0.05, 1.0)])
        rx = rng.uniform(-10, 10, 2)
        was_blocked = False
        for h in (5, 20, 40, 80, 160):
            blocked = classify_signal(rx, sat, wall_scene(height=h)).kind is SignalKind.BLOCKED
            assert blocked or not was_blocked
            was_blocked = blocked


def _fermat_delta(rx, sat, wall_x, y_lo, y_hi, height):
    """Shortest receiver -> wall -> satellite path over points on the plane x = wall_x."""

    def length(q):
        return np.linalg.norm(sat - q) + np.linalg.norm(q - rx)

    def over_y(y):
        res = minimize_scalar(lambda z: length(np.array([wall_x, y, z])), bounds=(0, height), method="bounded", options={"xatol": 1e-10})
        return res.fun

    res = minimize_scalar(over_y, bounds=(y_lo, y_hi), method="bounded", options={"xatol": 1e-10})
    return res.fun - np.linalg.norm(sat - rx)


def test_single_wall_reflection_matches_fermat_oracle():
    scene = wall_scene(height=40.0, altitude=10.0)
    el, az = math.radians(25), math.radians(260)  # west, slightly south
    sat = 2.2e7 * np.array([math.sin(az) * math.cos(el), math.cos(az) * math.cos(el), math.sin(el)])
    sig = classify_signal([0, 0], sat, scene)
    assert sig.kind is SignalKind.MULTIPATH
    assert len(sig.path_deltas) == 1
    oracle = _fermat_delta(np.array([0, 0, 10.0]), sat, 20.0, -50, 50, 40.0)
    assert sig.path_deltas[0] == pytest.approx(oracle, abs=1e-3)
    # far-field closed form: twice the wall distance times the projected direction cosine
    d_hat = sat / np.linalg.norm(sat)
    assert sig.path_deltas[0] == pytest.approx(2 * 20.0 * -d_hat[0], rel=1e-5)


def test_reflection_needs_satellite_on_the_wall_side():
    scene = wall_scene(height=40.0)
    sat = 2e7 * np.array([0.3, 0.0, 1.0])  # east, high: direct clear, wall faces away
    assert classify_signal([0, 0], sat, scene).kind is SignalKind.OPEN


# ---------------------------------------------------------------- multipath


def _track_error(delta, amp, spacing, res=2e-5):
    """Zero crossing of a simulated early-late discriminator closest to the direct peak."""
    eps = np.arange(-0.5, 1.5, res)

    def corr(t):
        return np.maximum(1 - np.abs(t), 0) + amp * np.maximum(1 - np.abs(t - delta), 0)

    disc = corr(eps - spacing / 2) - corr(eps + spacing / 2)
    flat = eps[np.abs(disc) <= 1e-9]
    idx = np.flatnonzero(np.sign(disc[:-1]) * np.sign(disc[1:]) < 0)
    cross = eps[idx] - disc[idx] * res / (disc[idx + 1] - disc[idx])
    cands = np.concatenate([flat, cross])
    return cands[np.argmin(np.abs(cands))]


@pytest.mark.parametrize("amp", [0.25, 0.5, 1.0])
def test_envelope_matches_discriminator(amp):
    env = MultipathEnvelope(0.25, CA_CHIP_LENGTH, amp)
    for tau in np.linspace(0, 1.3, 60):
        expected = _track_error(tau, amp, 0.25) * CA_CHIP_LENGTH
        assert multipath_bias_bound(tau * CA_CHIP_LENGTH, env) == pytest.approx(expected, abs=0.01 * env.plateau)


def test_envelope_examples():
    env = MultipathEnvelope()
    assert multipath_bias_bound(0.0, env) == 0.0
    assert multipath_bias_bound(env.support, env) == 0.0
    assert multipath_bias_bound(env.support + 10, env) == 0.0
    assert env.plateau == pytest.approx(0.125 * 293.05, rel=1e-3)


def test_envelope_continuous_and_bounded():
    env = MultipathEnvelope(0.25, CA_CHIP_LENGTH, 0.6)
    grid = np.linspace(0, 1.5 * CA_CHIP_LENGTH, 20001)
    vals = multipath_bias_bound(grid, env)
    assert np.all(vals <= env.plateau + 1e-12) and np.all(vals >= 0)
    a, d = 0.6, 0.25
    for bp in (d * (1 + a) / 2, 1 + d / 2 - d * (2 - a) / 2, 1 + d / 2):
        x = bp * CA_CHIP_LENGTH
        assert multipath_bias_bound(x - 1e-7, env) == pytest.approx(multipath_bias_bound(x + 1e-7, env), abs=1e-6)


def test_envelope_rejects_bad_parameters():
    with pytest.raises(ValueError):
        MultipathEnvelope(spacing=0.0)
    with pytest.raises(ValueError):
        MultipathEnvelope(amplitude=1.5)


# ---------------------------------------------------------------- measurements


class StaticSky(Constellation):
    """Constellation stub returning fixed ENU positions through the ECEF interface."""

    def __init__(self, enu, anchor):
        from pzplan.gnss.geometry import enu_rotation, geodetic_to_ecef

        rot = enu_rotation(anchor[0], anchor[1])
        self._ecef = {i + 1: geodetic_to_ecef(*anchor) + rot.T @ np.asarray(p, float) for i, p in enumerate(enu)}
        self.records = ()

    def positions(self, t):
        return self._ecef


def _env(scene, enu):
    return GnssEnvironment(scene, StaticSky(enu, scene.anchor))


def test_view_filters_mask_and_blocked():
    scene = wall_scene(height=120.0, altitude=65.0)
    enu = [[2e7, 0, 0.2 * 2e7], [0, 0, 2e7], [0, 2e7, 0.1 * 2e7]]
    view = _env(scene, enu).view([0, 0], 0.0)
    assert view.prns == (2,)
    assert view.noise_var[0] == pytest.approx(5.0, rel=1e-6)


def test_simulation_without_noise_matches_model():
    scene = scene_from_dict({"buildings": [], "altitude": 65})
    enu = [[1e7, 1e7, 1.5e7], [-1e7, 0.3e7, 2e7]]
    env = _env(scene, enu)
    x = np.array([3.0, 4.0, 0.5])
    z, view, b = simulate_measurements(x, env, 0.0, ZeroBias(), np.random.default_rng(0), noise_scale=0.0)
    np.testing.assert_allclose(z, measurement(x, view.positions, 65.0))
    assert env.heading_var == 0.001


def test_bias_policies():
    rng = np.random.default_rng(1)
    bound = np.array([3.0, 0.0, 7.0])
    wc = WorstCaseConstant()
    first = wc.draw((1, 2, 3), bound, rng)
    np.testing.assert_array_equal(np.abs(first), bound)
    for _ in range(10):
        np.testing.assert_array_equal(wc.draw((1, 2, 3), bound, rng), first)
    for _ in range(100):
        assert np.all(np.abs(UniformPerEpoch().draw((1, 2, 3), bound, rng)) <= bound)
    assert isinstance(make_bias_policy("uniform-per-epoch"), UniformPerEpoch)
    with pytest.raises(ValueError):
        make_bias_policy("nope")


def test_visibility_deterministic():
    scene = wall_scene(height=40.0, altitude=10.0)
    el, az = math.radians(25), math.radians(260)
    enu = [2.2e7 * np.array([math.sin(az) * math.cos(el), math.cos(az) * math.cos(el), math.sin(el)])]
    a = _env(scene, enu).view([0, 0], 0.0)
    b = _env(scene, enu).view([0, 0], 0.0)
    assert a.prns == b.prns and np.array_equal(a.bias_bound, b.bias_bound)
    assert a.bias_bound[0] > 0
