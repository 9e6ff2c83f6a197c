import math
from dataclasses import fields, replace

import numpy as np
import pytest

from urbanrtk.core import Band, Constellation, SignalId
from urbanrtk.scenario.route import (Building, RouteSpec, Segment, SegmentKind, StreetSpec, Trajectory, Visibility,
                                     generate_truth, visibility)
from urbanrtk.scenario.sky import make_sky
from urbanrtk.scenario.suite import standard_suite, stationary_route, urban_route
from urbanrtk.scenario.synth import ErrorModel, outlier_probabilities, rover_integer, synthesize_epoch
from urbanrtk.runner import run_scenario


# ---- kinematics ----

def test_stationary_route_has_constant_position():
    tr = generate_truth(stationary_route(10.0))
    p0 = tr[0].pos_enu
    for e in tr:
        assert np.array_equal(e.pos_enu, p0)
        assert np.array_equal(e.vel_enu, np.zeros(3))


def test_straight_segment_spacing():
    route = RouteSpec((Segment(SegmentKind.OPEN_SKY, 10.0, 90.0, 10.0, ramp=0.0),), undulation=(0.0, 90.0))
    tr = generate_truth(route)
    steps = [np.linalg.norm(b.pos_enu - a.pos_enu) for a, b in zip(tr, tr[1:])]
    assert np.allclose(steps, 2.0, atol=1e-12)


def test_velocity_matches_finite_difference():
    traj = Trajectory(urban_route(3, duration=240.0))
    h = 1e-4
    for t in np.linspace(0.5, 239.5, 400):
        fd = (traj.at(t + h).pos - traj.at(t - h).pos) / (2 * h)
        assert np.max(np.abs(fd - traj.at(t).vel)) < 1e-6


def test_route_validation():
    with pytest.raises(ValueError):
        RouteSpec((Segment(SegmentKind.STREET, 10.0, 0.0, 5.0),))
    with pytest.raises(ValueError):
        RouteSpec((Segment(SegmentKind.OPEN_SKY, 10.0, 0.0, -1.0),))


def test_urban_route_duration_and_bookends():
    r = urban_route(0)
    assert r.duration == pytest.approx(480.0)
    assert r.segments[0].kind == SegmentKind.STATIONARY and r.segments[-1].kind == SegmentKind.STATIONARY
    assert r.n_epochs == 2400


# ---- visibility ----

def _street(**kw):
    return Segment(SegmentKind.STREET, 30.0, 270.0, 10.0, ramp=0.0, street=StreetSpec(**kw))


def test_zenith_is_always_clear():
    seg = _street(mask_profile=((0.0, 89.0), (90.0, 89.0)))
    assert visibility(123.0, 90.0, seg, 0.0) == Visibility.CLEAR
    assert visibility(0.0, 90.0, Segment(SegmentKind.OPEN_SKY, 1.0), 0.0) == Visibility.CLEAR


def test_open_sky_mask():
    seg = Segment(SegmentKind.OPEN_SKY, 1.0)
    assert visibility(0.0, 5.5, seg, 0.0) == Visibility.CLEAR
    assert visibility(0.0, 4.5, seg, 0.0) == Visibility.BLOCKED


def test_along_axis_satellite_below_mask_is_blocked():
    seg = _street(mask_profile=((0.0, 60.0), (90.0, 15.0)))
    assert visibility(270.0, 20.0, seg, 0.0) == Visibility.BLOCKED
    assert visibility(90.0, 20.0, seg, 0.0) == Visibility.BLOCKED
    assert visibility(180.0, 20.0, seg, 0.0) == Visibility.CLEAR


def test_glimpse_between_two_buildings():
    # driving west at 10 m/s; a south satellite at 35 deg looks across the left facade line
    left = (Building(20.0, 50.0, 25.0), Building(90.0, 300.0, 25.0))
    seg = _street(left=left, right=(), half_width=10.0, end_mask=12.0)
    states = [visibility(180.0, 35.0, seg, seg.distance(k * 0.2)) for k in range(150)]
    runs = []
    for s in states:
        if runs and runs[-1][0] == s:
            runs[-1][1] += 1
        else:
            runs.append([s, 1])
    assert [r[0] for r in runs] == [Visibility.CLEAR, Visibility.BLOCKED, Visibility.CLEAR, Visibility.BLOCKED]
    assert runs[2][1] * 0.2 == pytest.approx(4.0, abs=0.2)


def test_visibility_is_deterministic():
    route = urban_route(5, duration=120.0)
    sky = make_sky(5, 120.0)
    a = generate_truth(route, 5, sky)
    b = generate_truth(route, 5, sky)
    assert all(x.clear == y.clear and x.intervals == y.intervals for x, y in zip(a, b))


def test_integers_constant_within_visibility_intervals():
    route = urban_route(2, duration=200.0)
    truths = generate_truth(route, 2, make_sky(2, 200.0))
    redraws = 0
    for prev, cur in zip(truths, truths[1:]):
        for sig, vis in cur.clear.items():
            if sig not in prev.clear:
                continue
            if vis and not prev.clear[sig]:
                assert cur.intervals[sig] == prev.intervals[sig] + 1
                redraws += 1
            else:
                assert cur.intervals[sig] == prev.intervals[sig]
                assert rover_integer(sig, cur.intervals[sig], 2) == rover_integer(sig, prev.intervals[sig], 2)
    assert redraws > 0


# ---- synthesis ----

def test_error_model_validation():
    with pytest.raises(ValueError):
        ErrorModel(p_outlier=1.5)
    with pytest.raises(ValueError):
        ErrorModel(sigma_rho=-1.0)
    with pytest.raises(ValueError):
        ErrorModel(outlier_range=(10.0, 5.0))


def test_outlier_probabilities_preserve_the_mean():
    route = urban_route(1, duration=60.0)
    truths = generate_truth(route, 1, make_sky(1, 60.0))
    for tr in truths[::37]:
        p = outlier_probabilities(tr, ErrorModel())
        if p:
            assert np.mean(list(p.values())) == pytest.approx(0.05, rel=1e-12)
            assert max(p.values()) <= 1.0


def test_outlier_count_matches_binomial_expectation():
    sky = make_sky(4, 400.0)
    truths = generate_truth(stationary_route(400.0), 4, sky)
    noisy = ErrorModel(sigma_rho=0.1, elevation_scaling=False, p_outlier=0.05)
    clean = ErrorModel.noiseless()
    count = n = 0
    mean = var = 0.0
    for tr in truths[::2]:
        a, _ = synthesize_epoch(tr, sky, noisy, 4)
        b, _ = synthesize_epoch(tr, sky, clean, 4)
        pa = outlier_probabilities(tr, noisy)
        bmap = {o.sig: o for o in b.obs}
        for o in a.obs:
            if not o.valid:
                continue
            n += 1
            count += abs(o.pseudorange - bmap[o.sig].pseudorange) > 2.0
            mean += pa[o.sig]
            var += pa[o.sig] * (1 - pa[o.sig])
    assert n >= 10_000
    assert abs(count - mean) <= 3 * math.sqrt(var)


def test_reference_always_sees_open_sky():
    route = urban_route(0, duration=120.0)
    sky = make_sky(0, 120.0)
    truths = generate_truth(route, 0, sky)
    tr = max(truths, key=lambda t: sum(not v for v in t.clear.values()))
    rover, ref = synthesize_epoch(tr, sky, ErrorModel(), 0)
    assert any(not o.valid for o in rover.obs)
    assert all(o.valid for o in ref.obs)


def test_synthesis_is_deterministic():
    sky = make_sky(3, 20.0)
    tr = generate_truth(stationary_route(20.0), 3, sky)[17]
    assert synthesize_epoch(tr, sky, ErrorModel(), 3) == synthesize_epoch(tr, sky, ErrorModel(), 3)


def test_reference_latency_is_visible_as_age_of_data():
    sc = replace(standard_suite()["S7"], route="stationary", duration=20.0)
    res = run_scenario(sc, 0)
    ages = [s.age_of_data for s in res.solutions if not math.isnan(s.age_of_data)]
    assert ages and all(abs(a - 0.4) <= 0.2 + 1e-9 for a in ages)


# ---- catalog ----

def test_suite_catalog():
    s = standard_suite()
    assert list(s) == [f"S{i}" for i in range(1, 16)]
    assert not s["S5"].implemented
    assert s["S14"].engine.exclusion_depth == 0
    assert [s[k].error.reference_latency for k in ("S6", "S7", "S8", "S9")] == [0.2, 0.4, 0.6, 1.0]


def test_s2_differs_from_s1_only_in_wipeoff_fields():
    s = standard_suite()
    s1, s2 = s["S1"], s["S2"]
    diff = {f.name for f in fields(ErrorModel) if getattr(s1.error, f.name) != getattr(s2.error, f.name)}
    assert diff == {"p_half_cycle", "wipeoff_error_rate"}
    assert s1.engine == s2.engine and s1.drop_types == s2.drop_types and s1.route == s2.route


def test_constellation_removal_filters_signals():
    s = standard_suite()
    assert not s["S13"].keeps(SignalId(Constellation.GALILEO, 3, Band.L1))
    assert s["S13"].keeps(SignalId(Constellation.GPS, 3, Band.L1))
    assert not s["S12"].keeps(SignalId(Constellation.GPS, 3, Band.L2))


def test_unimplemented_scenario_refuses_to_run():
    with pytest.raises(NotImplementedError):
        run_scenario(standard_suite()["S5"], 0)
