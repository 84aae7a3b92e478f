from __future__ import annotations

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import omni
from mnsim.geometry import Grid, tile_center
from mnsim.radio import (
    angular_difference,
    bearing_deg,
    compute_coverage,
    compute_signal_measures,
    connects,
    directional_attenuation,
    dominance_from_strength,
    signal_dominance,
    signal_strength_dbm,
)


def sector(azimuth: float, **kw):
    return omni(cell_type="directional_120", azimuth_deg=azimuth, beam_h_deg=120.0, **kw)


def test_strength_at_reference_distance():
    ant = omni(x=0, y=0, power_w=10.0, path_loss_exponent=2.0)
    assert signal_strength_dbm(ant, (1.0, 0.0)) == pytest.approx(40.0, abs=1e-12)


def test_strength_at_hundred_metres():
    ant = omni(x=0, y=0, power_w=10.0, path_loss_exponent=2.0)
    assert signal_strength_dbm(ant, (0.0, 100.0)) == pytest.approx(0.0, abs=1e-12)


def test_strength_is_clamped_inside_reference_distance():
    ant = omni(x=0, y=0, power_w=10.0, path_loss_exponent=2.0)
    assert signal_strength_dbm(ant, (0.0, 0.0)) == pytest.approx(40.0)
    assert signal_strength_dbm(ant, (0.3, 0.4)) == pytest.approx(40.0)


def test_strength_floor():
    ant = omni(x=0, y=0, power_w=1e-12, path_loss_exponent=30.0)
    assert signal_strength_dbm(ant, (1e6, 0.0)) == -300.0


@pytest.mark.parametrize(
    "origin,point,bearing",
    [((0, 0), (0, 10), 0.0), ((0, 0), (10, 0), 90.0), ((0, 0), (0, -10), 180.0), ((0, 0), (-10, 0), 270.0), ((5, 5), (10, 10), 45.0)],
)
def test_bearing_is_clockwise_from_north(origin, point, bearing):
    assert bearing_deg(origin, point) == pytest.approx(bearing)


@pytest.mark.parametrize("a,b,diff", [(0, 0, 0), (10, 350, 20), (90, 270, 180), (359, 1, 2), (-30, 30, 60)])
def test_angular_difference(a, b, diff):
    assert angular_difference(a, b) == pytest.approx(diff)


@pytest.mark.parametrize("bearing,expected", [(90.0, 0.0), (160.0, 12.0), (20.0, 12.0), (270.0, 30.0), (0.0, 12 * (90 / 70) ** 2)])
def test_directional_attenuation(bearing, expected):
    assert directional_attenuation(sector(90.0), bearing) == pytest.approx(expected)


def test_omni_has_no_attenuation():
    assert directional_attenuation(omni(), 123.0) == 0.0


def test_directional_strength_uses_bearing():
    ant = sector(90.0, x=0, y=0, power_w=10.0, path_loss_exponent=2.0)
    ahead = signal_strength_dbm(ant, (100.0, 0.0))
    behind = signal_strength_dbm(ant, (-100.0, 0.0))
    assert ahead == pytest.approx(0.0)
    assert behind == pytest.approx(-30.0)


def test_dominance_values():
    ant = omni(dominance_midpoint_dbm=-70.0, dominance_steepness=0.2)
    assert dominance_from_strength(ant, -70.0) == 0.5
    assert dominance_from_strength(ant, -60.0) == pytest.approx(0.8808, abs=1e-4)
    assert dominance_from_strength(ant, -300.0) < 1e-15
    assert dominance_from_strength(ant, 1e6) == 1.0
    assert dominance_from_strength(ant, -1e6) == 0.0


@settings(max_examples=200, deadline=None)
@given(s1=st.floats(-300, 100), s2=st.floats(-300, 100), steep=st.floats(0.01, 5), mid=st.floats(-120, 0))
def test_dominance_monotone_and_bounded(s1, s2, steep, mid):
    ant = omni(dominance_midpoint_dbm=mid, dominance_steepness=steep)
    d1, d2 = dominance_from_strength(ant, s1), dominance_from_strength(ant, s2)
    assert 0.0 <= d1 <= 1.0
    if s1 <= s2:
        assert d1 <= d2


@settings(max_examples=200, deadline=None)
@given(delta=st.floats(-300, 300), steep=st.floats(0.01, 1))
def test_dominance_symmetry(delta, steep):
    ant = omni(dominance_midpoint_dbm=-70.0, dominance_steepness=steep)
    total = dominance_from_strength(ant, -70.0 + delta) + dominance_from_strength(ant, -70.0 - delta)
    assert total == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(r1=st.floats(0, 5000), r2=st.floats(0, 5000), gamma=st.floats(1, 6), angle=st.floats(0, 2 * math.pi))
def test_strength_non_increasing_with_distance(r1, r2, gamma, angle):
    ant = omni(x=0, y=0, path_loss_exponent=gamma)
    p1 = (r1 * math.cos(angle), r1 * math.sin(angle))
    p2 = (r2 * math.cos(angle), r2 * math.sin(angle))
    if r1 <= r2:
        assert signal_strength_dbm(ant, p1) >= signal_strength_dbm(ant, p2) - 1e-9


@settings(max_examples=200, deadline=None)
@given(az=st.floats(0, 360), off=st.floats(0, 180))
def test_attenuation_symmetric_about_azimuth(az, off):
    ant = sector(az)
    assert directional_attenuation(ant, az + off) == pytest.approx(directional_attenuation(ant, az - off))
    assert 0.0 <= directional_attenuation(ant, az + off) <= 30.0


def _oracle_strength(power_w, gamma, d, att=0.0):
    return max(30.0 + 10.0 * math.log10(power_w) - 10.0 * gamma * math.log10(max(d, 1.0)) - att, -300.0)


def test_measures_match_scalar_oracle():
    grid = Grid(0.0, 0.0, 20.0, 20.0, 4, 3)
    antennas = [omni(2, x=10, y=50, power_w=5.0, path_loss_exponent=3.5), omni(1, x=70, y=10, power_w=2.0)]
    measures = compute_signal_measures(antennas, grid)
    assert [(m.antenna_id, m.tile_id) for m in measures] == [(a, t) for a in (1, 2) for t in range(12)]
    by_id = {a.antenna_id: a for a in antennas}
    for m in measures:
        ant = by_id[m.antenna_id]
        d = math.dist(ant.position, tile_center(grid, m.tile_id))
        expected = _oracle_strength(ant.power_w, ant.path_loss_exponent, d)
        assert m.strength_dbm == pytest.approx(expected, abs=1e-9)
        assert m.dominance == pytest.approx(1 / (1 + math.exp(-0.2 * (expected + 70.0))), abs=1e-12)


def test_coverage_matches_brute_force():
    grid = Grid(0.0, 0.0, 10.0, 10.0, 10, 10)
    antennas = [
        omni(1, x=20, y=20, min_strength_dbm=0.0, min_dominance=0.3),
        # here dominance is the binding threshold
        sector(45.0, antenna_id=2, x=50, y=50, min_strength_dbm=-20.0, min_dominance=0.6, dominance_midpoint_dbm=-5.0),
    ]
    cells = compute_coverage(antennas, grid)
    assert [c.antenna_id for c in cells] == [1, 2]
    for ant, cell in zip(antennas, cells):
        expected = set()
        for t in grid.tile_ids:
            s = signal_strength_dbm(ant, tile_center(grid, t))
            if s >= ant.min_strength_dbm and signal_dominance(ant, tile_center(grid, t)) >= ant.min_dominance:
                expected.add(t)
        assert cell.covered_tiles == expected
        assert 0 < len(expected) < grid.n_tiles


def test_coverage_requires_both_thresholds():
    # strong enough but not dominant enough
    ant = omni(x=0, y=0, min_strength_dbm=-100.0, min_dominance=0.99, dominance_midpoint_dbm=0.0)
    assert signal_strength_dbm(ant, (50, 0)) > -100.0
    assert not connects(ant, (50, 0))
    # dominant but below the strength threshold
    ant = omni(x=0, y=0, min_strength_dbm=50.0, min_dominance=0.0)
    assert not connects(ant, (5, 0))


def test_one_antenna_four_tiles():
    grid = Grid(0.0, 0.0, 10.0, 10.0, 2, 2)
    ant = omni(x=5, y=5)
    measures = compute_signal_measures([ant], grid)
    assert len(measures) == 4
    assert measures[0].strength_dbm == signal_strength_dbm(ant, tile_center(grid, 0))


def test_vacuous_and_impossible_thresholds():
    grid = Grid(0.0, 0.0, 10.0, 10.0, 10, 10)
    (everywhere,) = compute_coverage([omni(min_strength_dbm=-400.0, min_dominance=0.0)], grid)
    assert everywhere.covered_tiles == frozenset(grid.tile_ids)
    (nowhere,) = compute_coverage([omni(min_strength_dbm=100.0)], grid)
    assert nowhere.covered_tiles == frozenset()
