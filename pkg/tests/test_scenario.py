import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from vpice.scenario import (DAY, KM, ALPHA_NE, ALPHA_SW, benchmark,
                            cyclone_track, initial_H, ocean_velocity,
                            rotation, wind_velocity)


def test_initial_thickness_values():
    # cos(0) + cos(0) = 2 and cos(pi) + cos(pi) = -2 bracket the field
    assert initial_H(0.0, 0.0) == pytest.approx(0.31)
    assert initial_H(25.0e3 * np.pi, 50.0e3 * np.pi) == pytest.approx(0.29)
    x = np.linspace(0.0, 500.0e3, 201)
    X, Y = np.meshgrid(x, x)
    H = initial_H(X, Y)
    assert H.min() >= 0.29 - 1e-12 and H.max() <= 0.31 + 1e-12


def test_ocean_current_samples():
    assert ocean_velocity(250.0e3, 250.0e3) == pytest.approx((0.0, 0.0))
    assert ocean_velocity(500.0e3, 250.0e3) == pytest.approx((0.0, -0.01))
    assert ocean_velocity(250.0e3, 0.0) == pytest.approx((-0.01, 0.0))


def test_ocean_current_rigid_rotation():
    # divergence-free with constant curl: finite differences at random points
    rng = np.random.default_rng(7)
    h = 10.0
    for _ in range(20):
        x, y = rng.uniform(0.0, 500.0e3, size=2)
        dudx = (ocean_velocity(x + h, y)[0] - ocean_velocity(x - h, y)[0]) / (2 * h)
        dvdy = (ocean_velocity(x, y + h)[1] - ocean_velocity(x, y - h)[1]) / (2 * h)
        dvdx = (ocean_velocity(x + h, y)[1] - ocean_velocity(x - h, y)[1]) / (2 * h)
        dudy = (ocean_velocity(x, y + h)[0] - ocean_velocity(x, y - h)[0]) / (2 * h)
        assert abs(dudx + dvdy) < 1e-12
        assert dvdx - dudy == pytest.approx(-2 * 0.01 / 250.0e3, rel=1e-6)


def test_rotation_matrix():
    assert np.allclose(rotation(0.0), np.eye(2))
    assert np.allclose(rotation(np.pi / 2), [[0.0, 1.0], [-1.0, 0.0]])
    for a in np.linspace(0.0, 2 * np.pi, 9):
        assert np.linalg.det(rotation(a)) == pytest.approx(1.0)


def test_cyclone_track_corners():
    assert cyclone_track(0.0)[0] == pytest.approx((250.0e3, 250.0e3))
    assert cyclone_track(4 * DAY)[0] == pytest.approx((450.0e3, 450.0e3))
    assert cyclone_track(8 * DAY)[0] == pytest.approx((250.0e3, 250.0e3))
    assert cyclone_track(12 * DAY)[0] == pytest.approx((50.0e3, 50.0e3))
    assert cyclone_track(20 * DAY)[0] == pytest.approx((450.0e3, 450.0e3))
    # 16-day period after the initial half leg
    m1, a1 = cyclone_track(5.5 * DAY)
    m2, a2 = cyclone_track(21.5 * DAY)
    assert np.allclose(m1, m2) and a1 == a2


def test_cyclone_track_angles():
    # 72 deg toward the NE corner, 81 deg on the way back down
    assert cyclone_track(1.0 * DAY)[1] == ALPHA_NE
    assert cyclone_track(6.0 * DAY)[1] == ALPHA_SW
    assert cyclone_track(10.0 * DAY)[1] == ALPHA_SW
    assert cyclone_track(15.0 * DAY)[1] == ALPHA_NE
    assert cyclone_track(18.0 * DAY)[1] == ALPHA_NE
    assert ALPHA_NE == pytest.approx(np.deg2rad(72.0))
    assert ALPHA_SW == pytest.approx(np.deg2rad(81.0))


def test_wind_zero_at_center():
    m, _ = cyclone_track(0.0)
    wx, wy = wind_velocity(m[0], m[1], 0.0)
    assert wx == 0.0 and wy == 0.0


def test_wind_peak_speed():
    # amplitude r exp(-r/100km) peaks at r = 100 km with speed 30/e m/s
    m, _ = cyclone_track(0.0)
    wx, wy = wind_velocity(m[0] + 100.0 * KM, m[1], 0.0)
    assert np.hypot(wx, wy) == pytest.approx(30.0 / math.e, rel=1e-12)
    # decays monotonically beyond the peak along a ray
    speeds = [np.hypot(*wind_velocity(m[0] + r, m[1], 0.0))
              for r in np.linspace(100.0 * KM, 600.0 * KM, 24)]
    assert all(a > b for a, b in zip(speeds, speeds[1:]))


def test_wind_rotation_direction():
    # at t=0 the radial vector is rotated clockwise by 72 deg
    m, _ = cyclone_track(0.0)
    wx, wy = wind_velocity(m[0] + 100.0 * KM, m[1], 0.0)
    s = 30.0 / math.e
    assert wx == pytest.approx(s * np.cos(np.deg2rad(72.0)))
    assert wy == pytest.approx(-s * np.sin(np.deg2rad(72.0)))
    # on a down-left leg the convergence angle switches to 81 deg
    m8, _ = cyclone_track(8 * DAY)
    wx, wy = wind_velocity(m8[0] + 100.0 * KM, m8[1], 8 * DAY)
    assert wx == pytest.approx(s * np.cos(np.deg2rad(81.0)))
    assert wy == pytest.approx(-s * np.sin(np.deg2rad(81.0)))


@given(st.floats(0.0, 32.0 * DAY), st.floats(0.0, 500.0e3),
       st.floats(0.0, 500.0e3))
def test_wind_speed_bounded(t, x, y):
    wx, wy = wind_velocity(x, y, t)
    assert np.hypot(wx, wy) <= 30.0 / math.e + 1e-9


def test_benchmark_presets():
    s1 = benchmark(test=1)
    assert s1.T == DAY and s1.A0 == 1.0
    assert s1.goal.rect == (375.0e3, 500.0e3, 375.0e3, 500.0e3)
    assert (s1.goal.t_start, s1.goal.t_end) == (0.0, DAY)
    s2 = benchmark(test=2)
    assert s2.T == 33 * DAY and s2.A0 == 0.9
    assert s2.goal.rect == (250.0e3, 375.0e3, 250.0e3, 375.0e3)
    s3 = benchmark(test=2, T=3 * DAY)
    assert s3.T == 3 * DAY and s3.goal.t_end == 3 * DAY


def test_zero_forcing_variant():
    s = benchmark(test=1, forcing="zero")
    assert s.wind(1.0e5, 2.0e5, 0.0) == (0.0, 0.0)
    assert s.ocean(1.0e5, 2.0e5) == (0.0, 0.0)
