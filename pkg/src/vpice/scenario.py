"""Benchmark configuration: square domain, initial ice cover, steady rotating
ocean current, and a cyclone wind system traveling back and forth along the
domain diagonal.

All inputs and outputs are SI (meters, seconds); the wind formula's km-scaled
radius vector is folded into the amplitude constant.
"""

from dataclasses import dataclass, replace

import numpy as np

from .model import GoalSpec

DAY = 86400.0
KM = 1.0e3


@dataclass(frozen=True)
class Scenario:
    name: str
    L: float                 # domain side (m)
    T: float                 # horizon (s)
    A0: float                # initial concentration (constant)
    H0: callable             # (x, y) -> m
    ocean: callable          # (x, y) -> (m/s, m/s)
    wind: callable           # (x, y, t) -> (m/s, m/s)
    goal: GoalSpec

    def with_horizon(self, T):
        g = self.goal
        if g.t_end == self.T:
            g = replace(g, t_end=float(T))
        return replace(self, T=float(T), goal=g)


def initial_H(x, y):
    """0.3 m plus small cosine ridges (arguments are km-scaled radians)."""
    return 0.3 + 0.005 * (np.cos(x / (25 * KM)) + np.cos(y / (50 * KM)))


def ocean_velocity(x, y):
    """Steady rigid rotation about the domain center, 0.01 m/s scale."""
    return 0.01 * (y / (250 * KM) - 1.0), 0.01 * (1.0 - x / (250 * KM))


def rotation(alpha):
    """Clockwise-convention rotation matrix [[c, s], [-s, c]]."""
    c, s = np.cos(alpha), np.sin(alpha)
    return np.array([[c, s], [-s, c]])


# cyclone track: (250,250) km -> day 4 -> (450,450) -> day 12 -> (50,50)
# -> day 20 -> (450,450), then back and forth with a 16-day period.
_C0 = np.array([250.0, 250.0]) * KM
_CNE = np.array([450.0, 450.0]) * KM
_CSW = np.array([50.0, 50.0]) * KM
ALPHA_NE = np.deg2rad(90.0 - 18.0)   # on legs toward the NE corner
ALPHA_SW = np.deg2rad(90.0 - 9.0)    # on legs toward the SW corner


def cyclone_track(t):
    """Center position m(t) (2-vector, meters) and the active leg's angle."""
    td = t / DAY
    if td < 4.0:
        frac = td / 4.0
        return _C0 + frac * (_CNE - _C0), ALPHA_NE
    s = (td - 4.0) % 16.0
    if s < 8.0:
        return _CNE + (s / 8.0) * (_CSW - _CNE), ALPHA_SW
    return _CSW + ((s - 8.0) / 8.0) * (_CNE - _CSW), ALPHA_NE


def wind_velocity(x, y, t):
    """Spiral wind around the moving center: 15 m/s * (1/50) e^{-r/100km}
    * R(alpha) * (radius vector in km); peaks near 11 m/s at r = 100 km."""
    m, alpha = cyclone_track(t)
    dx, dy = x - m[0], y - m[1]
    r = np.sqrt(dx ** 2 + dy ** 2)
    amp = (15.0 / (50.0 * KM)) * np.exp(-r / (100.0 * KM))
    c, s = np.cos(alpha), np.sin(alpha)
    return amp * (c * dx + s * dy), amp * (-s * dx + c * dy)


def _zero_pair(x, y, *a):
    z = np.zeros(np.broadcast(x, y).shape)
    return z, z.copy()


def _flat_H(x, y):
    return np.full(np.broadcast(x, y).shape, 0.3)


def benchmark(test=1, T=None, A0=None, forcing="benchmark"):
    """The two benchmark presets.

    test 1: T = 1 day, A0 = 1.0, goal box (375, 500 km)^2.
    test 2: T = 33 days, A0 = 0.9, goal box (250, 375 km)^2.

    The goal functional is the time-mean ice concentration in the box,
    reported in reference units where a fully covered box reads 1.5
    (area_scale = |box| / 1.5, so J = 1.5 * mean A).

    forcing = "zero" turns off wind and ocean and flattens the initial
    thickness, so the rest state is steady: with H varying the compressive
    part of the stress, -P/2 I, has a nonzero divergence and the ice would
    creep away from rest even without forcing.
    """
    L = 500 * KM
    if test == 1:
        T0, A0d = 1 * DAY, 1.0
        rect = (375 * KM, 500 * KM, 375 * KM, 500 * KM)
    elif test == 2:
        T0, A0d = 33 * DAY, 0.9
        rect = (250 * KM, 375 * KM, 250 * KM, 375 * KM)
    else:
        raise ValueError("test preset must be 1 or 2")
    T = float(T if T is not None else T0)
    A0 = float(A0 if A0 is not None else A0d)
    H0 = initial_H
    if forcing == "zero":
        ocean, wind = _zero_pair, _zero_pair
        H0 = _flat_H
    elif forcing == "benchmark":
        ocean, wind = ocean_velocity, wind_velocity
    else:
        raise ValueError(f"unknown forcing {forcing!r}")
    box_area = (rect[1] - rect[0]) * (rect[3] - rect[2])
    return Scenario(name=f"benchmark{test}", L=L, T=T, A0=A0, H0=H0,
                    ocean=ocean, wind=wind,
                    goal=GoalSpec(rect=rect, t_start=0.0, t_end=T,
                                  area_scale=box_area / 1.5))
