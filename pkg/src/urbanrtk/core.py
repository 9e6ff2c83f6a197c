"""Shared GNSS domain types, constants and WGS-84 geometry."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum, IntEnum

import numpy as np

C_LIGHT = 299792458.0
F_L1 = 1575.42e6
F_L2 = 1227.60e6
CHIP_RATE_L1CA = 1.023e6

WGS84_A = 6378137.0
WGS84_F = 1.0 / 298.257223563
WGS84_E2 = WGS84_F * (2.0 - WGS84_F)

SECONDS_PER_WEEK = 604800.0


class GeometryError(ValueError):
    """Raised for degenerate receiver/satellite geometry."""


class Constellation(IntEnum):
    GPS = 0
    GALILEO = 1
    SBAS = 2

    @property
    def code(self) -> str:
        return "GES"[self.value]

    @classmethod
    def from_code(cls, code: str) -> "Constellation":
        try:
            return cls("GES".index(code.strip().upper()))
        except ValueError:
            raise ValueError(f"unknown constellation code {code!r}") from None


class Band(IntEnum):
    L1 = 1
    L2 = 2

    @classmethod
    def from_name(cls, name: str) -> "Band":
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown band {name!r}") from None


_TRACKED = {
    (Constellation.GPS, Band.L1),
    (Constellation.GPS, Band.L2),
    (Constellation.GALILEO, Band.L1),
    (Constellation.SBAS, Band.L1),
}

_CARRIER_FREQ = {Band.L1: F_L1, Band.L2: F_L2}


def carrier_frequency(band: Band) -> float:
    return _CARRIER_FREQ[Band(band)]


def wavelength(band: Band) -> float:
    """Carrier wavelength in meters."""
    return C_LIGHT / _CARRIER_FREQ[Band(band)]


@dataclass(frozen=True, order=True)
class GnssTime:
    """GPS week and seconds of week."""

    week: int
    tow: float

    def __post_init__(self):
        if not 0.0 <= self.tow < SECONDS_PER_WEEK:
            raise ValueError(f"tow out of range: {self.tow}")

    @classmethod
    def from_seconds(cls, seconds: float) -> "GnssTime":
        week = int(seconds // SECONDS_PER_WEEK)
        tow = seconds - week * SECONDS_PER_WEEK
        if tow >= SECONDS_PER_WEEK:
            week, tow = week + 1, 0.0
        return cls(week, tow)

    @property
    def seconds(self) -> float:
        return self.week * SECONDS_PER_WEEK + self.tow

    def __add__(self, dt: float) -> "GnssTime":
        week, tow = self.week, self.tow + dt
        while tow >= SECONDS_PER_WEEK:
            week, tow = week + 1, tow - SECONDS_PER_WEEK
        while tow < 0.0:
            week, tow = week - 1, tow + SECONDS_PER_WEEK
        return GnssTime(week, tow)

    def __sub__(self, other: "GnssTime") -> float:
        return (self.week - other.week) * SECONDS_PER_WEEK + (self.tow - other.tow)


@dataclass(frozen=True, order=True)
class SignalId:
    constellation: Constellation
    prn: int
    band: Band

    def __post_init__(self):
        object.__setattr__(self, "constellation", Constellation(self.constellation))
        object.__setattr__(self, "band", Band(self.band))
        if (self.constellation, self.band) not in _TRACKED:
            raise ValueError(f"untracked signal type {self.constellation.name}-{self.band.name}")
        if self.prn <= 0:
            raise ValueError(f"invalid prn {self.prn}")

    @property
    def lam(self) -> float:
        return wavelength(self.band)

    @property
    def sat(self) -> tuple[Constellation, int]:
        return (self.constellation, self.prn)

    def __str__(self) -> str:
        return f"{self.constellation.code}{self.prn:02d}{self.band.name}"


@dataclass(frozen=True)
class Observable:
    """One signal's measurement record at one epoch.

    ``elevation`` may be NaN when the source format does not carry it (RINEX,
    CSV); the engine always recomputes elevation from satellite geometry.
    """

    sig: SignalId
    pseudorange: float
    carrier_phase: float
    doppler: float
    cn0: float
    s_theta: float
    elevation: float = math.nan
    coherent_code: bool = True
    valid: bool = True
    imported: bool = False

    def __post_init__(self):
        if not (-1.0 <= self.s_theta <= 1.0) and not math.isnan(self.s_theta):
            raise ValueError(f"s_theta out of range: {self.s_theta}")
        if self.cn0 < 0.0:
            raise ValueError(f"negative C/N0: {self.cn0}")
        if self.valid and not math.isnan(self.elevation) and not 0.0 <= self.elevation <= 90.0:
            raise ValueError(f"elevation out of range: {self.elevation}")


@dataclass(frozen=True)
class EpochObs:
    """All observables of one receiver at one epoch."""

    t: GnssTime
    obs: tuple[Observable, ...] = ()

    def by_signal(self) -> dict[SignalId, Observable]:
        return {o.sig: o for o in self.obs}


@dataclass(frozen=True)
class SatState:
    sig: SignalId
    pos_ecef: np.ndarray = field(compare=False)
    clock_bias: float = 0.0

    def __post_init__(self):
        pos = np.asarray(self.pos_ecef, dtype=float).reshape(3)
        pos.setflags(write=False)
        object.__setattr__(self, "pos_ecef", pos)
        r = float(np.linalg.norm(pos))
        if not 2.5e7 <= r <= 4.5e7:
            raise ValueError(f"satellite radius {r:.0f} m outside MEO/GEO range")


# ---- geodesy ----


def geodetic_to_ecef(lat_deg: float, lon_deg: float, h: float) -> np.ndarray:
    lat, lon = math.radians(lat_deg), math.radians(lon_deg)
    n = WGS84_A / math.sqrt(1.0 - WGS84_E2 * math.sin(lat) ** 2)
    return np.array([
        (n + h) * math.cos(lat) * math.cos(lon),
        (n + h) * math.cos(lat) * math.sin(lon),
        (n * (1.0 - WGS84_E2) + h) * math.sin(lat),
    ])


def ecef_to_geodetic(xyz) -> tuple[float, float, float]:
    """Latitude/longitude in degrees and ellipsoidal height, by fixed-point iteration."""
    x, y, z = (float(v) for v in xyz)
    p = math.hypot(x, y)
    lon = math.atan2(y, x)
    lat = math.atan2(z, p * (1.0 - WGS84_E2))
    h = 0.0
    for _ in range(10):
        n = WGS84_A / math.sqrt(1.0 - WGS84_E2 * math.sin(lat) ** 2)
        h = p / math.cos(lat) - n if abs(lat) < math.pi / 4 else z / math.sin(lat) - n * (1 - WGS84_E2)
        lat_new = math.atan2(z, p * (1.0 - WGS84_E2 * n / (n + h)))
        if abs(lat_new - lat) < 1e-14:
            lat = lat_new
            break
        lat = lat_new
    return math.degrees(lat), math.degrees(lon), h


def ecef_to_enu_matrix(lat_deg: float, lon_deg: float) -> np.ndarray:
    """Rotation taking ECEF vectors to local east/north/up (rows are E, N, U)."""
    sl, cl = math.sin(math.radians(lat_deg)), math.cos(math.radians(lat_deg))
    so, co = math.sin(math.radians(lon_deg)), math.cos(math.radians(lon_deg))
    return np.array([
        [-so, co, 0.0],
        [-sl * co, -sl * so, cl],
        [cl * co, cl * so, sl],
    ])


@dataclass(frozen=True)
class LocalFrame:
    """ENU frame anchored at a reference point."""

    origin_ecef: np.ndarray = field(compare=False)
    rot: np.ndarray = field(compare=False, repr=False)

    @classmethod
    def at(cls, origin_ecef) -> "LocalFrame":
        origin = np.asarray(origin_ecef, dtype=float).reshape(3).copy()
        lat, lon, _ = ecef_to_geodetic(origin)
        return cls(origin, ecef_to_enu_matrix(lat, lon))

    def to_ecef(self, enu) -> np.ndarray:
        return self.origin_ecef + self.rot.T @ np.asarray(enu, dtype=float)

    def to_enu(self, ecef) -> np.ndarray:
        return self.rot @ (np.asarray(ecef, dtype=float) - self.origin_ecef)


def los_and_elevation(sat: SatState, receiver_pos_ecef) -> tuple[np.ndarray, float, float]:
    """Unit line of sight in ENU, elevation and azimuth (degrees) from a receiver to a satellite."""
    rx = np.asarray(receiver_pos_ecef, dtype=float)
    d = sat.pos_ecef - rx
    r = float(np.linalg.norm(d))
    if r <= 1e6:
        raise GeometryError(f"receiver-satellite distance {r:.3g} m is degenerate")
    lat, lon, _ = ecef_to_geodetic(rx)
    u = ecef_to_enu_matrix(lat, lon) @ (d / r)
    u /= np.linalg.norm(u)
    el = math.degrees(math.asin(max(-1.0, min(1.0, u[2]))))
    az = math.degrees(math.atan2(u[0], u[1])) % 360.0
    if az >= 360.0:
        az = 0.0
    return u, el, az


def geometric_range(sat: SatState, pos_ecef) -> float:
    return float(np.linalg.norm(sat.pos_ecef - np.asarray(pos_ecef, dtype=float)))


def dd_geometry(base_pos, sat_i: SatState, sat_pivot: SatState) -> float:
    """Between-satellite range difference ``|s_i - p| - |s_pivot - p|`` at a position."""
    p = np.asarray(base_pos, dtype=float)
    for s in (sat_i, sat_pivot):
        if np.linalg.norm(s.pos_ecef - p) <= 1e6:
            raise GeometryError("degenerate geometry in range difference")
    return geometric_range(sat_i, p) - geometric_range(sat_pivot, p)
