"""Synthetic satellite sky: slowly drifting MEO tracks plus fixed-position GEO SBAS satellites."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..core import Band, Constellation, LocalFrame, SatState, SignalId, geodetic_to_ecef

R_MEO_GPS = 26_560e3
R_MEO_GAL = 29_600e3
R_GEO = 42_164e3

# Austin, TX; used as the default reference-station site
DEFAULT_REF_LLH = (30.2849, -97.7341, 150.0)


@dataclass(frozen=True)
class SatTrack:
    constellation: Constellation
    prn: int
    bands: tuple[Band, ...]
    az0: float  # deg at t = 0
    el0: float
    az_rate: float  # deg/s
    el_rate: float
    radius: float

    def az_el(self, t: float) -> tuple[float, float]:
        return (self.az0 + self.az_rate * t) % 360.0, self.el0 + self.el_rate * t

    def signals(self) -> list[SignalId]:
        return [SignalId(self.constellation, self.prn, b) for b in self.bands]


def _slant_range(radius: float, el_deg: float, site_radius: float) -> float:
    el = math.radians(el_deg)
    return -site_radius * math.sin(el) + math.sqrt(radius ** 2 - (site_radius * math.cos(el)) ** 2)


@dataclass
class Sky:
    """Satellite positions as a function of scenario time, anchored at the reference site."""

    frame: LocalFrame
    tracks: tuple[SatTrack, ...]

    def position(self, track: SatTrack, t: float) -> np.ndarray:
        az, el = track.az_el(t)
        a, e = math.radians(az), math.radians(el)
        u = np.array([math.cos(e) * math.sin(a), math.cos(e) * math.cos(a), math.sin(e)])
        rho = _slant_range(track.radius, el, float(np.linalg.norm(self.frame.origin_ecef)))
        return self.frame.origin_ecef + rho * (self.frame.rot.T @ u)

    def velocity(self, track: SatTrack, t: float, h: float = 1e-3) -> np.ndarray:
        return (self.position(track, t + h) - self.position(track, t - h)) / (2.0 * h)

    def states(self, t: float, tracks=None) -> dict[SignalId, SatState]:
        out = {}
        for tr in tracks if tracks is not None else self.tracks:
            pos = self.position(tr, t)
            for sig in tr.signals():
                out[sig] = SatState(sig, pos)
        return out

    def track_of(self, sig: SignalId) -> SatTrack:
        for tr in self.tracks:
            if tr.constellation == sig.constellation and tr.prn == sig.prn:
                return tr
        raise KeyError(sig)


def make_sky(seed: int, duration: float, n_gps: int = 10, n_gps_l2: int = 6, n_gal: int = 8,
             sbas: tuple[tuple[float, float], ...] = ((200.0, 38.0), (135.0, 27.0)),
             ref_llh=DEFAULT_REF_LLH, max_rate_deg_min: float = 0.5) -> Sky:
    """Draw a sky of drifting MEO satellites and fixed GEOs.

    Azimuths are spread by the golden angle with jitter so that no quadrant is
    empty; elevations follow a uniform-in-sine law above 8 degrees. Drift rates
    are bounded by ``max_rate_deg_min`` and chosen so tracks stay between 6 and
    88 degrees for the whole ``duration``.
    """
    rng = np.random.default_rng([seed, 0x5C1])
    frame = LocalFrame.at(geodetic_to_ecef(*ref_llh))
    tracks = []
    golden = 137.50776
    rate_max = max_rate_deg_min / 60.0

    def draw(const, prn, bands, radius, k):
        az0 = (k * golden + rng.uniform(0.0, 360.0 / 12.0) + rng.uniform(0, 360) * (k == 0)) % 360.0
        el0 = math.degrees(math.asin(rng.uniform(math.sin(math.radians(8.0)), 0.98)))
        heading = rng.uniform(0.0, 2.0 * math.pi)
        speed = rng.uniform(0.4, 1.0) * rate_max
        az_rate = speed * math.cos(heading)
        el_rate = speed * math.sin(heading)
        # keep the track inside [6, 88] deg over the run
        end = el0 + el_rate * duration
        if end < 6.0 or end > 88.0:
            el_rate = -el_rate
            end = el0 + el_rate * duration
            if end < 6.0 or end > 88.0:
                el_rate = 0.0
        return SatTrack(const, prn, bands, az0, el0, az_rate, el_rate, radius)

    k = 0
    for i in range(n_gps):
        bands = (Band.L1, Band.L2) if i < n_gps_l2 else (Band.L1,)
        tracks.append(draw(Constellation.GPS, 2 + 3 * i, bands, R_MEO_GPS, k))
        k += 1
    for i in range(n_gal):
        tracks.append(draw(Constellation.GALILEO, 1 + 4 * i, (Band.L1,), R_MEO_GAL, k))
        k += 1
    for i, (az, el) in enumerate(sbas):
        tracks.append(SatTrack(Constellation.SBAS, 131 + 2 * i, (Band.L1,), az, el, 0.0, 0.0, R_GEO))
    return Sky(frame, tuple(tracks))
