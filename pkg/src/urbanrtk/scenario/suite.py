"""Scenario configurations: the urban drive route and the degradation catalog."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..core import Band, Constellation
from ..engine.config import EngineConfig
from .route import RouteSpec, Segment, SegmentKind, random_street
from .synth import ErrorModel

DEFAULT_DURATION_S = 480.0
MAX_ACCEL = 1.0  # m/s^2 peak of the speed ramps
# building-row parameters for the two street classes
DENSE_STREET = dict(height=(12.0, 45.0), p_gap=0.45)
LIGHT_STREET = dict(height=(8.0, 30.0), p_gap=0.6)


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    description: str
    error: ErrorModel = field(default_factory=ErrorModel)
    engine: EngineConfig = field(default_factory=EngineConfig)
    drop_types: tuple[tuple[int, int], ...] = ()  # (constellation, band) removed from both receivers
    duration: float = DEFAULT_DURATION_S
    route: str = "urban"  # "urban", "stationary" or "open"
    implemented: bool = True

    def keeps(self, sig) -> bool:
        return (int(sig.constellation), int(sig.band)) not in self.drop_types


def urban_route(seed: int, duration: float = DEFAULT_DURATION_S, epoch_rate: float = 5.0) -> RouteSpec:
    """A drive through mixed light and dense streets bracketed by stationary open-sky intervals.

    Street legs run along a grid (headings near multiples of 90 degrees) with
    seeded building rows. Legs cycle light street, dense street, light
    street, open boulevard.
    """
    rng = np.random.default_rng([seed, 0xD21])
    # bookends shrink for short runs so the route always spans ``duration``
    head, tail = min(30.0, 0.25 * duration), min(20.0, 0.15 * duration)
    segs = [Segment(SegmentKind.STATIONARY, head)]
    remaining = duration - head - tail
    leg = 0
    base_heading = rng.uniform(-10.0, 10.0)
    while remaining > 1e-9:
        length = min(remaining, float(rng.uniform(35.0, 70.0)))
        if remaining - length < 20.0:
            length = remaining
        heading = (base_heading + 90.0 * int(rng.integers(0, 4))) % 360.0
        speed = float(rng.uniform(5.0, 12.0))
        ramp = min(length / 2.0, max(4.0, speed * math.pi / (2.0 * MAX_ACCEL)))
        if leg % 4 == 3:
            segs.append(Segment(SegmentKind.OPEN_SKY, length, heading, speed, ramp))
        else:
            kind = DENSE_STREET if leg % 4 == 1 else LIGHT_STREET
            street = random_street(rng, (-200.0, speed * length + 200.0),
                                   half_width=float(rng.uniform(8.0, 14.0)), **kind)
            segs.append(Segment(SegmentKind.STREET, length, heading, speed, ramp, street=street))
        remaining -= length
        leg += 1
    segs.append(Segment(SegmentKind.STATIONARY, tail))
    return RouteSpec(tuple(segs), epoch_rate=epoch_rate)


def stationary_route(duration: float, epoch_rate: float = 5.0) -> RouteSpec:
    return RouteSpec((Segment(SegmentKind.STATIONARY, duration),), epoch_rate=epoch_rate)


def build_route(sc: ScenarioConfig, seed: int) -> RouteSpec:
    if sc.route == "urban":
        return urban_route(seed, sc.duration)
    if sc.route == "stationary":
        return stationary_route(sc.duration)
    if sc.route == "open":
        return RouteSpec((Segment(SegmentKind.STATIONARY, 10.0),
                          Segment(SegmentKind.OPEN_SKY, sc.duration - 10.0, 60.0, 10.0, 16.0)))
    raise ValueError(f"unknown route kind {sc.route!r}")


_GPS_L2 = (int(Constellation.GPS), int(Band.L2))
_GAL = (int(Constellation.GALILEO), int(Band.L1))
_SBAS = (int(Constellation.SBAS), int(Band.L1))


def standard_suite(duration: float = DEFAULT_DURATION_S, engine: EngineConfig | None = None) -> dict[str, ScenarioConfig]:
    """The degradation catalog, keyed S1..S15; S5 is listed but not implemented."""
    eng = engine or EngineConfig()
    err = ErrorModel()
    base = ScenarioConfig("S1", "Baseline system", err, eng, duration=duration)
    s = {"S1": base}
    s["S2"] = replace(base, name="S2", description="Data symbol wipeoff disabled (half-cycle re-lock ambiguity)",
                      error=replace(err, p_half_cycle=0.5, wipeoff_error_rate=0.5))
    s["S3"] = replace(base, name="S3", description="Scalar tracking, adaptive carrier bandwidth",
                      error=replace(err, f_model_error_hz=0.5))
    s["S4"] = replace(base, name="S4", description="Scalar tracking, fixed carrier bandwidth",
                      error=replace(err, f_model_error_hz=0.5, relock_tau=0.15))
    s["S5"] = replace(base, name="S5", description="GPS L2 pilot-only tracking (not implemented)",
                      implemented=False)
    for name, lat in (("S6", 0.2), ("S7", 0.4), ("S8", 0.6), ("S9", 1.0)):
        s[name] = replace(base, name=name, description=f"Age of data = {int(lat * 1000)} ms",
                          error=replace(err, reference_latency=lat))
    s["S10"] = replace(base, name="S10", description="Long baseline analog (noise x2, differential carrier ramp)",
                       error=replace(err, noise_scale=2.0, atmos_ramp_m_per_100s=0.02))
    s["S11"] = replace(base, name="S11", description="Without SBAS", drop_types=(_SBAS,))
    s["S12"] = replace(base, name="S12", description="Without GPS L2", drop_types=(_GPS_L2,))
    s["S13"] = replace(base, name="S13", description="Without Galileo", drop_types=(_GAL,))
    s["S14"] = replace(base, name="S14", description="No scored exclusion",
                       engine=replace(eng, exclusion_depth=0))
    s["S15"] = replace(base, name="S15", description="Rover antenna phase-center bias uncorrected",
                       error=replace(err, phase_bias_m=0.008))
    return s
