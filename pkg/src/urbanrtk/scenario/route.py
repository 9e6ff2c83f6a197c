"""Drive routes, ground-truth kinematics and street-canyon visibility."""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ..core import GnssTime, SignalId, los_and_elevation
from .sky import Sky


class SegmentKind(str, Enum):
    OPEN_SKY = "OpenSky"
    STREET = "Street"
    STATIONARY = "Stationary"


class Visibility(str, Enum):
    CLEAR = "CLEAR"
    BLOCKED = "BLOCKED"


OPEN_SKY_MASK_DEG = 5.0


@dataclass(frozen=True)
class Building:
    start: float  # along-street distance of the facade, m
    end: float
    height: float


@dataclass(frozen=True)
class StreetSpec:
    """Canyon geometry along a straight street.

    Facades are thin walls at ``half_width`` either side of the centerline.
    A line of sight toward relative azimuth beta reaches the facade at
    horizontal distance ``half_width / |sin beta|``; it is blocked when a
    building taller than the ray stands there. Rays that pass a facade line
    through a gap are still blocked below ``end_mask`` (distant clutter).
    ``mask_profile``, when given, replaces the building model with a
    piecewise-linear mask over folded relative azimuth (0 = along the
    street, 90 = perpendicular).
    """

    left: tuple[Building, ...] = ()
    right: tuple[Building, ...] = ()
    half_width: float = 10.0
    end_mask: float = 12.0
    antenna_height: float = 1.8
    mask_profile: tuple[tuple[float, float], ...] | None = None

    def _side_height(self, side: tuple[Building, ...], s: float) -> float:
        starts = [b.start for b in side]
        i = bisect.bisect_right(starts, s) - 1
        if i >= 0 and side[i].start <= s < side[i].end:
            return side[i].height
        return 0.0

    def mask_at(self, rel_az: float, el: float, s: float) -> bool:
        """True when a ray at relative azimuth ``rel_az`` and elevation ``el`` from along-street position ``s`` is blocked."""
        if self.mask_profile is not None:
            folded = abs(((rel_az + 90.0) % 180.0) - 90.0)
            xs, ys = zip(*self.mask_profile)
            return el <= float(np.interp(folded, xs, ys))
        b = math.radians(rel_az)
        sb, cb = math.sin(b), math.cos(b)
        if abs(sb) > 1e-9:
            dist = self.half_width / abs(sb)
            hit = s + dist * cb
            side = self.right if sb > 0 else self.left
            h = self._side_height(side, hit)
            if h > self.antenna_height + dist * math.tan(math.radians(el)):
                return True
        return el <= self.end_mask


def random_street(rng: np.random.Generator, extent: tuple[float, float], half_width: float = 10.0,
                  length=(15.0, 70.0), gap=(4.0, 35.0), height=(12.0, 60.0), p_gap: float = 0.45,
                  end_mask: float = 12.0) -> StreetSpec:
    """Seeded building rows covering ``extent`` (along-street meters) on both sides."""

    def row():
        out = []
        s = extent[0] - rng.uniform(0.0, length[1])
        while s < extent[1]:
            L = rng.uniform(*length)
            out.append(Building(s, s + L, rng.uniform(*height)))
            s += L
            if rng.uniform() < p_gap:
                s += rng.uniform(*gap)
        return tuple(out)

    return StreetSpec(left=row(), right=row(), half_width=half_width, end_mask=end_mask)


@dataclass(frozen=True)
class Segment:
    kind: SegmentKind
    length: float  # s
    heading: float = 0.0  # deg, direction of travel (street axis)
    speed: float = 0.0  # cruise speed, m/s
    ramp: float = 4.0  # s to reach cruise speed (and to stop at the end)
    street: StreetSpec | None = None

    def distance(self, tau: float) -> float:
        """Along-track distance covered ``tau`` seconds into the segment."""
        if self.kind == SegmentKind.STATIONARY or self.speed == 0.0:
            return 0.0
        tau = min(max(tau, 0.0), self.length)
        v, T, L = self.speed, min(self.ramp, self.length / 2.0), self.length

        def ramp_int(x):
            if T <= 0.0:
                return v * x
            return v * (x / 2.0 - T / (2.0 * math.pi) * math.sin(math.pi * x / T))

        if tau <= T:
            return ramp_int(tau)
        d_ramp = ramp_int(T)
        if tau <= L - T:
            return d_ramp + v * (tau - T)
        return 2.0 * d_ramp + v * (L - 2.0 * T) - ramp_int(L - tau)

    def speed_at(self, tau: float) -> float:
        if self.kind == SegmentKind.STATIONARY or self.speed == 0.0 or not 0.0 <= tau <= self.length:
            return 0.0
        T = min(self.ramp, self.length / 2.0)
        if T > 0.0 and tau < T:
            return self.speed * math.sin(math.pi * tau / (2.0 * T)) ** 2
        if T > 0.0 and tau > self.length - T:
            return self.speed * math.sin(math.pi * (self.length - tau) / (2.0 * T)) ** 2
        return self.speed


@dataclass(frozen=True)
class RouteSpec:
    segments: tuple[Segment, ...]
    epoch_rate: float = 5.0
    start_enu: tuple[float, float, float] = (350.0, -220.0, 2.0)
    start_time: GnssTime = GnssTime(2100, 345600.0)
    undulation: tuple[float, float] = (0.4, 90.0)  # vertical amplitude m, period s

    @property
    def duration(self) -> float:
        return float(sum(s.length for s in self.segments))

    def __post_init__(self):
        if self.epoch_rate <= 0:
            raise ValueError("epoch_rate must be positive")
        for s in self.segments:
            if s.length <= 0 or s.speed < 0:
                raise ValueError(f"invalid segment {s}")
            if s.kind == SegmentKind.STREET and s.street is None:
                raise ValueError("street segment needs a StreetSpec")

    @property
    def n_epochs(self) -> int:
        return int(round(self.duration * self.epoch_rate))


@dataclass(frozen=True)
class Kinematics:
    t_rel: float
    pos: np.ndarray = field(repr=False)
    vel: np.ndarray = field(repr=False)
    segment: int
    along: float  # along-track distance within the segment


def _heading_vec(deg: float) -> np.ndarray:
    h = math.radians(deg)
    return np.array([math.sin(h), math.cos(h), 0.0])


class Trajectory:
    """Analytic position/velocity of the rover for a route."""

    def __init__(self, route: RouteSpec):
        self.route = route
        self._t0 = np.cumsum([0.0] + [s.length for s in route.segments])
        starts = [np.array(route.start_enu, dtype=float)]
        for seg in route.segments:
            starts.append(starts[-1] + seg.distance(seg.length) * _heading_vec(seg.heading))
        self._p0 = starts
        if route.segments and all(s.kind == SegmentKind.STATIONARY for s in route.segments):
            self._undulate = False
        else:
            self._undulate = route.undulation[0] != 0.0

    def at(self, t_rel: float) -> Kinematics:
        segs = self.route.segments
        i = int(np.searchsorted(self._t0, t_rel, side="right") - 1)
        i = min(max(i, 0), len(segs) - 1)
        seg = segs[i]
        tau = t_rel - self._t0[i]
        d = seg.distance(tau)
        hv = _heading_vec(seg.heading)
        pos = self._p0[i] + d * hv
        vel = seg.speed_at(tau) * hv
        if self._undulate:
            A, P = self.route.undulation
            w = 2.0 * math.pi / P
            pos = pos + np.array([0.0, 0.0, A * math.sin(w * t_rel)])
            vel = vel + np.array([0.0, 0.0, A * w * math.cos(w * t_rel)])
        return Kinematics(t_rel, pos, vel, i, d)


@dataclass(frozen=True)
class EpochTruth:
    """Ground truth at one epoch.

    ``intervals`` numbers each signal's continuous-visibility interval; the
    rover carrier integer is redrawn whenever it changes.
    """

    k: int
    t: GnssTime
    t_rel: float
    pos_enu: np.ndarray = field(repr=False)
    vel_enu: np.ndarray = field(repr=False)
    segment: int
    clear: dict = field(repr=False)  # SignalId -> bool (only signals above the horizon)
    intervals: dict = field(repr=False)  # SignalId -> int
    elevation: dict = field(repr=False)  # SignalId -> deg at the rover
    blocked_for: dict = field(default_factory=dict, repr=False)  # SignalId -> s of the preceding blockage
    since_clear: dict = field(default_factory=dict, repr=False)  # SignalId -> s since re-entry


def visibility(az: float, el: float, segment: Segment, along: float) -> Visibility:
    """CLEAR/BLOCKED state of a satellite direction for the rover at ``along`` meters into ``segment``."""
    if el >= 89.999:
        return Visibility.CLEAR
    if segment.kind != SegmentKind.STREET:
        return Visibility.CLEAR if el > OPEN_SKY_MASK_DEG else Visibility.BLOCKED
    rel = (az - segment.heading) % 360.0
    return Visibility.BLOCKED if segment.street.mask_at(rel, el, along) else Visibility.CLEAR


def generate_truth(route: RouteSpec, seed: int = 0, sky: Sky | None = None) -> list[EpochTruth]:
    """Ground-truth epochs at the route's epoch rate.

    Without a sky only kinematics are meaningful (visibility maps are empty).
    ``seed`` is accepted for interface symmetry; the truth is a deterministic
    function of the route and sky.
    """
    traj = Trajectory(route)
    dt = 1.0 / route.epoch_rate
    out = []
    interval: dict[SignalId, int] = {}
    was_clear: dict[SignalId, bool] = {}
    block_start: dict[SignalId, float] = {}
    clear_start: dict[SignalId, float] = {}
    last_block_len: dict[SignalId, float] = {}
    for k in range(route.n_epochs):
        t_rel = k * dt
        kin = traj.at(t_rel)
        clear, elev = {}, {}
        if sky is not None:
            rx = sky.frame.to_ecef(kin.pos)
            seg = route.segments[kin.segment]
            for tr in sky.tracks:
                st = sky.states(t_rel, (tr,))
                sig0 = next(iter(st))
                _, el, az = los_and_elevation(st[sig0], rx)
                if el <= 0.0:
                    continue
                vis = visibility(az, el, seg, kin.along) == Visibility.CLEAR
                for sig in st:
                    clear[sig] = vis
                    elev[sig] = el
        for sig, vis in clear.items():
            prev = was_clear.get(sig)
            if prev is None:
                interval[sig] = 0
                if vis:
                    clear_start[sig] = t_rel
                else:
                    block_start[sig] = t_rel
            elif vis and not prev:
                interval[sig] += 1
                clear_start[sig] = t_rel
                last_block_len[sig] = t_rel - block_start.get(sig, t_rel)
            elif prev and not vis:
                block_start[sig] = t_rel
            was_clear[sig] = vis
        since = {s: t_rel - clear_start[s] for s, v in clear.items() if v and s in clear_start}
        out.append(EpochTruth(k, route.start_time + t_rel, t_rel, kin.pos, kin.vel, kin.segment,
                              clear, dict(interval), elev,
                              {s: last_block_len.get(s, 0.0) for s in clear}, since))
    return out
