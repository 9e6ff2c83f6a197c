"""Observable screening, quality scoring and double-difference formation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..core import (Band, EpochObs, GnssTime, LocalFrame, Observable, SatState, SignalId,
                    dd_geometry, los_and_elevation, wavelength)
from .config import EngineConfig


class NotEnoughSignals(RuntimeError):
    pass


@dataclass(frozen=True)
class ScreenedPair:
    sig: SignalId
    rover: Observable
    ref: Observable
    elevation: float


@dataclass(frozen=True)
class DdEntry:
    sig: SignalId
    pivot: SignalId
    dd_pseudorange: float
    dd_phase: float
    lam: float
    unit_vec_diff_enu: np.ndarray = field(repr=False)
    predicted_range: float
    quality_score: float
    elevation: float
    scale: float
    pivot_scale: float
    excluded: bool = False

    @property
    def band(self) -> Band:
        return self.sig.band


@dataclass(frozen=True)
class DdSet:
    epoch: GnssTime
    pivot_per_band: dict
    entries: tuple[DdEntry, ...]
    linearization_enu: np.ndarray = field(repr=False)
    age_of_data: float = 0.0
    n_screened: int = 0

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def signals(self) -> list[SignalId]:
        return [e.sig for e in self.entries]

    def without(self, sigs) -> "DdSet":
        drop = set(sigs)
        return replace(self, entries=tuple(e for e in self.entries if e.sig not in drop))

    def by_score(self) -> list[DdEntry]:
        """Entries in ascending quality score, ties broken by signal ordering."""
        return sorted(self.entries, key=lambda e: (e.quality_score, e.sig))

    def geometry_matrix(self) -> np.ndarray:
        """Jacobian of DD range w.r.t. the ENU baseline."""
        return -np.array([e.unit_vec_diff_enu for e in self.entries]).reshape(len(self.entries), 3)

    def covariance(self, sigma: float) -> np.ndarray:
        """DD covariance from an undifferenced sigma shared by both receivers."""
        s = np.array([e.scale for e in self.entries])
        p = np.array([e.pivot_scale for e in self.entries])
        band = np.array([int(e.band) for e in self.entries])
        same = band[:, None] == band[None, :]
        return 2.0 * sigma ** 2 * (np.diag(s ** 2) + same * np.outer(p, p))


def _clamp01(x: float) -> float:
    return min(1.0, max(0.0, x))


def quality_score(cn0: float, s_theta: float, elevation: float,
                  weights=(1.0, 1.0, 1.0)) -> float:
    w_cn0, w_s, w_el = weights
    return (w_cn0 * _clamp01((cn0 - 37.5) / 15.0) + w_s * s_theta
            + w_el * _clamp01(elevation / 90.0))


def screen_observables(rover: EpochObs, ref: EpochObs, cfg: EngineConfig,
                       elevations: dict | None = None) -> list[ScreenedPair]:
    """Pair signals valid at both receivers and passing the C/N0, s_theta and elevation screens.

    ``elevations`` overrides the rover observables' own elevation field.
    """
    ref_by_sig = ref.by_signal()
    pairs = []
    for o in rover.obs:
        r = ref_by_sig.get(o.sig)
        if r is None or not (o.valid and r.valid):
            continue
        el = elevations.get(o.sig, math.nan) if elevations is not None else o.elevation
        if not (o.cn0 >= cfg.cn0_min and o.s_theta >= cfg.s_theta_min and el >= cfg.elev_min):
            continue
        if not all(math.isfinite(v) for v in (o.pseudorange, o.carrier_phase, r.pseudorange, r.carrier_phase)):
            continue
        pairs.append(ScreenedPair(o.sig, o, r, el))
    per_band: dict[Band, int] = {}
    for p in pairs:
        per_band[p.sig.band] = per_band.get(p.sig.band, 0) + 1
    if not any(c >= 2 for c in per_band.values()):
        raise NotEnoughSignals(f"{len(pairs)} signals survived screening; no band has two")
    return sorted(pairs, key=lambda p: p.sig)


def select_pivot_and_form_dd(pairs: list[ScreenedPair], sat_states: dict, baseline_enu,
                             frame: LocalFrame, cfg: EngineConfig, epoch: GnssTime,
                             age_of_data: float = 0.0) -> DdSet:
    """Form between-receiver, between-satellite differences per band around the highest-elevation pivot.

    Geometry (line-of-sight differences and predicted DD range) is evaluated at
    ``baseline_enu``, which becomes the filter's linearization point.
    """
    b0 = np.asarray(baseline_enu, dtype=float)
    rover_pos = frame.to_ecef(b0)
    ref_pos = frame.origin_ecef
    by_band: dict[Band, list[ScreenedPair]] = {}
    for p in pairs:
        by_band.setdefault(p.sig.band, []).append(p)

    # line-of-sight in the reference ENU frame, which is the frame of the state
    los = {p.sig: frame_los(frame, sat_states[p.sig], rover_pos) for p in pairs}

    pivots = {}
    entries = []
    for band in sorted(by_band):
        group = by_band[band]
        if len(group) < 2:
            continue
        pivot = min(group, key=lambda p: (-p.elevation, p.sig))
        pivots[band] = pivot.sig
        lam = wavelength(band)
        sp = sat_states[pivot.sig]
        piv_scale = _elev_scale(pivot.elevation, cfg)
        sd_pr_p = pivot.rover.pseudorange - pivot.ref.pseudorange
        sd_ph_p = pivot.rover.carrier_phase - pivot.ref.carrier_phase
        for p in group:
            if p is pivot:
                continue
            si = sat_states[p.sig]
            h0 = dd_geometry(rover_pos, si, sp) - dd_geometry(ref_pos, si, sp)
            score = quality_score(p.rover.cn0, p.rover.s_theta, p.elevation, cfg.score_weights)
            entries.append(DdEntry(
                sig=p.sig,
                pivot=pivot.sig,
                dd_pseudorange=(p.rover.pseudorange - p.ref.pseudorange) - sd_pr_p,
                dd_phase=(p.rover.carrier_phase - p.ref.carrier_phase) - sd_ph_p,
                lam=lam,
                unit_vec_diff_enu=los[p.sig] - los[pivot.sig],
                predicted_range=h0,
                quality_score=score,
                elevation=p.elevation,
                scale=_elev_scale(p.elevation, cfg),
                pivot_scale=piv_scale,
            ))
    return DdSet(epoch=epoch, pivot_per_band=pivots, entries=tuple(entries),
                 linearization_enu=b0.copy(), age_of_data=age_of_data, n_screened=len(pairs))


def frame_los(frame: LocalFrame, sat: SatState, pos_ecef) -> np.ndarray:
    d = sat.pos_ecef - pos_ecef
    return frame.rot @ (d / np.linalg.norm(d))


def _elev_scale(elevation: float, cfg: EngineConfig) -> float:
    if not cfg.elevation_weighting:
        return 1.0
    return 1.0 / math.sin(math.radians(max(elevation, 1.0)))


def extrapolate_reference(ref: EpochObs, t: GnssTime) -> EpochObs:
    """Carry reference observables forward to ``t`` linearly with their own Doppler."""
    dt = t - ref.t
    if dt == 0.0:
        return ref
    out = []
    for o in ref.obs:
        if not math.isfinite(o.doppler):
            out.append(replace(o, valid=False))
            continue
        lam = wavelength(o.sig.band)
        out.append(replace(o, carrier_phase=o.carrier_phase - o.doppler * dt,
                           pseudorange=o.pseudorange - lam * o.doppler * dt))
    return EpochObs(t, tuple(out))


def rover_elevations(rover: EpochObs, sat_states: dict, rover_pos_ecef) -> dict:
    els = {}
    for o in rover.obs:
        s: SatState | None = sat_states.get(o.sig)
        if s is None:
            continue
        _, el, _ = los_and_elevation(s, rover_pos_ecef)
        els[o.sig] = el
    return els
