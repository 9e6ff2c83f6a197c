"""Observable synthesis for rover and reference receivers from ground truth."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..core import Band, Constellation, EpochObs, Observable, SignalId, wavelength
from .route import EpochTruth
from .sky import Sky


@dataclass(frozen=True)
class ErrorModel:
    """Measurement error and fault-injection settings.

    Noise levels are undifferenced one-sigma values at zenith; with
    ``elevation_scaling`` they grow as 1/sin(el). Code outliers hit rover
    signals in clear view at a mean rate of ``p_outlier`` per signal-epoch.
    With ``outlier_elevation_power`` k > 0 the rate is shared among the
    epoch's clear signals in proportion to sin(el)^-k, so low satellites
    carry most of the multipath; the expected count per epoch is unchanged.
    The reflected path that causes an outlier also depresses C/N0 by a draw
    from ``outlier_cn0_drop`` dB.
    """

    sigma_rho: float = 0.5
    sigma_phi: float = 0.003
    sigma_doppler: float = 0.05
    elevation_scaling: bool = True
    p_outlier: float = 0.05
    outlier_range: tuple[float, float] = (5.0, 50.0)
    outlier_cn0_drop: tuple[float, float] = (4.0, 14.0)
    outlier_elevation_power: float = 2.0
    p_slip: float = 1.0
    # half-cycle carrier offsets on re-lock when symbol wipeoff is unavailable
    p_half_cycle: float = 0.0
    half_cycle_types: tuple[tuple[int, int], ...] = ((int(Constellation.GPS), int(Band.L1)),
                                                     (int(Constellation.SBAS), int(Band.L1)))
    half_cycle_resolve_s: float = 6.0
    wipeoff_error_rate: float = 0.0
    reference_latency: float = 0.0
    # re-lock transient: open-loop model-Doppler error and pull-in time constant
    f_model_error_hz: float = 0.02
    relock_tau: float = 0.03
    noise_scale: float = 1.0
    atmos_ramp_m_per_100s: float = 0.0
    atmos_period_s: float = 200.0
    phase_bias_m: float = 0.0
    cn0_clear: tuple[float, float] = (36.0, 14.0)  # offset + slope * sin(el), dB-Hz
    cn0_sigma: float = 1.5
    cn0_blocked: float = 22.0

    def __post_init__(self):
        for name in ("p_outlier", "p_slip", "p_half_cycle", "wipeoff_error_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        for name in ("outlier_elevation_power", "sigma_rho", "sigma_phi", "sigma_doppler", "reference_latency", "relock_tau",
                     "noise_scale", "half_cycle_resolve_s"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("outlier_range", "outlier_cn0_drop"):
            lo, hi = getattr(self, name)
            if not 0 <= lo <= hi:
                raise ValueError(f"invalid {name} {(lo, hi)}")

    @classmethod
    def noiseless(cls, **kw) -> "ErrorModel":
        base = dict(sigma_rho=0.0, sigma_phi=0.0, sigma_doppler=0.0, p_outlier=0.0, f_model_error_hz=0.0)
        base.update(kw)
        return cls(**base)


def _sig_key(sig: SignalId) -> list[int]:
    return [int(sig.constellation), sig.prn, int(sig.band)]


@lru_cache(maxsize=65536)
def rover_integer(sig: SignalId, interval: int, seed: int, p_slip: float = 1.0) -> int:
    """Rover carrier integer for a continuous-visibility interval.

    At each blockage exit the integer changes with probability ``p_slip``.
    """
    n = int(np.random.default_rng([seed, 11, *_sig_key(sig), 0]).integers(-400_000, 400_000))
    for j in range(1, interval + 1):
        rng = np.random.default_rng([seed, 11, *_sig_key(sig), j])
        if rng.uniform() < p_slip:
            n = int(rng.integers(-400_000, 400_000))
    return n


@lru_cache(maxsize=4096)
def reference_integer(sig: SignalId, seed: int) -> int:
    return int(np.random.default_rng([seed, 12, *_sig_key(sig)]).integers(-400_000, 400_000))


@dataclass(frozen=True)
class IntervalFaults:
    half_cycle: bool
    drift_cycles: float  # open-loop phase drift accumulated over the preceding blockage
    subepoch: float  # s between the true re-entry and the epoch grid
    atmos_phase: float
    atmos_sign: float


@lru_cache(maxsize=65536)
def interval_faults(sig: SignalId, interval: int, blocked_for: float, err: ErrorModel, seed: int) -> IntervalFaults:
    rng = np.random.default_rng([seed, 13, *_sig_key(sig), interval])
    u_half, f_err, sub = rng.uniform(), rng.standard_normal(), rng.uniform(0.0, 0.2)
    sat_rng = np.random.default_rng([seed, 14, int(sig.constellation), sig.prn])
    phase, sign = sat_rng.uniform(0.0, 1.0), sat_rng.choice([-1.0, 1.0])
    typed = (int(sig.constellation), int(sig.band)) in err.half_cycle_types
    half = typed and u_half < err.p_half_cycle
    return IntervalFaults(half, f_err * err.f_model_error_hz * blocked_for, sub, phase, sign)


@dataclass(frozen=True)
class ClockModel:
    """Receiver clock offsets, linear in time, meters and meters/second."""

    rover_bias: float
    rover_drift: float
    ref_bias: float
    ref_drift: float

    @classmethod
    def draw(cls, seed: int) -> "ClockModel":
        rng = np.random.default_rng([seed, 15])
        return cls(rng.uniform(-3e4, 3e4), rng.uniform(-30.0, 30.0),
                   rng.uniform(-3e4, 3e4), rng.uniform(-30.0, 30.0))


def _triangle(x: float) -> float:
    """Unit triangle wave with slope +-4 per period, range [-1, 1]."""
    f = x - math.floor(x)
    return 4.0 * f - 1.0 if f < 0.5 else 3.0 - 4.0 * f


def _phase_transient(faults: IntervalFaults, since: float, err: ErrorModel) -> float:
    if since is None or err.relock_tau <= 0.0:
        return 0.0
    frac = faults.drift_cycles - round(faults.drift_cycles)
    return frac * math.exp(-(since + faults.subepoch) / err.relock_tau)


def outlier_probabilities(truth: EpochTruth, err: ErrorModel) -> dict[SignalId, float]:
    """Per-signal outlier probability for the epoch's clear rover signals; the mean equals ``p_outlier``."""
    clear = [s for s, v in truth.clear.items() if v]
    if not clear or err.p_outlier == 0.0:
        return {}
    w = np.array([math.sin(math.radians(max(truth.elevation[s], 1.0))) ** -err.outlier_elevation_power
                  for s in clear])
    p = err.p_outlier * w * (len(clear) / w.sum())
    # redistribute any excess above 1 so the expected count is preserved
    for _ in range(len(clear)):
        over = p > 1.0
        if not over.any():
            break
        excess = float((p[over] - 1.0).sum())
        p[over] = 1.0
        free = p < 1.0
        p[free] += excess * w[free] / w[free].sum()
    return dict(zip(clear, p.tolist()))


def synthesize_epoch(truth: EpochTruth, sky: Sky, err: ErrorModel, seed: int,
                     clocks: ClockModel | None = None, overrides: dict | None = None) -> tuple[EpochObs, EpochObs]:
    """Rover and reference observables at one truth epoch.

    ``overrides`` maps a SignalId to a dict with any of ``cn0``, ``s_theta``,
    ``coherent`` and ``phase_error`` (cycles) taken from a tracking-loop run
    (coupled mode).
    """
    clocks = clocks or ClockModel(0.0, 0.0, 0.0, 0.0)
    t_rel = truth.t_rel
    rng = np.random.default_rng([seed, 21, truth.k])
    rng_ref = np.random.default_rng([seed, 22, truth.k])
    rx = sky.frame.to_ecef(truth.pos_enu)
    rx_vel = sky.frame.rot.T @ truth.vel_enu
    ref = sky.frame.origin_ecef
    cb_r = clocks.rover_bias + clocks.rover_drift * t_rel
    cb_b = clocks.ref_bias + clocks.ref_drift * t_rel
    ns = err.noise_scale
    rover_obs, ref_obs = [], []
    p_out = outlier_probabilities(truth, err)
    for tr in sky.tracks:
        pos = sky.position(tr, t_rel)
        vel = sky.velocity(tr, t_rel)
        for sig in tr.signals():
            lam = wavelength(sig.band)
            # reference: open sky always
            d = pos - ref
            r_b = float(np.linalg.norm(d))
            u_b = d / r_b
            el_b = math.degrees(math.asin(float(sky.frame.rot[2] @ u_b)))
            if el_b > 5.0:
                sc = 1.0 / math.sin(math.radians(el_b)) if err.elevation_scaling else 1.0
                rr = float(u_b @ vel)
                n_b = reference_integer(sig, seed)
                ref_obs.append(Observable(
                    sig=sig,
                    pseudorange=r_b + cb_b + ns * err.sigma_rho * sc * rng_ref.standard_normal(),
                    carrier_phase=(r_b + cb_b + ns * err.sigma_phi * sc * rng_ref.standard_normal()) / lam + n_b,
                    doppler=-(rr + clocks.ref_drift) / lam + err.sigma_doppler * rng_ref.standard_normal(),
                    cn0=max(0.0, err.cn0_clear[0] + err.cn0_clear[1] * math.sin(math.radians(el_b))),
                    s_theta=1.0, elevation=el_b))
            if sig not in truth.clear:
                continue
            el = truth.elevation[sig]
            d = pos - rx
            r_r = float(np.linalg.norm(d))
            u_r = d / r_r
            rr = float(u_r @ (vel - rx_vel))
            sc = 1.0 / math.sin(math.radians(max(el, 1.0))) if err.elevation_scaling else 1.0
            el_field = min(max(el, 0.0), 90.0)
            if not truth.clear[sig]:
                rover_obs.append(Observable(
                    sig=sig, pseudorange=math.nan, carrier_phase=math.nan,
                    doppler=-(rr + clocks.rover_drift) / lam,
                    cn0=max(0.0, err.cn0_blocked + 3.0 * rng.standard_normal()),
                    s_theta=float(rng.uniform(-0.5, 0.4)), elevation=el_field,
                    coherent_code=False, valid=False))
                continue
            interval = truth.intervals[sig]
            faults = interval_faults(sig, interval, truth.blocked_for.get(sig, 0.0), err, seed)
            since = truth.since_clear.get(sig)
            phase_err = _phase_transient(faults, since, err) if interval > 0 else 0.0
            if faults.half_cycle and since is not None and since < err.half_cycle_resolve_s:
                phase_err += 0.5
            bias_m = 0.0
            if err.atmos_ramp_m_per_100s:
                amp = err.atmos_ramp_m_per_100s * err.atmos_period_s / 400.0
                bias_m += faults.atmos_sign * amp * _triangle(t_rel / err.atmos_period_s + faults.atmos_phase)
            if err.phase_bias_m:
                bias_m += err.phase_bias_m * (1.0 - math.sin(math.radians(el)))
            pr = r_r + cb_r + ns * err.sigma_rho * sc * rng.standard_normal()
            cn0 = err.cn0_clear[0] + err.cn0_clear[1] * math.sin(math.radians(el)) + err.cn0_sigma * rng.standard_normal()
            if p_out.get(sig, 0.0) > 0.0 and rng.uniform() < p_out[sig]:
                pr += rng.choice([-1.0, 1.0]) * rng.uniform(*err.outlier_range)
                cn0 -= rng.uniform(*err.outlier_cn0_drop)
            # the lock statistic is blind to half-cycle offsets: cos(4 pi e) has period 0.5
            s_theta = math.cos(4.0 * math.pi * phase_err)
            s_theta = min(1.0, max(-1.0, s_theta - abs(0.02 * rng.standard_normal())))
            coherent = True
            ov = (overrides or {}).get(sig)
            if ov:
                cn0 = ov.get("cn0", cn0)
                s_theta = ov.get("s_theta", s_theta)
                coherent = ov.get("coherent", coherent)
                phase_err += ov.get("phase_error", 0.0)
            n_r = rover_integer(sig, interval, seed, err.p_slip)
            cp = (r_r + cb_r + bias_m + ns * err.sigma_phi * sc * rng.standard_normal()) / lam + n_r + phase_err
            rover_obs.append(Observable(
                sig=sig, pseudorange=pr, carrier_phase=cp,
                doppler=-(rr + clocks.rover_drift) / lam + err.sigma_doppler * rng.standard_normal(),
                cn0=max(0.0, cn0), s_theta=s_theta, elevation=el_field,
                coherent_code=coherent and s_theta >= 0.5))
    return EpochObs(truth.t, tuple(rover_obs)), EpochObs(truth.t, tuple(ref_obs))
