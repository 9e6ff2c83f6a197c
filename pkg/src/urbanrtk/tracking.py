"""Accumulation-level tracking-loop simulation.

Each channel consumes prompt/early/late complex accumulations S_k, Se_k, Sl_k
(unit noise variance per component) and runs an adaptive-bandwidth type-2 PLL
aided by an externally supplied model Doppler, a mode-scheduled DLL that
switches between coherent and non-coherent discriminators, a block lock
statistic s_theta and a narrowband/wideband C/N0 estimator.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import C_LIGHT, CHIP_RATE_L1CA, F_L1, Band, Constellation, Observable, SignalId

CODE_CARRIER_RATIO = CHIP_RATE_L1CA / F_L1
CHIP_LENGTH_M = C_LIGHT / CHIP_RATE_L1CA
SYMBOL_RATE_HZ = 50.0
MAX_LOOP_BT = 0.4


class UndefinedDiscriminator(ArithmeticError):
    """The prompt accumulation is exactly zero; the loop update must be skipped."""


class UnstableLoopError(ValueError):
    pass


class Mode(str, Enum):
    PRE_PHASE_LOCK = "PrePhaseLock"
    POST_LOCK_1 = "PostLock1"
    POST_LOCK_2 = "PostLock2"
    STEADY_STATE = "SteadyState"


_MODE_ORDER = (Mode.PRE_PHASE_LOCK, Mode.POST_LOCK_1, Mode.POST_LOCK_2, Mode.STEADY_STATE)


def amplitude_from_cn0(cn0_dbhz: float, Ta: float) -> float:
    """Prompt amplitude for unit per-component noise: A = sqrt(2 Ta 10^(C/N0 / 10))."""
    return math.sqrt(2.0 * Ta * 10.0 ** (cn0_dbhz / 10.0))


@dataclass(frozen=True)
class Accumulation:
    k: int
    S: complex
    Se: complex
    Sl: complex
    Ta: float

    def __post_init__(self):
        if self.Ta <= 0:
            raise ValueError("accumulation interval must be positive")


@dataclass(frozen=True)
class ChannelConfig:
    """Tracking-channel settings.

    ``gamma0``/``gamma1`` default to 0.25 and 0.5 of the prompt amplitude at
    ``cn0_nominal``. ``B_theta_tiers`` are the carrier-loop bandwidths for
    |S| >= gamma1, gamma0 <= |S| < gamma1 and |S| < gamma0; the last is 0.
    ``B_ts_modes`` are code-loop bandwidths for the four code modes.
    """

    Ta: float = 0.01
    N_L: int = 10
    cn0_nominal: float = 45.0
    gamma0: float | None = None
    gamma1: float | None = None
    B_theta_tiers: tuple[float, float, float] = (15.0, 5.0, 0.0)
    B_ts_modes: tuple[float, float, float, float] = (2.0, 1.0, 0.5, 0.1)
    mode_dwell: int = 20
    wipeoff_enabled: bool = True
    wipeoff_error_rate: float = 0.0
    correlator_spacing: float = 0.5
    coherent_gate: float = 0.5
    open_loop_decay: float = 0.5
    cn0_windows: int = 10

    def __post_init__(self):
        if self.Ta <= 0 or self.N_L < 1:
            raise ValueError("Ta must be positive and N_L at least 1")
        if len(self.B_theta_tiers) != 3 or len(self.B_ts_modes) != 4:
            raise ValueError("need three carrier tiers and four code modes")
        if any(b < 0 for b in self.B_theta_tiers + self.B_ts_modes):
            raise ValueError("bandwidths must be non-negative")
        if self.B_theta_tiers[2] != 0.0:
            raise ValueError("the lowest carrier tier must have zero bandwidth")
        for b in self.B_theta_tiers:
            if b * self.Ta > MAX_LOOP_BT:
                raise UnstableLoopError(f"B_theta*Ta = {b * self.Ta:.3f} exceeds {MAX_LOOP_BT}")
        if not self.g0 < self.g1:
            raise ValueError(f"gamma0 ({self.g0}) must be below gamma1 ({self.g1})")
        if not 0.0 <= self.wipeoff_error_rate <= 1.0:
            raise ValueError("wipeoff_error_rate must lie in [0, 1]")
        if not 0.0 < self.correlator_spacing < 1.0:
            raise ValueError("correlator_spacing must lie in (0, 1) chips")

    @property
    def A_nominal(self) -> float:
        return amplitude_from_cn0(self.cn0_nominal, self.Ta)

    @property
    def g0(self) -> float:
        return self.gamma0 if self.gamma0 is not None else 0.25 * self.A_nominal

    @property
    def g1(self) -> float:
        return self.gamma1 if self.gamma1 is not None else 0.5 * self.A_nominal


@dataclass(frozen=True)
class ChannelState:
    theta_hat: float = 0.0  # cycles
    ts_hat: float = 0.0  # chips
    f_model: float = 0.0  # Hz
    delta_f_hat: float = 0.0  # Hz
    mode: Mode = Mode.PRE_PHASE_LOCK
    open_loop: bool = False
    s_theta: float = 0.0
    coherent_code: bool = False
    mode_count: int = 0

    @property
    def doppler_hat(self) -> float:
        return self.f_model + self.delta_f_hat

    @property
    def ts_hat_seconds(self) -> float:
        return self.ts_hat / CHIP_RATE_L1CA


# ---- signal model ----


def code_correlation(x: float) -> float:
    """Unit triangular autocorrelation of a spreading code, x in chips."""
    return max(0.0, 1.0 - abs(x))


def simulate_accumulation(amplitude: float, phase_error: float, code_error: float, symbol: int,
                          cfg: ChannelConfig, rng, k: int = 0) -> Accumulation:
    """Prompt, early and late accumulations for one interval.

    ``phase_error`` (cycles) and ``code_error`` (chips) are truth minus
    estimate; ``rng`` is a seed or a numpy Generator.
    """
    if amplitude < 0:
        raise ValueError("amplitude must be non-negative")
    if symbol not in (-1, 1):
        raise ValueError("data symbol must be +1 or -1")
    rng = np.random.default_rng(rng)
    rot = amplitude * symbol * complex(math.cos(2 * math.pi * phase_error), math.sin(2 * math.pi * phase_error))
    d = cfg.correlator_spacing
    n = rng.standard_normal(6)
    S = rot * code_correlation(code_error) + complex(n[0], n[1])
    Se = rot * code_correlation(code_error - d) + complex(n[2], n[3])
    Sl = rot * code_correlation(code_error + d) + complex(n[4], n[5])
    return Accumulation(k, S, Se, Sl, cfg.Ta)


def wipeoff(S: complex, d_hat: int) -> complex:
    """Remove a predicted data symbol; a wrong prediction flips the sign (a half-cycle insult)."""
    if d_hat not in (-1, 1):
        raise ValueError("predicted symbol must be +1 or -1")
    return S * d_hat


def phase_discriminator(S: complex) -> float:
    """Four-quadrant arctangent phase error in cycles, in (-0.5, 0.5]."""
    if S == 0:
        raise UndefinedDiscriminator("zero prompt accumulation")
    return math.atan2(S.imag, S.real) / (2.0 * math.pi)


def lock_statistic(accums: Sequence) -> tuple[float, bool]:
    """s_theta = (I^2 - Q^2) / (I^2 + Q^2) over the coherent sums; returns (s_theta, degenerate).

    Accepts Accumulation objects or bare complex prompts.
    """
    if len(accums) < 1:
        raise ValueError("need at least one accumulation")
    I = Q = 0.0
    for a in accums:
        s = a.S if isinstance(a, Accumulation) else complex(a)
        I += s.real
        Q += s.imag
    p = I * I + Q * Q
    if p == 0.0:
        return 0.0, True
    return (I * I - Q * Q) / p, False


def nwpr_ratio(prompts: Sequence[complex]) -> float:
    """Narrowband over wideband power of one window of prompts."""
    I = sum(s.real for s in prompts)
    Q = sum(s.imag for s in prompts)
    wb = sum(s.real ** 2 + s.imag ** 2 for s in prompts)
    return (I * I + Q * Q) / wb if wb > 0 else 0.0


def cn0_from_nwpr(mu: float, M: int, Ta: float) -> float:
    """C/N0 (dB-Hz) from the mean NBP/WBP ratio of M-accumulation windows."""
    if M < 2 or mu <= 1.0:
        return 0.0
    if mu >= M:
        mu = M - 1e-9
    return max(0.0, 10.0 * math.log10((mu - 1.0) / (Ta * (M - mu))))


# ---- loops ----


def adapt_bandwidth(abs_S: float, cfg: ChannelConfig) -> tuple[float, bool]:
    """Three-tier carrier bandwidth schedule; returns (B_theta, open_loop)."""
    hi, lo, _ = cfg.B_theta_tiers
    if abs_S >= cfg.g1:
        return hi, False
    if abs_S >= cfg.g0:
        return lo, False
    return 0.0, True


def pll_gains(B_theta: float, Ta: float) -> tuple[float, float]:
    bt = B_theta * Ta
    return 8.0 / 3.0 * bt, 32.0 / 9.0 * bt * bt


def pll_step(state: ChannelState, err: float, B_theta: float, Ta: float,
             decay: float = 0.5) -> ChannelState:
    """One carrier-loop update.

    Closed loop: delta_f += k2 err / Ta, theta += (f_model + delta_f) Ta + k1 err.
    B_theta = 0: theta advances by f_model Ta alone and delta_f decays by ``decay``.
    """
    if B_theta < 0:
        raise ValueError("negative loop bandwidth")
    if B_theta * Ta > MAX_LOOP_BT:
        raise UnstableLoopError(f"B_theta*Ta = {B_theta * Ta:.3f} exceeds {MAX_LOOP_BT}")
    if B_theta == 0.0:
        return replace(state, theta_hat=state.theta_hat + state.f_model * Ta,
                       delta_f_hat=state.delta_f_hat * decay, open_loop=True)
    k1, k2 = pll_gains(B_theta, Ta)
    df = state.delta_f_hat + k2 * err / Ta
    return replace(state, theta_hat=state.theta_hat + (state.f_model + df) * Ta + k1 * err,
                   delta_f_hat=df, open_loop=False)


def _noncoherent(acc: Accumulation, spacing: float) -> float:
    S, Se, Sl = acc.S, acc.Se, acc.Sl
    dot = (Se.real - Sl.real) * S.real + (Se.imag - Sl.imag) * S.imag
    norm = abs(S) * (abs(Se) + abs(Sl))
    return 0.0 if norm == 0.0 else dot / norm * (1.0 - spacing)


def code_discriminator(acc: Accumulation, coherent: bool, spacing: float) -> tuple[float, bool]:
    """Code error estimate in chips; returns (error, coherent_used).

    Both forms are scaled to read the true error for |e| < spacing without
    noise. The coherent form falls back to dot-product when Ie + Il is ~0.
    """
    if coherent:
        den = acc.Se.real + acc.Sl.real
        if abs(den) > 1e-12:
            return (acc.Se.real - acc.Sl.real) / den * (1.0 - spacing), True
    return _noncoherent(acc, spacing), False


def next_mode(state: ChannelState, locked: bool, dwell: int) -> tuple[Mode, int]:
    """Code-mode state machine, advanced once per accumulation."""
    if not locked:
        return Mode.PRE_PHASE_LOCK, 0
    if state.mode == Mode.PRE_PHASE_LOCK:
        return Mode.POST_LOCK_1, 0
    if state.mode == Mode.STEADY_STATE:
        return Mode.STEADY_STATE, 0
    n = state.mode_count + 1
    if n >= dwell:
        return _MODE_ORDER[_MODE_ORDER.index(state.mode) + 1], 0
    return state.mode, n


def dll_step(state: ChannelState, accum: Accumulation, s_theta: float, B_ts: float,
             cfg: ChannelConfig | None = None) -> ChannelState:
    """First-order Doppler-aided code-loop update.

    The coherent discriminator is used only while the carrier loop is closed
    and the latest lock statistic is at least ``cfg.coherent_gate``.
    """
    cfg = cfg or ChannelConfig()
    if B_ts < 0:
        raise ValueError("negative code-loop bandwidth")
    want_coherent = (not state.open_loop) and s_theta >= cfg.coherent_gate
    err, used = code_discriminator(accum, want_coherent, cfg.correlator_spacing)
    aid = -state.doppler_hat * CODE_CARRIER_RATIO * accum.Ta
    return replace(state, ts_hat=state.ts_hat + aid + 4.0 * B_ts * accum.Ta * err, coherent_code=used)


# ---- fading profiles ----


class Link(str, Enum):
    CLEAR = "CLEAR"
    BLOCKED = "BLOCKED"


@dataclass(frozen=True)
class FadingInterval:
    t_start: float
    t_end: float
    state: Link
    cn0: float


@dataclass(frozen=True)
class FadingProfile:
    """Piecewise-constant binary channel; times past the last interval repeat its state."""

    intervals: tuple[FadingInterval, ...]

    def __post_init__(self):
        if not self.intervals:
            raise ValueError("empty fading profile")
        for a, b in zip(self.intervals, self.intervals[1:]):
            if abs(a.t_end - b.t_start) > 1e-9:
                raise ValueError(f"profile intervals must be contiguous ({a.t_end} != {b.t_start})")
        for iv in self.intervals:
            if iv.t_end <= iv.t_start:
                raise ValueError(f"empty or reversed interval [{iv.t_start}, {iv.t_end})")

    def at(self, t: float) -> FadingInterval:
        for iv in self.intervals:
            if t < iv.t_end:
                return iv
        return self.intervals[-1]

    def transitions(self) -> list[tuple[float, Link]]:
        out = []
        for a, b in zip(self.intervals, self.intervals[1:]):
            if a.state != b.state:
                out.append((b.t_start, b.state))
        return out

    @classmethod
    def from_segments(cls, segments: Sequence[tuple[float, str, float]], t0: float = 0.0) -> "FadingProfile":
        """Build from (length_s, state, cn0) triples."""
        ivs, t = [], t0
        for length, state, cn0 in segments:
            ivs.append(FadingInterval(t, t + length, Link(str(state).upper()), float(cn0)))
            t += length
        return cls(tuple(ivs))

    def save_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t_start", "t_end", "state", "cn0"])
            for iv in self.intervals:
                w.writerow([repr(iv.t_start), repr(iv.t_end), iv.state.value, repr(iv.cn0)])

    @classmethod
    def load_csv(cls, path) -> "FadingProfile":
        path = Path(path)
        ivs = []
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != ["t_start", "t_end", "state", "cn0"]:
                raise ValueError(f"{path}: expected header t_start,t_end,state,cn0")
            for lineno, row in enumerate(reader, start=2):
                try:
                    ivs.append(FadingInterval(float(row["t_start"]), float(row["t_end"]),
                                              Link(row["state"].strip().upper()), float(row["cn0"])))
                except (ValueError, TypeError) as exc:
                    raise ValueError(f"{path}:{lineno}: {exc}") from None
        return cls(tuple(ivs))


def glimpse_profile(cn0: float = 45.0, clear: float = 2.0, block: float = 3.0, glimpse: float = 4.0,
                    tail: float = 3.0) -> FadingProfile:
    """Clear, then a blockage, a brief clear glimpse, then blocked again."""
    return FadingProfile.from_segments([(clear, "CLEAR", cn0), (block, "BLOCKED", 0.0),
                                        (glimpse, "CLEAR", cn0), (tail, "BLOCKED", 0.0)])


# ---- channel run ----


@dataclass(frozen=True)
class ChannelTruth:
    """True signal dynamics and the quality of the supplied model Doppler."""

    sig: SignalId = SignalId(Constellation.GPS, 1, Band.L1)
    doppler: float = -1200.0  # Hz at t = 0
    doppler_rate: float = 0.0  # Hz/s
    phase0: float = 0.0  # cycles
    code0: float = 0.0  # chips
    f_model_bias: float = 0.0  # Hz
    f_model_noise: float = 0.0  # Hz, redrawn every output epoch

    def phase(self, t: float) -> float:
        return self.phase0 + self.doppler * t + 0.5 * self.doppler_rate * t * t

    def code(self, t: float) -> float:
        return self.code0 - CODE_CARRIER_RATIO * (self.doppler * t + 0.5 * self.doppler_rate * t * t)

    def doppler_at(self, t: float) -> float:
        return self.doppler + self.doppler_rate * t


@dataclass(frozen=True)
class Relock:
    t_exit: float  # blockage end
    t_lock: float | None  # end of the first window with s_theta >= gate
    latency_acc: int | None  # accumulations from exit to t_lock
    phase_offset: float | None  # truth minus estimate at t_lock, cycles

    @property
    def latency(self) -> float | None:
        return None if self.t_lock is None else self.t_lock - self.t_exit


@dataclass
class ChannelRun:
    epochs: list[float] = field(default_factory=list)
    observables: list[Observable] = field(default_factory=list)
    phase_error: list[float] = field(default_factory=list)  # truth minus estimate at each epoch, cycles
    events: list[tuple[float, str]] = field(default_factory=list)
    relocks: list[Relock] = field(default_factory=list)
    s_theta: list[tuple[float, float]] = field(default_factory=list)  # (window end, s_theta)


def run_channel(profile: FadingProfile, cfg: ChannelConfig, truth: ChannelTruth, duration: float,
                seed: int = 0, epoch_rate: float = 5.0) -> ChannelRun:
    """Track one signal through a fading profile and emit observables at ``epoch_rate``.

    The loop starts acquired (estimates equal truth, model Doppler applied).
    Blockage exits and the first subsequent lock statistic at or above the
    coherent gate are logged; latency is counted in whole accumulations.
    """
    if duration < 1.0:
        raise ValueError("duration must be at least 1 s")
    rng = np.random.default_rng([seed, 0x7AC])
    Ta = cfg.Ta
    n_acc = int(round(duration / Ta))
    per_epoch = int(round(1.0 / (epoch_rate * Ta)))
    if per_epoch < 1 or abs(per_epoch * Ta * epoch_rate - 1.0) > 1e-9:
        raise ValueError("epoch interval must be a whole number of accumulations")
    per_symbol = max(1, int(round(1.0 / (SYMBOL_RATE_HZ * Ta))))
    n_sym = n_acc // per_symbol + 2
    symbols = rng.choice([-1, 1], size=n_sym)
    flips = rng.uniform(size=n_sym) < cfg.wipeoff_error_rate

    def model_doppler(t):
        return truth.doppler_at(t) + truth.f_model_bias + truth.f_model_noise * rng.standard_normal()

    st = ChannelState(theta_hat=truth.phase(0.0), ts_hat=truth.code(0.0), f_model=model_doppler(0.0))
    out = ChannelRun()
    window: list[complex] = []
    ratios: list[float] = []
    cn0_hat = 0.0
    pending_exit: tuple[float, int] | None = None
    prev_state = profile.at(0.0).state
    for k in range(n_acc):
        t = k * Ta
        iv = profile.at(t)
        if iv.state != prev_state:
            out.events.append((t, "block_start" if iv.state == Link.BLOCKED else "block_end"))
            if iv.state == Link.CLEAR:
                pending_exit = (t, k)
            prev_state = iv.state
        A = amplitude_from_cn0(iv.cn0, Ta) if iv.state == Link.CLEAR else 0.0
        sym_i = k // per_symbol
        d = int(symbols[sym_i])
        acc = simulate_accumulation(A, truth.phase(t) - st.theta_hat, truth.code(t) - st.ts_hat, d, cfg, rng, k)
        if cfg.wipeoff_enabled:
            d_hat = -d if flips[sym_i] else d
        else:
            # decision-directed: the sign of I stands in for the unknown symbol
            d_hat = 1 if acc.S.real >= 0.0 else -1
        w = Accumulation(k, wipeoff(acc.S, d_hat), wipeoff(acc.Se, d_hat), wipeoff(acc.Sl, d_hat), Ta)

        B, open_loop = adapt_bandwidth(abs(w.S), cfg)
        err = 0.0
        if not open_loop:
            try:
                err = phase_discriminator(w.S)
            except UndefinedDiscriminator:
                B, err = 0.0, 0.0
        st = pll_step(st, err, B, Ta, cfg.open_loop_decay)

        window.append(w.S)
        if len(window) == cfg.N_L:
            s, _ = lock_statistic(window)
            ratios.append(nwpr_ratio(window))
            ratios = ratios[-cfg.cn0_windows:]
            cn0_hat = cn0_from_nwpr(float(np.mean(ratios)), cfg.N_L, Ta)
            window = []
            st = replace(st, s_theta=s)
            t_end = (k + 1) * Ta
            out.s_theta.append((t_end, s))
            if pending_exit is not None and s >= cfg.coherent_gate:
                t_exit, k_exit = pending_exit
                out.relocks.append(Relock(t_exit, t_end, k + 1 - k_exit, truth.phase(t_end) - st.theta_hat))
                out.events.append((t_end, "relock"))
                pending_exit = None
            elif pending_exit is not None and iv.state == Link.BLOCKED:
                out.relocks.append(Relock(pending_exit[0], None, None, None))
                pending_exit = None

        locked = (not st.open_loop) and st.s_theta >= cfg.coherent_gate
        mode, count = next_mode(st, locked, cfg.mode_dwell)
        st = replace(st, mode=mode, mode_count=count)
        B_ts = cfg.B_ts_modes[_MODE_ORDER.index(st.mode)]
        if st.open_loop:
            # no signal to discriminate: coast on the aided code rate
            st = replace(st, ts_hat=st.ts_hat - st.doppler_hat * CODE_CARRIER_RATIO * Ta, coherent_code=False)
        else:
            st = dll_step(st, w, st.s_theta, B_ts, cfg)

        if (k + 1) % per_epoch == 0:
            te = (k + 1) * Ta
            st = replace(st, f_model=model_doppler(te))
            out.epochs.append(te)
            out.phase_error.append(truth.phase(te) - st.theta_hat)
            out.observables.append(Observable(
                sig=truth.sig,
                pseudorange=st.ts_hat * CHIP_LENGTH_M,
                carrier_phase=-st.theta_hat,
                doppler=st.doppler_hat,
                cn0=cn0_hat,
                s_theta=min(1.0, max(-1.0, st.s_theta)),
                coherent_code=st.coherent_code,
                valid=not st.open_loop,
            ))
    if pending_exit is not None:
        out.relocks.append(Relock(pending_exit[0], None, None, None))
    return out
