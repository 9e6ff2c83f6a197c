"""Per-epoch RTK processing: screening, float filtering, exclusion, fixing."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

import numpy as np
from scipy.stats import chi2

from ..ambiguity import (ApertureCache, IlsProblem, IlsResult, calibrate_aperture_threshold,
                         difference_test, ils_search)
from ..core import EpochObs, GnssTime, LocalFrame, SignalId
from .config import EngineConfig
from .dd import (DdSet, NotEnoughSignals, extrapolate_reference, rover_elevations,
                 screen_observables, select_pivot_and_form_dd)
from .exclusion import DepthExceeded, scored_exclusion
from .srif import (JointPosterior, NavState, NumericalDegeneracy, float_update,
                   least_squares_baseline, time_update)

log = logging.getLogger(__name__)


class SolutionKind(str, Enum):
    FIXED = "Fixed"
    FLOAT = "Float"
    RESET = "Reset"
    NONE = "None"


@dataclass(frozen=True)
class EpochSolution:
    t: GnssTime
    kind: SolutionKind
    baseline_enu: np.ndarray = field(repr=False)
    cov: np.ndarray = field(repr=False)
    n_dd_used: int = 0
    n_excluded: int = 0
    n_dd_screened: int = 0
    fix_costs: tuple[float, float] = (math.nan, math.nan)
    aperture_threshold: float = math.nan
    excluded_ids: tuple[SignalId, ...] = ()
    nis: float = math.nan
    integers: tuple[int, ...] = ()
    dd_signals: tuple[SignalId, ...] = ()
    age_of_data: float = math.nan


@dataclass
class _Attempt:
    joint: JointPosterior
    ils: IlsResult | None = None
    mu: float = math.nan


def _nan3():
    return np.full(3, math.nan), np.full((3, 3), math.nan)


class RtkEngine:
    """Single-baseline RTK engine holding the real-valued navigation state between epochs.

    Parameters
    ----------
    ref_pos_ecef : array_like
        Reference antenna position; the ENU frame of all outputs is anchored here.
    cfg : EngineConfig
    aperture_cache : ApertureCache, optional
        Shared calibration table; one is created if omitted.
    """

    def __init__(self, ref_pos_ecef, cfg: EngineConfig | None = None,
                 aperture_cache: ApertureCache | None = None):
        self.cfg = cfg or EngineConfig()
        self.frame = LocalFrame.at(ref_pos_ecef)
        self.state: NavState | None = None
        self.cache = aperture_cache if aperture_cache is not None else ApertureCache(self.cfg.p_bar_f, self.cfg.aperture_trials,
                                                     seed=self.cfg.aperture_seed)
        # test hook: called with (DdSet, IlsResult); a returned vector is used as the fix
        self.integer_override: Callable | None = None
        self._exact_counter = 0

    # ---- helpers ----

    def _aperture_threshold(self, Q_a: np.ndarray) -> float:
        if self.cfg.aperture_mode == "exact":
            self._exact_counter += 1
            return calibrate_aperture_threshold(Q_a, self.cfg.p_bar_f, self.cfg.aperture_trials,
                                                seed=self.cfg.aperture_seed + self._exact_counter)
        return self.cache.threshold(Q_a)

    def _initial_state(self, t: GnssTime, dd: DdSet, sats) -> NavState:
        b = least_squares_baseline(dd, self.cfg, self.frame, sats)
        sp, sv = self.cfg.init_sigma_pos, self.cfg.init_sigma_vel
        cov = np.diag([sp ** 2] * 3 + [sv ** 2] * 3)
        return NavState.from_moments(t, np.concatenate([b, np.zeros(3)]), cov)

    def _form(self, pairs, sats, baseline, t, age) -> DdSet:
        return select_pivot_and_form_dd(pairs, sats, baseline, self.frame, self.cfg, t, age)

    def _accept(self, res: IlsResult, mu: float) -> bool:
        if not difference_test(res, mu):
            return False
        lim = self.cfg.fix_residual_alpha
        return lim <= 0.0 or res.cost_best <= chi2.isf(lim, res.best.size)

    def _fix_attempt(self, prior: NavState, dd: DdSet) -> tuple[bool, _Attempt]:
        joint = float_update(prior, dd, self.cfg)
        a, Q = joint.ambiguities()
        res = ils_search(IlsProblem(a, Q))
        mu = self._aperture_threshold(Q)
        return self._accept(res, mu), _Attempt(joint, res, mu)

    def _solution(self, t, kind, state, dd=None, excluded=(), att=None, n_screened=0, nis=math.nan,
                  integers=(), age=math.nan) -> EpochSolution:
        if state is not None:
            b = state.baseline
            cov = state.cov[:3, :3]
        else:
            b, cov = _nan3()
        costs = (att.ils.cost_best, att.ils.cost_second) if att is not None and att.ils else (math.nan, math.nan)
        return EpochSolution(
            t=t, kind=kind, baseline_enu=b, cov=cov,
            n_dd_used=len(dd) if dd is not None else 0,
            n_excluded=len(excluded), n_dd_screened=n_screened,
            fix_costs=costs, aperture_threshold=att.mu if att is not None else math.nan,
            excluded_ids=tuple(excluded), nis=nis, integers=tuple(int(i) for i in integers),
            dd_signals=tuple(dd.signals) if dd is not None else (), age_of_data=age,
        )

    def reset(self) -> None:
        self.state = None

    def _propagate(self, t: GnssTime) -> None:
        if self.state is not None:
            dt = t - self.state.t
            if dt > 0:
                self.state = time_update(self.state, dt, self.cfg, t)

    def no_reference(self, t: GnssTime) -> EpochSolution:
        """Epoch without usable reference data: propagate by dynamics and emit None."""
        self._propagate(t)
        return self._solution(t, SolutionKind.NONE, self.state)

    # ---- main entry ----

    def process_epoch(self, rover: EpochObs, ref: EpochObs, sats: dict) -> EpochSolution:
        """Run one epoch of screening, float update, exclusion and integer validation.

        ``sats`` maps each SignalId to its SatState at the rover epoch. ``ref``
        is the newest reference epoch not later than the rover epoch; its phase
        and code are extrapolated to the rover time with the reference Doppler.
        """
        cfg = self.cfg
        t = rover.t
        self._propagate(t)
        age = t - ref.t
        if age < -1e-9 or age > cfg.age_of_data_max:
            log.debug("%s: reference age %.3f s unusable", t, age)
            return self._solution(t, SolutionKind.NONE, self.state, age=age)
        ref_now = extrapolate_reference(ref, t)

        b_apriori = self.state.baseline if self.state is not None else np.zeros(3)
        rover_pos = self.frame.to_ecef(b_apriori)
        elevations = rover_elevations(rover, sats, rover_pos)
        try:
            pairs = screen_observables(rover, ref_now, cfg, elevations)
        except NotEnoughSignals:
            return self._solution(t, SolutionKind.NONE, self.state, age=age)
        pairs = [p for p in pairs if p.sig in sats]
        n_screened = len(pairs)

        dd = self._form(pairs, sats, b_apriori, t, age)
        if len(dd) == 0:
            return self._solution(t, SolutionKind.NONE, self.state, n_screened=n_screened, age=age)
        if self.state is None:
            try:
                self.state = self._initial_state(t, dd, sats)
            except (NumericalDegeneracy, np.linalg.LinAlgError):
                return self._solution(t, SolutionKind.NONE, None, n_screened=n_screened, age=age)
            dd = self._form(pairs, sats, self.state.baseline, t, age)
        prior = self.state

        # second level: innovations test with scored exclusion
        def innovations_test(sub: DdSet):
            joint = float_update(prior, sub, cfg)
            return joint.nis <= cfg.nis_threshold, joint

        try:
            dd_f, excl_f, joint, _ = scored_exclusion(dd, innovations_test, cfg.exclusion_depth,
                                                      cfg.float_exclusion_m)
        except (DepthExceeded, NumericalDegeneracy) as exc:
            log.debug("%s: reset (%s)", t, exc)
            return self._reset(t, dd, sats, n_screened, age)

        # third level: ILS + aperture test with N-choose-1 exclusion
        a, Q = joint.ambiguities()
        res = ils_search(IlsProblem(a, Q))
        first = _Attempt(joint, res, self._aperture_threshold(Q))
        override = self.integer_override(dd_f, res) if self.integer_override else None
        if override is not None:
            self.state = joint.condition(override)
            return self._solution(t, SolutionKind.FIXED, self.state, dd_f, excl_f, first,
                                  n_screened, joint.nis, override, age)

        def aperture_test(sub: DdSet):
            # too few DDs to over-determine the baseline: never fix
            if len(sub) < cfg.min_dd_fix:
                return False, None
            if sub is dd_f:
                return self._accept(first.ils, first.mu), first
            return self._fix_attempt(prior, sub)

        try:
            dd_x, excl_x, att, _ = scored_exclusion(dd_f, aperture_test, cfg.exclusion_depth, 1)
        except DepthExceeded:
            self.state = joint.marginalize()
            return self._solution(t, SolutionKind.FLOAT, self.state, dd_f, excl_f, first,
                                  n_screened, joint.nis, age=age)
        except NumericalDegeneracy:
            self.state = joint.marginalize()
            return self._solution(t, SolutionKind.FLOAT, self.state, dd_f, excl_f, first,
                                  n_screened, joint.nis, age=age)
        self.state = att.joint.condition(att.ils.best)
        return self._solution(t, SolutionKind.FIXED, self.state, dd_x, excl_f + excl_x, att,
                              n_screened, att.joint.nis, att.ils.best, age)

    def _reset(self, t, dd, sats, n_screened, age) -> EpochSolution:
        self.state = None
        try:
            dd0 = dd if len(dd) >= 3 else None
            if dd0 is not None:
                self.state = self._initial_state(t, dd0, sats)
        except (NumericalDegeneracy, np.linalg.LinAlgError):
            self.state = None
        return self._solution(t, SolutionKind.RESET, self.state, None, (), None, n_screened, age=age)
