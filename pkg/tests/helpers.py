import numpy as np
from dataclasses import replace

from urbanrtk.engine import EngineConfig, select_pivot_and_form_dd
from urbanrtk.engine.srif import NavState
from urbanrtk.engine.dd import rover_elevations, screen_observables
from urbanrtk.scenario.route import generate_truth
from urbanrtk.scenario.sky import make_sky
from urbanrtk.scenario.suite import stationary_route
from urbanrtk.scenario.synth import ClockModel, ErrorModel, synthesize_epoch


def random_spd(rng, n, cond=1e2, scale=1.0):
    """Random symmetric positive-definite matrix with a given condition number."""
    U, _ = np.linalg.qr(rng.standard_normal((n, n)))
    ev = scale * np.exp(rng.uniform(np.log(1.0 / cond), 0.0, n))
    ev[0], ev[-1] = scale, scale / cond
    return (U * ev) @ U.T


def random_prior(rng, t, center):
    """Navigation state near ``center`` with a random dense covariance."""
    m = np.concatenate([center + rng.normal(0, 1.0, 3), rng.normal(0, 0.3, 3)])
    A = rng.standard_normal((6, 6))
    return NavState.from_moments(t, m, A @ A.T * 0.5 + 0.1 * np.eye(6))


class OpenSkyEpochs:
    """Synthetic open-sky epochs around a stationary rover, for engine-level tests."""

    def __init__(self, seed=0, duration=20.0, err=None, offset=(120.0, -80.0, 3.0)):
        self.sky = make_sky(seed, duration)
        route = stationary_route(duration)
        route = replace(route, start_enu=offset)
        self.truths = generate_truth(route, seed, self.sky)
        self.err = err if err is not None else ErrorModel()
        self.clocks = ClockModel.draw(seed)
        self.seed = seed
        self.frame = self.sky.frame

    def epoch(self, k):
        tr = self.truths[k]
        rover, ref = synthesize_epoch(tr, self.sky, self.err, self.seed, self.clocks)
        return tr, rover, ref, self.sky.states(tr.t_rel)

    def dd_set(self, k, cfg=None, baseline=None, keep=None):
        cfg = cfg or EngineConfig()
        tr, rover, ref, sats = self.epoch(k)
        b = tr.pos_enu if baseline is None else baseline
        els = rover_elevations(rover, sats, self.frame.to_ecef(b))
        pairs = screen_observables(rover, ref, cfg, els)
        if keep is not None:
            pairs = pairs[:keep]
        return select_pivot_and_form_dd(pairs, sats, b, self.frame, cfg, tr.t)



# acceptance outcomes, printed by the terminal-summary hook in conftest
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def report(criterion: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (bool(ok), detail)
    assert ok, f"criterion {criterion}: {detail}"
