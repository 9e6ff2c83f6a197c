"""Driving the engine over scenario or file-based observable streams."""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .ambiguity import ApertureCache
from .core import EpochObs
from .engine import EngineConfig, EpochSolution, RtkEngine, SolutionKind
from .metrics import EpochVerdict, RunMetrics, classify_epoch, summarize
from .scenario.route import EpochTruth, generate_truth
from .scenario.sky import Sky, make_sky
from .scenario.suite import ScenarioConfig, build_route
from .scenario.synth import ClockModel, synthesize_epoch

log = logging.getLogger(__name__)


@dataclass
class RunResult:
    name: str
    seed: int
    solutions: list[EpochSolution]
    verdicts: list[EpochVerdict]
    truths: list[EpochTruth]
    metrics: RunMetrics


def _filter(obs: EpochObs, sc: ScenarioConfig) -> EpochObs:
    if not sc.drop_types:
        return obs
    return EpochObs(obs.t, tuple(o for o in obs.obs if sc.keeps(o.sig)))


def run_engine(engine: RtkEngine, rover: list[EpochObs], ref: list[EpochObs], sats_at) -> list[EpochSolution]:
    """Process a rover stream against a time-sorted reference stream.

    Each rover epoch is paired with the newest reference epoch not later than
    it. ``sats_at(i)`` returns the satellite states for rover epoch ``i``.
    """
    out = []
    j = -1
    for i, r in enumerate(rover):
        while j + 1 < len(ref) and ref[j + 1].t - r.t <= 1e-9:
            j += 1
        if j < 0:
            out.append(engine.no_reference(r.t))
            continue
        out.append(engine.process_epoch(r, ref[j], sats_at(i)))
    return out


def simulate(sc: ScenarioConfig, seed: int, sky: Sky | None = None):
    """Truth, rover stream, delayed reference stream and satellite-state lookup for a scenario."""
    route = build_route(sc, seed)
    sky = sky or make_sky(seed, route.duration)
    truths = generate_truth(route, seed, sky)
    clocks = ClockModel.draw(seed)
    rover, ref = [], []
    for tr in truths:
        r, b = synthesize_epoch(tr, sky, sc.error, seed, clocks)
        rover.append(_filter(r, sc))
        ref.append(_filter(b, sc))
    # a reference epoch produced at t becomes available ``lag`` epochs later
    lag = int(round(sc.error.reference_latency * route.epoch_rate))
    return route, sky, truths, rover, ref, lag


def run_scenario(sc: ScenarioConfig, seed: int, cache: ApertureCache | None = None) -> RunResult:
    if not sc.implemented:
        raise NotImplementedError(f"scenario {sc.name} is not implemented")
    route, sky, truths, rover, ref, lag = simulate(sc, seed)
    cfg = sc.engine
    if cache is None or cache.p_bar_f != cfg.p_bar_f or cache.n_trials != cfg.aperture_trials:
        cache = ApertureCache(cfg.p_bar_f, cfg.aperture_trials, cfg.aperture_seed)
    engine = RtkEngine(sky.frame.origin_ecef, cfg, cache)
    sols = []
    for i, r in enumerate(rover):
        j = i - lag
        if j < 0:
            sols.append(engine.no_reference(r.t))
            continue
        sols.append(engine.process_epoch(r, ref[j], sky.states(truths[i].t_rel)))
    verdicts = [classify_epoch(s, t.t, t.pos_enu) for s, t in zip(sols, truths)]
    metrics = summarize(verdicts, sols, route.epoch_rate)
    return RunResult(sc.name, seed, sols, verdicts, truths, metrics)


def kinds(sols: list[EpochSolution]) -> dict[str, int]:
    out = {k.value: 0 for k in SolutionKind}
    for s in sols:
        out[s.kind.value] += 1
    return out
