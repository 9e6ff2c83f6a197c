"""Command-line front end: single runs, imported datasets and the degradation suite."""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .core import EpochObs
from .engine import EngineConfig, EpochSolution, RtkEngine, SolutionKind
from .io import (ConfigError, CsvRowError, RinexError, RunConfig, SchemaError, load_config, parse_config,
                 parse_rinex_obs, read_obs_csv, read_sats_csv, read_truth_csv)
from .metrics import (EpochVerdict, RunMetrics, Verdict, availability_gaps, classify_epoch, empirical_cdf,
                      summarize)
from .runner import run_engine, run_scenario
from .scenario.suite import ScenarioConfig, standard_suite

log = logging.getLogger("urbanrtk")

WORKERS_ENV = "URBANRTK_WORKERS"


class UsageError(Exception):
    pass


def _f(x) -> str:
    if x is None:
        return "absent"
    x = float(x)
    return "nan" if math.isnan(x) else repr(x)


# ---- output rendering (all in memory so a failed run leaves nothing behind) ----


def render_solutions(sols: list[EpochSolution], seed: int) -> str:
    lines = [f"# seed={seed}",
             "week,tow,kind,e,n,u,cee,cen,ceu,cnn,cnu,cuu,n_dd,n_excluded,n_screened,cost_best,cost_second,mu,nis"]
    for s in sols:
        c = s.cov
        cov = (c[0, 0], c[0, 1], c[0, 2], c[1, 1], c[1, 2], c[2, 2])
        vals = [s.t.week, _f(s.t.tow), s.kind.value, *(_f(v) for v in s.baseline_enu), *(_f(v) for v in cov),
                s.n_dd_used, s.n_excluded, s.n_dd_screened, _f(s.fix_costs[0]), _f(s.fix_costs[1]),
                _f(s.aperture_threshold), _f(s.nis)]
        lines.append(",".join(str(v) for v in vals))
    return "\n".join(lines) + "\n"


def render_verdicts(verdicts: list[EpochVerdict] | None, sols: list[EpochSolution], seed: int) -> str:
    lines = [f"# seed={seed}", "week,tow,kind,verdict,err_3d,err_h,err_v"]
    for i, s in enumerate(sols):
        if verdicts is None:
            lines.append(f"{s.t.week},{_f(s.t.tow)},{s.kind.value},unknown,nan,nan,nan")
        else:
            v = verdicts[i]
            lines.append(f"{s.t.week},{_f(s.t.tow)},{s.kind.value},{v.verdict.value},"
                         f"{_f(v.err_3d)},{_f(v.err_h)},{_f(v.err_v)}")
    return "\n".join(lines) + "\n"


def render_metrics(m: RunMetrics | None, sols: list[EpochSolution], seed: int, name: str) -> str:
    kinds = {k.value: sum(s.kind == k for s in sols) for k in SolutionKind}
    rows = [("scenario", name), ("seed", seed)]
    if m is not None:
        rows += [(k, _f(v) if k != "n_epochs" else v) for k, v in m.row().items()]
    else:
        # without truth only availability is known
        p_v = kinds["Fixed"] / len(sols)
        rows += [("n_epochs", len(sols)), ("P_V", _f(p_v)), ("P_S", "absent"), ("P_F", "absent"),
                 ("P_U", _f(1.0 - p_v)), ("d95_3d", "absent"), ("d95_h", "absent"), ("d95_v", "absent"),
                 ("mean_n_dd", _f(np.mean([s.n_dd_used for s in sols])))]
    rows += [(f"n_{k}", v) for k, v in kinds.items()]
    return f"# seed={seed}\nmetric,value\n" + "".join(f"{k},{v}\n" for k, v in rows)


def render_cdf(points, seed: int, column: str) -> str:
    return f"# seed={seed}\n{column},cdf\n" + "".join(f"{_f(x)},{_f(p)}\n" for x, p in points)


def render_error_cdf(verdicts: list[EpochVerdict] | None, seed: int) -> str:
    lines = [f"# seed={seed}", "component,err_m,cdf"]
    fixed = [v for v in verdicts or () if v.verdict != Verdict.UNDECIDED]
    for comp in ("3d", "h", "v"):
        for x, p in empirical_cdf([getattr(v, f"err_{comp}") for v in fixed]):
            lines.append(f"{comp},{_f(x)},{_f(p)}")
    return "\n".join(lines) + "\n"


def _outputs(name, seed, sols, verdicts, metrics, epoch_rate) -> dict[str, str]:
    if verdicts is not None:
        gaps = availability_gaps(verdicts, epoch_rate)
    else:
        flags = [EpochVerdict(s.t, Verdict.SUCCESS if s.kind == SolutionKind.FIXED else Verdict.UNDECIDED,
                              math.nan, math.nan, math.nan) for s in sols]
        gaps = availability_gaps(flags, epoch_rate)
    return {
        "solutions.csv": render_solutions(sols, seed),
        "verdicts.csv": render_verdicts(verdicts, sols, seed),
        "metrics.csv": render_metrics(metrics, sols, seed, name),
        "gap_cdf.csv": render_cdf(empirical_cdf(gaps), seed, "gap_s"),
        "error_cdf.csv": render_error_cdf(verdicts, seed),
    }


def _write_all(out: Path, files: dict[str, str]) -> None:
    out.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        tmp = out / (name + ".tmp")
        tmp.write_text(text)
        tmp.replace(out / name)


# ---- run ----


def _scenario(cfg: RunConfig, name: str) -> ScenarioConfig:
    cat = standard_suite(engine=cfg.engine)
    if name not in cat:
        raise UsageError(f"unknown scenario {name!r}; choose from {', '.join(cat)}")
    sc = cat[name]
    if not sc.implemented:
        raise UsageError(f"scenario {name} is not implemented")
    sc = replace(sc, error=cfg.scenario.apply(sc.error))
    if cfg.scenario.duration is not None:
        sc = replace(sc, duration=cfg.scenario.duration)
    return sc


def _read_stream(path: Path) -> tuple[list[EpochObs], tuple | None]:
    if path.suffix.lower() == ".csv":
        return read_obs_csv(path), None
    hdr, epochs = parse_rinex_obs(path.read_bytes())
    return epochs, hdr.approx_pos


def _imported(args, cfg: RunConfig):
    rover, _ = _read_stream(Path(args.rover))
    ref, ref_pos = _read_stream(Path(args.ref))
    if args.ref_pos:
        ref_pos = tuple(float(v) for v in args.ref_pos.split(","))
    if ref_pos is None or len(ref_pos) != 3 or not np.linalg.norm(ref_pos) > 6e6:
        raise UsageError("reference position unknown: pass --ref-pos X,Y,Z (ECEF meters)")
    sats = {t: states for t, states in read_sats_csv(args.sats)}
    missing = [e.t for e in rover if e.t not in sats]
    if missing:
        raise UsageError(f"satellite file has no states for {len(missing)} rover epochs (first {missing[0]})")
    engine = RtkEngine(np.asarray(ref_pos), cfg.engine)
    sols = run_engine(engine, rover, ref, lambda i: sats[rover[i].t])
    verdicts = metrics = None
    if args.truth:
        truth = {r.t: r for r in read_truth_csv(args.truth)}
        verdicts = []
        for s in sols:
            if s.t not in truth:
                raise UsageError(f"truth file has no record at {s.t}")
            verdicts.append(classify_epoch(s, s.t, truth[s.t].pos_enu))
        metrics = summarize(verdicts, sols)
    dts = [b.t - a.t for a, b in zip(rover, rover[1:])]
    rate = 1.0 / float(np.median(dts)) if dts else 5.0
    return "imported", sols, verdicts, metrics, rate


def cmd_run(args) -> int:
    cfg = load_config(args.config) if args.config else parse_config({})
    if args.scenario:
        sc = _scenario(cfg, args.scenario)
        r = run_scenario(sc, args.seed)
        files = _outputs(sc.name, args.seed, r.solutions, r.verdicts, r.metrics, 5.0)
    else:
        name, sols, verdicts, metrics, rate = _imported(args, cfg)
        files = _outputs(name, args.seed, sols, verdicts, metrics, rate)
    _write_all(Path(args.out), files)
    return 0


# ---- suite ----


def _suite_job(job):
    # one aperture table per run keeps results independent of job order and worker count
    sc, seed = job
    r = run_scenario(sc, seed)
    return sc.name, seed, r.metrics


def _mean_sd(xs) -> tuple[float, float]:
    a = np.asarray([x for x in xs if x is not None], dtype=float)
    if a.size == 0:
        return math.nan, math.nan
    return float(a.mean()), float(a.std(ddof=1)) if a.size > 1 else 0.0


def suite_table(catalog: dict[str, ScenarioConfig], results: dict[str, list[RunMetrics]], seeds) -> str:
    """Fixed-width summary, one row per catalog scenario, means with spreads over seeds."""
    head = f"{'scenario':<9}{'P_V':>16}{'P_S':>16}{'P_F':>16}{'d95_3d [m]':>12}  description"
    lines = [f"seeds: {','.join(str(s) for s in seeds)}", head, "-" * len(head)]
    for name, sc in catalog.items():
        if not sc.implemented:
            lines.append(f"{name:<9}{'not implemented':>16}{'':>16}{'':>16}{'':>12}  {sc.description}")
            continue
        ms = results[name]
        cells = []
        for attr in ("p_v", "p_s", "p_f"):
            mu, sd = _mean_sd([getattr(m, attr) * 100.0 for m in ms])
            cells.append(f"{mu:6.1f} +/- {sd:4.1f}")
        d95, _ = _mean_sd([m.d95_3d for m in ms])
        lines.append(f"{name:<9}{cells[0]:>16}{cells[1]:>16}{cells[2]:>16}{d95:>12.3f}  {sc.description}")
    lines.append("P values in percent; d95 is the mean over seeds of the nearest-rank 95th percentile.")
    return "\n".join(lines) + "\n"


def suite_csv(results: dict[str, list[tuple[int, RunMetrics]]]) -> str:
    lines = ["scenario,seed,n_epochs,P_V,P_S,P_F,P_U,d95_3d,d95_h,d95_v,mean_n_dd"]
    for name, rows in results.items():
        for seed, m in rows:
            lines.append(",".join([name, str(seed), str(m.n_epochs)] +
                                  [_f(x) for x in (m.p_v, m.p_s, m.p_f, m.p_u, m.d95_3d, m.d95_h, m.d95_v,
                                                   m.mean_n_dd)]))
    return "\n".join(lines) + "\n"


def _workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "1")
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    if n < 1:
        raise UsageError(f"{WORKERS_ENV} must be at least 1, got {n}")
    return n


def run_suite(cfg: RunConfig, seeds: list[int], workers: int = 1):
    catalog = standard_suite(cfg.scenario.duration or 480.0, engine=cfg.engine)
    catalog = {k: replace(sc, error=cfg.scenario.apply(sc.error)) for k, sc in catalog.items()}
    jobs = [(sc, s) for sc in catalog.values() if sc.implemented for s in seeds]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            done = list(pool.map(_suite_job, jobs))
    else:
        done = [_suite_job(j) for j in jobs]
    per: dict[str, list[tuple[int, RunMetrics]]] = {}
    for name, seed, m in done:
        per.setdefault(name, []).append((seed, m))
    return catalog, per


def cmd_suite(args) -> int:
    cfg = load_config(args.config) if args.config else parse_config({})
    seeds = _parse_seeds(args.seeds)
    workers = _workers()
    catalog, per = run_suite(cfg, seeds, workers)
    table = suite_table(catalog, {k: [m for _, m in v] for k, v in per.items()}, seeds)
    _write_all(Path(args.out), {"suite_table.txt": table, "suite_runs.csv": suite_csv(per)})
    sys.stdout.write(table)
    return 0


def _parse_seeds(text: str) -> list[int]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part[1:]:
            a, b = part.split("-", 1)
            out.extend(range(int(a), int(b) + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise UsageError("no seeds given")
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="urbanrtk", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one scenario or an imported dataset")
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario", help="catalog scenario name, e.g. S1")
    src.add_argument("--rover", help="rover observables (RINEX 3 or observables CSV)")
    r.add_argument("--ref", help="reference observables (RINEX 3 or observables CSV)")
    r.add_argument("--sats", help="satellite-state CSV")
    r.add_argument("--truth", help="optional truth CSV for imported runs")
    r.add_argument("--ref-pos", help="reference ECEF position as --ref-pos=X,Y,Z in meters (default: RINEX header)")
    r.add_argument("--config", help="JSON configuration")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", required=True, help="output directory")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("suite", help="run the degradation catalog over several seeds")
    s.add_argument("--config", help="JSON configuration")
    s.add_argument("--seeds", default="0-4", help="comma list or ranges, e.g. 0-4 or 1,3,7")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_suite)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "run" and args.rover and not (args.ref and args.sats):
        parser.error("--rover requires --ref and --sats")
    try:
        return args.func(args)
    except (ConfigError, RinexError, SchemaError, CsvRowError, UsageError, ValueError, OSError) as exc:
        print(f"urbanrtk: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
