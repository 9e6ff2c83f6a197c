"""Scoring of engine solutions against ground truth."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .core import GnssTime
from .engine.pipeline import EpochSolution, SolutionKind

SUCCESS_RADIUS_M = 0.30


class AlignmentError(ValueError):
    pass


class Verdict(str, Enum):
    SUCCESS = "Success"
    FAILURE = "Failure"
    UNDECIDED = "Undecided"


@dataclass(frozen=True)
class EpochVerdict:
    t: GnssTime
    verdict: Verdict
    err_3d: float
    err_h: float
    err_v: float


@dataclass(frozen=True)
class RunMetrics:
    n_epochs: int
    p_v: float
    p_s: float
    p_f: float
    p_u: float
    d95_3d: float | None
    d95_h: float | None
    d95_v: float | None
    gap_cdf: tuple[tuple[float, float], ...]
    mean_n_dd: float = math.nan

    def row(self) -> dict:
        return {"n_epochs": self.n_epochs, "P_V": self.p_v, "P_S": self.p_s, "P_F": self.p_f,
                "P_U": self.p_u, "d95_3d": self.d95_3d, "d95_h": self.d95_h, "d95_v": self.d95_v,
                "mean_n_dd": self.mean_n_dd}


def classify_epoch(sol: EpochSolution, truth_t: GnssTime, truth_pos_enu,
                   threshold: float = SUCCESS_RADIUS_M) -> EpochVerdict:
    """Success/Failure for fixed solutions within/beyond ``threshold`` of truth; Undecided otherwise."""
    if abs(sol.t - truth_t) > 1e-6:
        raise AlignmentError(f"solution at {sol.t} has no truth epoch (nearest {truth_t})")
    d = np.asarray(sol.baseline_enu, dtype=float) - np.asarray(truth_pos_enu, dtype=float)
    e3 = float(np.linalg.norm(d))
    eh = float(math.hypot(d[0], d[1]))
    ev = float(abs(d[2]))
    if sol.kind != SolutionKind.FIXED:
        v = Verdict.UNDECIDED
    elif e3 <= threshold:
        v = Verdict.SUCCESS
    else:
        v = Verdict.FAILURE
    return EpochVerdict(sol.t, v, e3, eh, ev)


def nearest_rank(values: Sequence[float], pct: float = 95.0) -> float:
    """Nearest-rank percentile: the ceil(pct/100 * n)-th smallest value."""
    x = np.sort(np.asarray(values, dtype=float))
    if x.size == 0:
        raise ValueError("percentile of an empty set")
    rank = max(1, math.ceil(pct / 100.0 * x.size - 1e-12))
    return float(x[rank - 1])


def availability_gaps(verdicts: Sequence[EpochVerdict], epoch_rate: float) -> list[float]:
    """Lengths (s) of maximal runs of non-fixed epochs."""
    gaps, run = [], 0
    for v in verdicts:
        if v.verdict == Verdict.UNDECIDED:
            run += 1
        elif run:
            gaps.append(run / epoch_rate)
            run = 0
    if run:
        gaps.append(run / epoch_rate)
    return gaps


def empirical_cdf(values: Sequence[float]) -> tuple[tuple[float, float], ...]:
    x = np.sort(np.asarray(values, dtype=float))
    n = x.size
    out = []
    for i, v in enumerate(x):
        if i + 1 < n and x[i + 1] == v:
            continue
        out.append((float(v), (i + 1) / n))
    return tuple(out)


def summarize(verdicts: Sequence[EpochVerdict], solutions: Sequence[EpochSolution] | None = None,
              epoch_rate: float = 5.0) -> RunMetrics:
    n = len(verdicts)
    if n == 0:
        raise ValueError("cannot summarize an empty run")
    n_s = sum(v.verdict == Verdict.SUCCESS for v in verdicts)
    n_f = sum(v.verdict == Verdict.FAILURE for v in verdicts)
    p_s, p_f = n_s / n, n_f / n
    # defined through the identities so they hold bit-exactly
    p_v = p_s + p_f
    p_u = 1.0 - p_v
    fixed = [v for v in verdicts if v.verdict != Verdict.UNDECIDED]
    if fixed:
        d3 = nearest_rank([v.err_3d for v in fixed])
        dh = nearest_rank([v.err_h for v in fixed])
        dv = nearest_rank([v.err_v for v in fixed])
    else:
        d3 = dh = dv = None
    gaps = availability_gaps(verdicts, epoch_rate)
    mean_ndd = float(np.mean([s.n_dd_used for s in solutions])) if solutions else math.nan
    return RunMetrics(n, p_v, p_s, p_f, p_u, d3, dh, dv, empirical_cdf(gaps), mean_ndd)


def table_text(rows: Sequence[tuple[str, RunMetrics]]) -> str:
    """Plain-text table with columns scenario,P_V,P_S,P_F,d95_3d,d95_h,d95_v."""

    def fmt(x):
        return "absent" if x is None else f"{x:.3f}"

    lines = ["scenario,P_V,P_S,P_F,d95_3d,d95_h,d95_v"]
    for name, m in rows:
        lines.append(f"{name},{m.p_v:.4f},{m.p_s:.4f},{m.p_f:.4f},{fmt(m.d95_3d)},{fmt(m.d95_h)},{fmt(m.d95_v)}")
    return "\n".join(lines) + "\n"
