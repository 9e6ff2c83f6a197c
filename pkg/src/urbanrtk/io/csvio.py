"""Native CSV formats: observables, satellite states and truth trajectories.

Reals are written with ``repr`` so a write/read cycle reproduces every float bit-exactly.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..core import Band, Constellation, EpochObs, GnssTime, Observable, SatState, SignalId

OBS_COLUMNS = ("week", "tow", "const", "prn", "band", "pr_m", "cp_cyc", "dop_hz", "cn0", "stheta", "coh", "valid")
SAT_COLUMNS = ("week", "tow", "const", "prn", "band", "x", "y", "z", "clk")
TRUTH_COLUMNS = ("week", "tow", "e", "n", "u", "ve", "vn", "vu")


class SchemaError(ValueError):
    pass


class CsvRowError(ValueError):
    def __init__(self, path, line: int, column: str, msg: str):
        super().__init__(f"{path}:{line}: column {column!r}: {msg}")
        self.line = line
        self.column = column


def _check_header(path, got: Sequence[str] | None, want: Sequence[str]) -> None:
    got = list(got or [])
    if got == list(want):
        return
    missing = [c for c in want if c not in got]
    extra = [c for c in got if c not in want]
    parts = []
    if missing:
        parts.append("missing " + ", ".join(missing))
    if extra:
        parts.append("unexpected " + ", ".join(extra))
    if not parts:
        parts.append("columns out of order, expected " + ",".join(want))
    raise SchemaError(f"{path}: schema mismatch: " + "; ".join(parts))


def _f(x: float) -> str:
    return "nan" if math.isnan(x) else repr(float(x))


class _Row:
    """Typed accessors that report the offending line and column."""

    def __init__(self, path, line: int, row: dict):
        self.path, self.line, self.row = path, line, row

    def _err(self, col, msg):
        return CsvRowError(self.path, self.line, col, msg)

    def float(self, col: str) -> float:
        try:
            return float(self.row[col])
        except (TypeError, ValueError):
            raise self._err(col, f"not a number: {self.row[col]!r}") from None

    def int(self, col: str) -> int:
        try:
            return int(self.row[col])
        except (TypeError, ValueError):
            raise self._err(col, f"not an integer: {self.row[col]!r}") from None

    def flag(self, col: str) -> bool:
        v = self.row[col]
        if v not in ("0", "1"):
            raise self._err(col, f"expected 0 or 1, got {v!r}")
        return v == "1"

    def time(self) -> GnssTime:
        try:
            return GnssTime(self.int("week"), self.float("tow"))
        except CsvRowError:
            raise
        except ValueError as exc:
            raise self._err("tow", str(exc)) from None

    def signal(self) -> SignalId:
        try:
            return SignalId(Constellation.from_code(self.row["const"]), self.int("prn"),
                            Band.from_name(self.row["band"]))
        except CsvRowError:
            raise
        except ValueError as exc:
            raise self._err("const/prn/band", str(exc)) from None


def _rows(path, columns):
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        _check_header(path, reader.fieldnames, columns)
        for lineno, row in enumerate(reader, start=2):
            if None in row or any(v is None for v in row.values()):
                raise CsvRowError(path, lineno, "*", "wrong number of fields")
            yield _Row(path, lineno, row)


def _group(items: Iterable[tuple[GnssTime, object]], path) -> list[tuple[GnssTime, list]]:
    out: list[tuple[GnssTime, list]] = []
    for t, item in items:
        if out and t == out[-1][0]:
            out[-1][1].append(item)
        elif out and t < out[-1][0]:
            raise ValueError(f"{path}: epochs are not in time order at {t}")
        else:
            out.append((t, [item]))
    return out


# ---- observables ----


def write_obs_csv(path, epochs: Sequence[EpochObs]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(OBS_COLUMNS)
        for ep in epochs:
            for o in ep.obs:
                w.writerow([ep.t.week, repr(float(ep.t.tow)), o.sig.constellation.code, o.sig.prn, o.sig.band.name,
                            _f(o.pseudorange), _f(o.carrier_phase), _f(o.doppler), _f(o.cn0), _f(o.s_theta),
                            int(o.coherent_code), int(o.valid)])


def read_obs_csv(path) -> list[EpochObs]:
    """Read an observable stream; consecutive rows with equal (week, tow) form one epoch."""

    def parse():
        for r in _rows(path, OBS_COLUMNS):
            try:
                o = Observable(r.signal(), r.float("pr_m"), r.float("cp_cyc"), r.float("dop_hz"), r.float("cn0"),
                               r.float("stheta"), coherent_code=r.flag("coh"), valid=r.flag("valid"))
            except CsvRowError:
                raise
            except ValueError as exc:
                raise CsvRowError(path, r.line, "*", str(exc)) from None
            yield r.time(), o

    return [EpochObs(t, tuple(obs)) for t, obs in _group(parse(), path)]


# ---- satellite states ----


def write_sats_csv(path, epochs: Sequence[tuple[GnssTime, dict[SignalId, SatState]]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SAT_COLUMNS)
        for t, states in epochs:
            for sig in sorted(states):
                s = states[sig]
                w.writerow([t.week, repr(float(t.tow)), sig.constellation.code, sig.prn, sig.band.name,
                            *(_f(v) for v in s.pos_ecef), _f(s.clock_bias)])


def read_sats_csv(path) -> list[tuple[GnssTime, dict[SignalId, SatState]]]:
    def parse():
        for r in _rows(path, SAT_COLUMNS):
            sig = r.signal()
            try:
                s = SatState(sig, np.array([r.float("x"), r.float("y"), r.float("z")]), r.float("clk"))
            except CsvRowError:
                raise
            except ValueError as exc:
                raise CsvRowError(path, r.line, "x/y/z", str(exc)) from None
            yield r.time(), s

    return [(t, {s.sig: s for s in states}) for t, states in _group(parse(), path)]


# ---- truth ----


@dataclass(frozen=True)
class TruthRecord:
    t: GnssTime
    pos_enu: np.ndarray
    vel_enu: np.ndarray


def write_truth_csv(path, records: Sequence[TruthRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRUTH_COLUMNS)
        for rec in records:
            w.writerow([rec.t.week, repr(float(rec.t.tow)), *(_f(v) for v in rec.pos_enu),
                        *(_f(v) for v in rec.vel_enu)])


def read_truth_csv(path) -> list[TruthRecord]:
    out = []
    for r in _rows(path, TRUTH_COLUMNS):
        out.append(TruthRecord(r.time(), np.array([r.float(c) for c in "enu"]),
                               np.array([r.float(c) for c in ("ve", "vn", "vu")])))
    return out
