"""RINEX 3.0x observation files restricted to the GPS/SBAS/Galileo L1 and GPS L2C signals."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta

from ..core import Band, Constellation, EpochObs, GnssTime, Observable, SignalId

log = logging.getLogger(__name__)

GPS_EPOCH = datetime(1980, 1, 6)

# observation code -> (band, field)
SUPPORTED_CODES = {
    "C1C": (Band.L1, "pr"), "L1C": (Band.L1, "cp"), "D1C": (Band.L1, "dop"), "S1C": (Band.L1, "cn0"),
    "C2L": (Band.L2, "pr"), "L2L": (Band.L2, "cp"), "D2L": (Band.L2, "dop"), "S2L": (Band.L2, "cn0"),
}
_SYSTEMS = {"G": Constellation.GPS, "E": Constellation.GALILEO, "S": Constellation.SBAS}
_OBS_WIDTH = 16


class RinexError(ValueError):
    """Parse failure at a 1-based line and column."""

    def __init__(self, msg: str, line: int, col: int = 1):
        super().__init__(f"line {line}, col {col}: {msg}")
        self.line = line
        self.col = col


class MalformedHeader(RinexError):
    pass


class UnknownVersion(RinexError):
    pass


class TruncatedEpoch(RinexError):
    pass


class MalformedRecord(RinexError):
    pass


@dataclass
class ObsFileHeader:
    version: float
    marker: str = ""
    receiver: str = ""
    antenna: str = ""
    approx_pos: tuple[float, float, float] = (0.0, 0.0, 0.0)
    obs_types: dict[str, tuple[str, ...]] = field(default_factory=dict)
    interval: float = math.nan
    skipped_event_records: int = 0
    skipped_satellites: int = 0


def _num(text: str, line: int, col: int, what: str, cls=MalformedHeader) -> float:
    try:
        return float(text)
    except ValueError:
        raise cls(f"bad {what} {text.strip()!r}", line, col) from None


def _label(raw: str) -> str:
    return raw[60:80].strip() if len(raw) > 60 else ""


def gps_time(dt: datetime) -> GnssTime:
    """Calendar epoch (GPS time scale) to week and seconds of week."""
    d = dt - GPS_EPOCH
    week, day = divmod(d.days, 7)
    # build tow from small parts so sub-second epochs keep full precision
    return GnssTime(week, day * 86400.0 + d.seconds + d.microseconds / 1e6)


def calendar(t: GnssTime) -> datetime:
    return GPS_EPOCH + timedelta(weeks=t.week, seconds=t.tow)


def _parse_header(lines: list[str]) -> tuple[ObsFileHeader, int]:
    if not lines or _label(lines[0]) != "RINEX VERSION / TYPE":
        raise MalformedHeader("first line must be RINEX VERSION / TYPE", 1, 61)
    first = lines[0]
    version = _num(first[0:9], 1, 1, "version")
    if not 3.0 <= version < 3.1:
        raise UnknownVersion(f"unsupported RINEX version {version:.2f} (need 3.0x)", 1, 1)
    if first[20:21] != "O":
        raise MalformedHeader(f"file type {first[20:21]!r} is not an observation file", 1, 21)
    hdr = ObsFileHeader(version=version)
    pending: tuple[str, int] | None = None  # system, remaining count of a continued type list
    i = 1
    while i < len(lines):
        raw = lines[i]
        ln = i + 1
        label = _label(raw)
        if label == "END OF HEADER":
            if pending is not None:
                raise MalformedHeader(f"observation type list for {pending[0]} is incomplete", ln)
            if not hdr.obs_types:
                raise MalformedHeader("no SYS / # / OBS TYPES records", ln)
            return hdr, i + 1
        if label == "SYS / # / OBS TYPES":
            if pending is None:
                sys_ = raw[0:1]
                if not sys_.strip():
                    raise MalformedHeader("observation type record without a system", ln, 1)
                n = int(_num(raw[3:6], ln, 4, "type count"))
                pending = (sys_, n)
                hdr.obs_types[sys_] = ()
            elif raw[0:1].strip():
                raise MalformedHeader(f"new system before the {pending[0]} type list ended", ln, 1)
            sys_, remaining = pending
            codes = [raw[7 + 4 * k:10 + 4 * k].strip() for k in range(13)]
            codes = [c for c in codes if c][:remaining]
            hdr.obs_types[sys_] += tuple(codes)
            remaining -= len(codes)
            pending = (sys_, remaining) if remaining > 0 else None
        elif pending is not None:
            raise MalformedHeader(f"observation type list for {pending[0]} is incomplete", ln)
        elif label == "MARKER NAME":
            hdr.marker = raw[0:60].strip()
        elif label == "REC # / TYPE / VERS":
            hdr.receiver = raw[20:40].strip()
        elif label == "ANT # / TYPE":
            hdr.antenna = raw[20:40].strip()
        elif label == "APPROX POSITION XYZ":
            hdr.approx_pos = tuple(_num(raw[14 * k:14 * k + 14], ln, 14 * k + 1, "position") for k in range(3))
        elif label == "INTERVAL":
            hdr.interval = _num(raw[0:10], ln, 1, "interval")
            if not hdr.interval > 0:
                raise MalformedHeader(f"interval must be positive, got {hdr.interval}", ln, 1)
        i += 1
    raise MalformedHeader("missing END OF HEADER", len(lines) + 1)


def _parse_epoch_line(raw: str, ln: int) -> tuple[GnssTime, int, int]:
    if len(raw) < 35:
        raise MalformedRecord("epoch line too short", ln, len(raw) + 1)
    try:
        y, mo, d, h, mi = (int(raw[a:b]) for a, b in ((2, 6), (7, 9), (10, 12), (13, 15), (16, 18)))
    except ValueError:
        raise MalformedRecord("bad epoch date", ln, 3) from None
    sec = _num(raw[18:29], ln, 19, "epoch seconds", MalformedRecord)
    flag = int(_num(raw[31:32], ln, 32, "epoch flag", MalformedRecord))
    nsat = int(_num(raw[32:35], ln, 33, "satellite count", MalformedRecord))
    try:
        dt = datetime(y, mo, d, h, mi) + timedelta(seconds=sec)
    except ValueError as exc:
        raise MalformedRecord(f"bad epoch date: {exc}", ln, 3) from None
    return gps_time(dt), flag, nsat


def _parse_sat_line(raw: str, ln: int, hdr: ObsFileHeader) -> list[Observable]:
    sys_ = raw[0:1]
    if sys_ not in hdr.obs_types:
        raise MalformedRecord(f"system {sys_!r} has no declared observation types", ln, 1)
    if sys_ not in _SYSTEMS:
        return []
    prn = int(_num(raw[1:3], ln, 2, "satellite number", MalformedRecord))
    values: dict[Band, dict[str, float]] = {}
    for k, code in enumerate(hdr.obs_types[sys_]):
        if code not in SUPPORTED_CODES:
            continue
        band, what = SUPPORTED_CODES[code]
        a = 3 + _OBS_WIDTH * k
        text = raw[a:a + 14]
        v = _num(text, ln, a + 1, f"{code} value", MalformedRecord) if text.strip() else math.nan
        values.setdefault(band, {})[what] = v
    out = []
    for band, v in sorted(values.items()):
        try:
            sig = SignalId(_SYSTEMS[sys_], prn, band)
        except ValueError:
            continue
        pr, cp = v.get("pr", math.nan), v.get("cp", math.nan)
        dop, cn0 = v.get("dop", math.nan), v.get("cn0", math.nan)
        valid = not any(math.isnan(x) for x in (pr, cp, dop, cn0))
        out.append(Observable(sig, pr, cp, dop, cn0, 1.0, valid=valid, imported=True))
    return out


def parse_rinex_obs(data: bytes | str) -> tuple[ObsFileHeader, list[EpochObs]]:
    """Parse an observation file into its header and per-epoch observables.

    RINEX carries no lock statistic, so every observable gets s_theta = 1.0 and
    ``imported = True``. A signal missing any of its four fields is kept with
    ``valid = False``. Event records (flag 2 to 6) are skipped and counted in
    ``header.skipped_event_records``. Systems other than G, E and S are dropped
    and counted in ``header.skipped_satellites``.
    """
    text = data.decode("ascii") if isinstance(data, (bytes, bytearray)) else data
    lines = text.splitlines()
    hdr, i = _parse_header(lines)
    epochs: list[EpochObs] = []
    while i < len(lines):
        raw = lines[i]
        ln = i + 1
        if not raw.strip():
            i += 1
            continue
        if not raw.startswith(">"):
            raise MalformedRecord("expected an epoch line starting with '>'", ln, 1)
        t, flag, nsat = _parse_epoch_line(raw, ln)
        if i + 1 + nsat > len(lines):
            raise TruncatedEpoch(f"epoch declares {nsat} records but the file ends after "
                                 f"{len(lines) - i - 1}", len(lines) + 1)
        body = lines[i + 1:i + 1 + nsat]
        i += 1 + nsat
        if flag not in (0, 1):
            hdr.skipped_event_records += 1
            continue
        obs = []
        for k, sat_line in enumerate(body):
            if sat_line.startswith(">"):
                raise TruncatedEpoch(f"epoch declares {nsat} records but only {k} precede the next epoch",
                                     ln + 1 + k, 1)
            got = _parse_sat_line(sat_line, ln + 1 + k, hdr)
            if not got and sat_line[0:1] not in _SYSTEMS:
                hdr.skipped_satellites += 1
            obs.extend(got)
        epochs.append(EpochObs(t, tuple(obs)))
    if hdr.skipped_event_records:
        log.warning("skipped %d event records", hdr.skipped_event_records)
    return hdr, epochs


def _fmt_obs(v: float) -> str:
    return " " * _OBS_WIDTH if math.isnan(v) else f"{v:14.3f}  "


def write_rinex_obs(hdr: ObsFileHeader, epochs: list[EpochObs]) -> str:
    """Render epochs in the supported subset; values are rounded to the format's 3 decimals."""

    def line(content: str, label: str) -> str:
        return f"{content:<60.60}{label:<20}"

    out = [line(f"{hdr.version:9.2f}           O                   M", "RINEX VERSION / TYPE"),
           line(hdr.marker, "MARKER NAME"),
           line(f"{'':20}{hdr.receiver:<20.20}", "REC # / TYPE / VERS"),
           line(f"{'':20}{hdr.antenna:<20.20}", "ANT # / TYPE"),
           line("".join(f"{x:14.4f}" for x in hdr.approx_pos), "APPROX POSITION XYZ")]
    for sys_, codes in hdr.obs_types.items():
        for k in range(0, max(1, len(codes)), 13):
            chunk = "".join(f" {c:>3}" for c in codes[k:k + 13])
            head = f"{sys_}  {len(codes):3d}" if k == 0 else " " * 6
            out.append(line(head + chunk, "SYS / # / OBS TYPES"))
    if not math.isnan(hdr.interval):
        out.append(line(f"{hdr.interval:10.3f}", "INTERVAL"))
    out.append(line("", "END OF HEADER"))
    letter = {v: k for k, v in _SYSTEMS.items()}
    for ep in epochs:
        dt = calendar(ep.t)
        sec = dt.second + dt.microsecond * 1e-6
        by_sat: dict[tuple, dict[Band, Observable]] = {}
        for o in ep.obs:
            by_sat.setdefault(o.sig.sat, {})[o.sig.band] = o
        out.append(f"> {dt.year:4d} {dt.month:02d} {dt.day:02d} {dt.hour:02d} {dt.minute:02d}"
                   f"{sec:11.7f}  0{len(by_sat):3d}")
        for (const, prn), bands in sorted(by_sat.items()):
            sys_ = letter[const]
            cells = []
            for code in hdr.obs_types.get(sys_, ()):
                band, what = SUPPORTED_CODES.get(code, (None, None))
                o = bands.get(band) if band is not None else None
                if o is None:
                    cells.append(_fmt_obs(math.nan))
                    continue
                v = {"pr": o.pseudorange, "cp": o.carrier_phase, "dop": o.doppler, "cn0": o.cn0}[what]
                cells.append(_fmt_obs(v))
            out.append(f"{sys_}{prn:02d}" + "".join(cells).rstrip())
    return "\n".join(out) + "\n"
