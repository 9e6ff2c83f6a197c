import csv
import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from urbanrtk.core import Band, Constellation, EpochObs, GnssTime, Observable, SatState, SignalId
from urbanrtk.engine import EngineConfig
from urbanrtk.io import (ConfigError, CsvRowError, MalformedHeader, MalformedRecord, SchemaError, TruncatedEpoch,
                         TruthRecord, UnknownVersion, load_config, parse_config, parse_rinex_obs, read_obs_csv,
                         read_sats_csv, read_truth_csv, write_obs_csv, write_rinex_obs, write_sats_csv,
                         write_truth_csv)

FIXTURES = Path(__file__).parent / "fixtures"


def obs_fields(o):
    return (o.sig, o.pseudorange, o.carrier_phase, o.doppler, o.cn0, o.s_theta, o.coherent_code, o.valid)


def same(a, b):
    """Field equality where NaN matches NaN."""
    if isinstance(a, float) and isinstance(b, float):
        return (math.isnan(a) and math.isnan(b)) or a == b
    return a == b


def same_stream(xs, ys):
    assert len(xs) == len(ys)
    for ex, ey in zip(xs, ys):
        assert ex.t == ey.t and len(ex.obs) == len(ey.obs)
        for ox, oy in zip(ex.obs, ey.obs):
            assert all(same(a, b) for a, b in zip(obs_fields(ox), obs_fields(oy))), (ox, oy)


# ---- RINEX ----

def _fixture_table():
    rows = list(csv.DictReader(open(FIXTURES / "minimal_obs_expected.csv")))
    return [(int(r["week"]), float(r["tow"]), r["const"], int(r["prn"]), r["band"], float(r["pr_m"]),
             float(r["cp_cyc"]), float(r["dop_hz"]), float(r["cn0"]), r["valid"] == "1") for r in rows]


def _flatten(epochs):
    out = []
    for ep in epochs:
        for o in ep.obs:
            out.append((ep.t.week, ep.t.tow, o.sig.constellation.code, o.sig.prn, o.sig.band.name, o.pseudorange,
                        o.carrier_phase, o.doppler, o.cn0, o.valid))
    return out


def test_rinex_fixture_matches_table():
    hdr, epochs = parse_rinex_obs((FIXTURES / "minimal_obs.rnx").read_bytes())
    got, want = _flatten(epochs), _fixture_table()
    assert len(got) == len(want)
    for g, w in zip(got, want):
        assert all(same(a, b) for a, b in zip(g, w)), (g, w)
    assert hdr.version == 3.04
    assert hdr.marker == "FIXTURE" and hdr.receiver == "TESTRX" and hdr.antenna == "TESTANT"
    assert hdr.approx_pos == (-742080.4125, -5462030.8959, 3198339.6890)
    assert hdr.obs_types["E"] == ("C1C", "L1C", "D1C", "S1C")
    assert hdr.interval == 0.2
    assert hdr.skipped_event_records == 1
    assert hdr.skipped_satellites == 1  # the GLONASS record
    for ep in epochs:
        assert all(o.imported and o.s_theta == 1.0 for o in ep.obs)


def _header_only():
    text = (FIXTURES / "minimal_obs.rnx").read_text()
    return text[:text.index("END OF HEADER") + len("END OF HEADER")] + "\n"


def test_rinex_empty_body():
    hdr, epochs = parse_rinex_obs(_header_only())
    assert epochs == [] and "G" in hdr.obs_types


def test_rinex_unknown_version():
    text = _header_only().replace("     3.04", "     2.11", 1)
    with pytest.raises(UnknownVersion) as ei:
        parse_rinex_obs(text)
    assert ei.value.line == 1


def test_rinex_malformed_header_reports_position():
    text = _header_only().replace("G    8", "G    X", 1)
    with pytest.raises(MalformedHeader) as ei:
        parse_rinex_obs(text)
    assert ei.value.line == 6 and ei.value.col == 4
    with pytest.raises(MalformedHeader):
        parse_rinex_obs(_header_only().replace("END OF HEADER", "COMMENT      "))


def test_rinex_truncated_epoch():
    lines = (FIXTURES / "minimal_obs.rnx").read_text().splitlines()
    with pytest.raises(TruncatedEpoch) as ei:
        parse_rinex_obs("\n".join(lines[:-1]) + "\n")
    assert ei.value.line == len(lines)
    # a record count that runs into the next epoch line
    bad = lines[:10] + ["> 2020 06 25 14 30  0.0000000  0  4"] + lines[11:]
    with pytest.raises(TruncatedEpoch) as ei:
        parse_rinex_obs("\n".join(bad) + "\n")
    assert ei.value.line == 15


def test_rinex_malformed_record():
    text = (FIXTURES / "minimal_obs.rnx").read_text().replace("21234567.891", "21234567.8x1")
    with pytest.raises(MalformedRecord) as ei:
        parse_rinex_obs(text)
    assert ei.value.line == 12 and ei.value.col == 4


def test_rinex_undeclared_system_is_an_error():
    text = (FIXTURES / "minimal_obs.rnx").read_text().replace("R07", "C07")
    with pytest.raises(MalformedRecord, match="no declared observation types"):
        parse_rinex_obs(text)


def test_rinex_writer_round_trip():
    hdr, epochs = parse_rinex_obs((FIXTURES / "minimal_obs.rnx").read_text())
    hdr2, epochs2 = parse_rinex_obs(write_rinex_obs(hdr, epochs))
    assert hdr2.obs_types == hdr.obs_types and hdr2.interval == hdr.interval
    same_stream(epochs, epochs2)


# ---- native CSV ----

SIGNALS = [SignalId(Constellation.GPS, p, Band.L1) for p in (1, 7, 30)] + \
          [SignalId(Constellation.GPS, 7, Band.L2), SignalId(Constellation.GALILEO, 12, Band.L1),
           SignalId(Constellation.SBAS, 131, Band.L1)]

reals = st.floats(-3e7, 3e7, allow_nan=False)


@st.composite
def observables(draw, sig):
    valid = draw(st.booleans())
    cp = draw(reals) if valid else math.nan
    return Observable(sig, draw(reals), cp, draw(st.floats(-5e3, 5e3)), draw(st.floats(0, 60)),
                      draw(st.floats(-1, 1)), coherent_code=draw(st.booleans()), valid=valid)


@st.composite
def streams(draw):
    t = draw(st.floats(0, 6e5, allow_nan=False))
    out = []
    for _ in range(draw(st.integers(0, 6))):
        sigs = draw(st.lists(st.sampled_from(SIGNALS), unique=True, max_size=len(SIGNALS)))
        out.append(EpochObs(GnssTime(2100, t), tuple(draw(observables(s)) for s in sigs)))
        t += draw(st.sampled_from([0.2, 0.1, 1e-3, 1.0]))
    return [e for e in out if e.obs and e.t.tow < 604800.0]


@settings(max_examples=60)
@given(streams())
def test_obs_csv_round_trip(tmp_path_factory, stream):
    p = tmp_path_factory.mktemp("csv") / "obs.csv"
    write_obs_csv(p, stream)
    same_stream(stream, read_obs_csv(p))


def test_obs_csv_keeps_invalid_nan_rows(tmp_path):
    sig = SIGNALS[0]
    ep = EpochObs(GnssTime(2100, 10.0), (Observable(sig, math.nan, math.nan, 1.0, 20.0, 0.1, valid=False),))
    p = tmp_path / "obs.csv"
    write_obs_csv(p, [ep])
    assert "nan" in p.read_text()
    back = read_obs_csv(p)
    assert not back[0].obs[0].valid and math.isnan(back[0].obs[0].carrier_phase)


def test_obs_csv_two_hour_stream_count(tmp_path):
    p = tmp_path / "obs.csv"
    with open(p, "w") as fh:
        fh.write("week,tow,const,prn,band,pr_m,cp_cyc,dop_hz,cn0,stheta,coh,valid\n")
        for k in range(36000):
            fh.write(f"2100,{1000 + k * 0.2!r},G,1,L1,2.1e7,1.1e8,0.5,45.0,1.0,1,1\n")
    assert len(read_obs_csv(p)) == 36000


def test_obs_csv_schema_errors(tmp_path):
    p = tmp_path / "obs.csv"
    p.write_text("week,tow,const,prn,band,pr_m,cp_cyc,dop_hz,cn0,stheta,coherent,valid\n")
    with pytest.raises(SchemaError, match="missing coh.*unexpected coherent"):
        read_obs_csv(p)
    p.write_text("tow,week,const,prn,band,pr_m,cp_cyc,dop_hz,cn0,stheta,coh,valid\n")
    with pytest.raises(SchemaError, match="out of order"):
        read_obs_csv(p)


def test_obs_csv_row_errors_carry_position(tmp_path):
    p = tmp_path / "obs.csv"
    p.write_text("week,tow,const,prn,band,pr_m,cp_cyc,dop_hz,cn0,stheta,coh,valid\n"
                 "2100,1.0,G,1,L1,2.1e7,1.1e8,0.5,45.0,1.0,1,1\n"
                 "2100,1.2,G,1,L1,2.1e7,abc,0.5,45.0,1.0,1,1\n")
    with pytest.raises(CsvRowError) as ei:
        read_obs_csv(p)
    assert ei.value.line == 3 and ei.value.column == "cp_cyc"
    p.write_text("week,tow,const,prn,band,pr_m,cp_cyc,dop_hz,cn0,stheta,coh,valid\n"
                 "2100,1.0,G,1,L1,2.1e7,1.1e8,0.5,45.0,1.0,yes,1\n")
    with pytest.raises(CsvRowError, match="coh"):
        read_obs_csv(p)


def test_obs_csv_rejects_time_reversal(tmp_path):
    p = tmp_path / "obs.csv"
    p.write_text("week,tow,const,prn,band,pr_m,cp_cyc,dop_hz,cn0,stheta,coh,valid\n"
                 "2100,2.0,G,1,L1,2.1e7,1.1e8,0.5,45.0,1.0,1,1\n"
                 "2100,1.0,G,1,L1,2.1e7,1.1e8,0.5,45.0,1.0,1,1\n")
    with pytest.raises(ValueError, match="time order"):
        read_obs_csv(p)


def test_sats_and_truth_csv_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    t0 = GnssTime(2100, 100.0)
    sats = []
    for k in range(3):
        states = {}
        for sig in SIGNALS:
            u = rng.standard_normal(3)
            states[sig] = SatState(sig, 2.66e7 * u / np.linalg.norm(u), float(rng.normal(0, 1e-4)))
        sats.append((t0 + 0.2 * k, states))
    p = tmp_path / "sats.csv"
    write_sats_csv(p, sats)
    back = read_sats_csv(p)
    assert [t for t, _ in back] == [t for t, _ in sats]
    for (_, a), (_, b) in zip(sats, back):
        assert set(a) == set(b)
        for sig in a:
            assert np.array_equal(a[sig].pos_ecef, b[sig].pos_ecef) and a[sig].clock_bias == b[sig].clock_bias

    recs = [TruthRecord(t0 + 0.2 * k, rng.normal(0, 100, 3), rng.normal(0, 5, 3)) for k in range(5)]
    p = tmp_path / "truth.csv"
    write_truth_csv(p, recs)
    assert p.read_text().splitlines()[0] == "week,tow,e,n,u,ve,vn,vu"
    for a, b in zip(recs, read_truth_csv(p)):
        assert a.t == b.t and np.array_equal(a.pos_enu, b.pos_enu) and np.array_equal(a.vel_enu, b.vel_enu)


# ---- configuration ----

def test_empty_config_gives_defaults():
    cfg = parse_config({}).engine
    assert (cfg.cn0_min, cfg.s_theta_min, cfg.elev_min, cfg.nis_threshold, cfg.exclusion_depth, cfg.sigma_rho,
            cfg.sigma_phi, cfg.q_h, cfg.q_v, cfg.p_bar_f) == (37.5, 0.5, 15.0, 2.0, 8, 0.9, 0.004, 0.4, 0.06, 0.001)
    assert cfg == EngineConfig()


def test_config_range_error():
    with pytest.raises(ConfigError, match="cn0_min"):
        parse_config({"cn0_min": -1})


def test_config_unknown_key_is_named():
    with pytest.raises(ConfigError, match="'foo'"):
        parse_config({"foo": 1})
    with pytest.raises(ConfigError, match="'bar'"):
        parse_config({"scenario": {"error": {"bar": 1}}})


def test_config_type_mismatch():
    with pytest.raises(ConfigError, match="exclusion_depth"):
        parse_config({"exclusion_depth": 2.5})
    with pytest.raises(ConfigError, match="elevation_weighting"):
        parse_config({"elevation_weighting": 1})
    with pytest.raises(ConfigError):
        parse_config([])


def test_config_scenario_binding(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"exclusion_depth": 0, "scenario": {"name": "S7", "duration": 60,
                                                                "error": {"p_outlier": 0.1}}}))
    rc = load_config(p)
    assert rc.engine.exclusion_depth == 0
    assert rc.scenario.name == "S7" and rc.scenario.duration == 60.0
    from urbanrtk.scenario.synth import ErrorModel
    assert rc.scenario.apply(ErrorModel()).p_outlier == 0.1


def test_config_json_error_position(tmp_path):
    p = tmp_path / "c.json"
    p.write_text('{\n  "cn0_min": 30,\n  oops\n}')
    with pytest.raises(ConfigError, match="line 3"):
        load_config(p)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
