import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from urbanrtk.core import GnssTime
from urbanrtk.engine import EpochSolution, SolutionKind
from urbanrtk.metrics import (AlignmentError, EpochVerdict, Verdict, availability_gaps, classify_epoch,
                              empirical_cdf, nearest_rank, summarize, table_text)

T0 = GnssTime(2100, 1000.0)


def _sol(kind, err=(0.0, 0.0, 0.0), t=T0):
    return EpochSolution(t, kind, np.asarray(err, float), np.eye(3))


def _v(verdict, e=0.0, k=0):
    return EpochVerdict(T0 + 0.2 * k, verdict, e, e, 0.0)


def test_classify_examples():
    assert classify_epoch(_sol(SolutionKind.FIXED, (0.05, 0, 0)), T0, np.zeros(3)).verdict == Verdict.SUCCESS
    assert classify_epoch(_sol(SolutionKind.FIXED, (0.31, 0, 0)), T0, np.zeros(3)).verdict == Verdict.FAILURE
    assert classify_epoch(_sol(SolutionKind.FIXED, (0.30, 0, 0)), T0, np.zeros(3)).verdict == Verdict.SUCCESS
    for kind in (SolutionKind.FLOAT, SolutionKind.RESET, SolutionKind.NONE):
        assert classify_epoch(_sol(kind, (0.01, 0, 0)), T0, np.zeros(3)).verdict == Verdict.UNDECIDED


def test_classify_error_components():
    v = classify_epoch(_sol(SolutionKind.FIXED, (3.0, 4.0, -12.0)), T0, np.zeros(3))
    assert (v.err_3d, v.err_h, v.err_v) == (13.0, 5.0, 12.0)


def test_classify_requires_aligned_truth():
    with pytest.raises(AlignmentError):
        classify_epoch(_sol(SolutionKind.FIXED), T0 + 0.2, np.zeros(3))


def test_summary_counting_example():
    m = summarize([_v(Verdict.SUCCESS), _v(Verdict.SUCCESS), _v(Verdict.FAILURE, 1.0), _v(Verdict.UNDECIDED)])
    assert (m.p_v, m.p_s, m.p_f, m.p_u) == (0.75, 0.5, 0.25, 0.25)


def test_summary_all_success():
    m = summarize([_v(Verdict.SUCCESS, 0.01 * i) for i in range(10)])
    assert m.p_v == m.p_s == 1.0 and m.p_f == 0.0 and m.p_u == 0.0
    assert m.gap_cdf == ()


def test_d95_nearest_rank_on_hundred_points():
    errs = [i / 100.0 for i in range(1, 101)]
    assert nearest_rank(errs) == pytest.approx(0.95, abs=0)
    m = summarize([_v(Verdict.SUCCESS if e <= 0.3 else Verdict.FAILURE, e) for e in errs])
    assert m.d95_3d == 0.95


def test_d95_absent_without_fixes():
    m = summarize([_v(Verdict.UNDECIDED)] * 3)
    assert m.d95_3d is None and m.d95_h is None and m.d95_v is None
    assert "absent" in table_text([("S1", m)])


def test_summary_rejects_empty_run():
    with pytest.raises(ValueError):
        summarize([])
    with pytest.raises(ValueError):
        nearest_rank([])


def test_gaps_and_cdf():
    seq = "SUUSFUUUS"
    vs = [_v({"S": Verdict.SUCCESS, "F": Verdict.FAILURE, "U": Verdict.UNDECIDED}[c]) for c in seq]
    assert availability_gaps(vs, 5.0) == [0.4, 0.6]
    assert empirical_cdf([0.4, 0.6, 0.4]) == ((0.4, 2 / 3), (0.6, 1.0))


verdicts = st.lists(st.tuples(st.sampled_from(list(Verdict)), st.floats(0, 10)), min_size=1, max_size=200)


@given(verdicts)
def test_probability_identities_are_exact(vs):
    m = summarize([_v(v, e, k) for k, (v, e) in enumerate(vs)])
    assert m.p_v == m.p_s + m.p_f
    assert m.p_u == 1.0 - m.p_v
    for p in (m.p_v, m.p_s, m.p_f, m.p_u):
        assert 0.0 <= p <= 1.0


@given(verdicts)
def test_gap_lengths_plus_fixed_count_is_total(vs):
    vv = [_v(v, e, k) for k, (v, e) in enumerate(vs)]
    gaps = availability_gaps(vv, 5.0)
    n_fixed = sum(v.verdict != Verdict.UNDECIDED for v in vv)
    assert math.isclose(sum(gaps) * 5.0 + n_fixed, len(vv), abs_tol=1e-9)


@given(verdicts, st.randoms(use_true_random=False))
def test_d95_is_permutation_invariant(vs, rnd):
    vv = [_v(v, e, k) for k, (v, e) in enumerate(vs)]
    shuffled = vv[:]
    rnd.shuffle(shuffled)
    assert summarize(vv).d95_3d == summarize(shuffled).d95_3d


def test_table_layout():
    m = summarize([_v(Verdict.SUCCESS, 0.02), _v(Verdict.UNDECIDED)])
    lines = table_text([("S1", m)]).splitlines()
    assert lines[0] == "scenario,P_V,P_S,P_F,d95_3d,d95_h,d95_v"
    assert lines[1] == "S1,0.5000,0.5000,0.0000,0.020,0.020,0.000"
