import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from iimloc.evalx import (MatchReport, counting_errors, format_report, localization_scores,
                          match_instances, metrics_report, write_report)
from oracles import max_matches


def test_single_match_and_radius_edge():
    r = match_instances([(0, 0)], [(3, 4)], [5.0])
    assert (r.tp, r.fp, r.fn) == (1, 0, 0)
    r = match_instances([(0, 0)], [(3, 4)], [4.99])
    assert (r.tp, r.fp, r.fn) == (0, 1, 1)


def test_greedy_would_lose_a_match():
    # p0 is nearest to g0 but p1 can only reach g0
    preds = [(1.0, 0.0), (-2.0, 0.0)]
    gts = [(0.0, 0.0), (4.0, 0.0)]
    r = match_instances(preds, gts, [2.5, 3.5])
    assert r.tp == 2


def test_tie_break_prefers_shorter_total():
    r = match_instances([(0, 0), (10, 0)], [(1, 0), (9, 0)], [20.0, 20.0])
    assert r.tp == 2
    assert sorted((p, g) for p, g, _ in r.pairs) == [(0, 0), (1, 1)]


def test_empty_sides():
    assert (lambda r: (r.tp, r.fp, r.fn))(match_instances([], [(1, 1)], [2])) == (0, 0, 1)
    assert (lambda r: (r.tp, r.fp, r.fn))(match_instances([(1, 1)], [], [])) == (0, 1, 0)


def test_bad_sigmas():
    with pytest.raises(ValueError):
        match_instances([(0, 0)], [(0, 0)], [0.0])
    with pytest.raises(ValueError):
        match_instances([(0, 0)], [(0, 0)], [1.0, 2.0])


def test_hand_example_scores():
    s = localization_scores([MatchReport(3, 1, 2)])
    assert s["Pre"] == 0.75 and s["Rec"] == 0.6
    assert s["F1m"] == pytest.approx(2 / 3, abs=1e-15)


def test_micro_average():
    s = localization_scores([MatchReport(1, 0, 0), MatchReport(0, 1, 3)])
    assert (s["TP"], s["FP"], s["FN"]) == (1, 1, 3)
    assert s["Pre"] == 0.5 and s["Rec"] == 0.25


def test_no_predictions_scores_zero():
    s = localization_scores([MatchReport(0, 0, 4)])
    assert s["Pre"] == 0.0 and s["Rec"] == 0.0 and s["F1m"] == 0.0


def test_counting_errors():
    c = counting_errors([(10, 8), (3, 5), (2, 0)])
    assert c.mae == pytest.approx(2.0)
    assert c.mse == pytest.approx(2.0)
    assert c.nae == pytest.approx((2 / 8 + 2 / 5) / 2)
    assert counting_errors([(1, 0)]).nae == 0.0


def test_report_io(tmp_path):
    m = metrics_report([MatchReport(3, 1, 2)], [(4, 5)])
    assert m["MAE"] == 1.0 and m["images"] == 1
    assert "66.67" in format_report(m)
    write_report(m, tmp_path / "m.json")
    import json
    assert json.loads((tmp_path / "m.json").read_text())["TP"] == 3


@st.composite
def matching_case(draw):
    n_p = draw(st.integers(0, 6))
    n_g = draw(st.integers(0, 6))
    coord = st.floats(0, 20, allow_nan=False)
    preds = [(draw(coord), draw(coord)) for _ in range(n_p)]
    gts = [(draw(coord), draw(coord)) for _ in range(n_g)]
    sig = [draw(st.floats(0.5, 8.0)) for _ in range(n_g)]
    return preds, gts, sig


@settings(max_examples=300, deadline=None)
@given(matching_case())
def test_matching_is_maximum(case):
    preds, gts, sig = case
    r = match_instances(preds, gts, sig)
    assert r.tp == max_matches(preds, gts, sig)
    assert r.tp + r.fp == len(preds) and r.tp + r.fn == len(gts)
    for p, g, d in r.pairs:
        assert d <= sig[g]


@settings(max_examples=100, deadline=None)
@given(matching_case(), st.randoms())
def test_permutation_invariance(case, rnd):
    preds, gts, sig = case
    order = list(range(len(gts)))
    rnd.shuffle(order)
    p2 = list(preds)
    rnd.shuffle(p2)
    r1 = match_instances(preds, gts, sig)
    r2 = match_instances(p2, [gts[i] for i in order], [sig[i] for i in order])
    assert r1.tp == r2.tp
