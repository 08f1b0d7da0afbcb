import logging
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from kgpool.graph import EntityMention, SentenceInstance, hig_layout
from kgpool.metrics import (ContingencyTable, PredictionRecord, degree_stats, mcnemar, micro_prf,
                            pr_curve, precision_at_k_recall, rank, read_curve, records_from_probs,
                            write_curve)
from kgpool.pooling import ContextPooler, forward_context_pooling

import oracles
from helpers import random_hig

# frozen from tests/oracles.py (50-digit mpmath)
TABLE_ROWS = [
    ((160916, 4702, 3169, 3613), 298.1862533350273, -66.08707038913163),
    ((617266, 38652, 29255, 55593), 1300.084173943776, -283.9650704621942),
]


def rec(gold, pred, conf=0.5, i=None):
    return PredictionRecord(i, gold, pred, conf)


def ranked(flags):
    """Records in descending confidence; hits are gold positives, misses are NA-gold false positives."""
    n = len(flags)
    return [rec("r1" if ok else "NA", "r1", 1.0 - k / (n + 1)) for k, ok in enumerate(flags)]


def test_prf_examples(caplog):
    assert micro_prf([rec("r1", "r1"), rec("r2", "r2")]) == (1.0, 1.0, 1.0)
    assert micro_prf([rec("r1", "r1"), rec("r1", "r2")]) == (0.5, 0.5, 0.5)
    with caplog.at_level(logging.WARNING):
        assert micro_prf([rec("NA", "NA"), rec("NA", "NA")]) == (0.0, 0.0, 0.0)
    assert "undefined" in caplog.text


def test_na_gold_with_positive_prediction_is_false_positive():
    p, r, _ = micro_prf([rec("NA", "r1"), rec("r1", "r1")])
    assert (p, r) == (0.5, 1.0)


def test_prf_relation_subset():
    preds = [rec("r1", "r1"), rec("r2", "r1"), rec("r2", "r2")]
    assert micro_prf(preds, relations=["r2"]) == (1.0, 0.5, pytest.approx(2 / 3))


labels = st.sampled_from(["NA", "r1", "r2", "r3"])


@given(st.lists(st.tuples(labels, labels), min_size=1, max_size=30), st.randoms())
def test_prf_permutation_invariant_and_matches_oracle(pairs, rnd):
    preds = [rec(g, p) for g, p in pairs]
    shuffled = preds[:]
    rnd.shuffle(shuffled)
    assert micro_prf(preds, warn=False) == micro_prf(shuffled, warn=False)
    expected = oracles.micro_prf([g for g, _ in pairs], [p for _, p in pairs])
    assert micro_prf(preds, warn=False) == pytest.approx(tuple(float(x) for x in expected), abs=1e-12)


def test_records_from_probs_ignores_na():
    probs = np.array([[0.9, 0.06, 0.04], [0.2, 0.3, 0.5]])
    recs = records_from_probs(probs, [0, 2], ["NA", "r1", "r2"], ids=["x", "y"])
    assert [(r.predicted, r.confidence) for r in recs] == [("r1", 0.06), ("r2", 0.5)]
    assert recs[1].correct and not recs[0].correct


def test_confidence_range_checked():
    with pytest.raises(ValueError):
        PredictionRecord(None, "r1", "r1", 1.5)


def test_precision_at_k_examples():
    assert precision_at_k_recall(ranked([True] * 10), 30) == 1.0
    assert precision_at_k_recall(ranked([True, False, True, True, False]), 100) == 0.75
    with pytest.raises(ValueError):
        precision_at_k_recall(ranked([True]), 0)


def test_precision_at_k_unreached_is_flagged(caplog):
    preds = ranked([True, False]) + [rec("r1", "NA")]
    with caplog.at_level(logging.WARNING):
        assert precision_at_k_recall(preds, 100, return_flag=True) == (0.5, False)
    assert "never reached" in caplog.text
    assert precision_at_k_recall(preds, 50, return_flag=True) == (1.0, True)


def _stop_rank(preds, k):
    target = k / 100
    return next(i for i, (r, _) in enumerate(pr_curve(preds)) if r >= target - 1e-12)


@given(st.lists(st.booleans(), min_size=1, max_size=40).filter(any), st.integers(0, 5))
def test_precision_at_k_traversal(flags, missed):
    # ``missed`` gold positives are predicted NA and never reach the ranking
    preds = ranked(flags) + [rec("r1", "NA")] * missed
    curve = pr_curve(preds)
    trace = oracles.precision_trace(flags, sum(flags) + missed)
    assert curve == pytest.approx([(float(r), float(p)) for r, p in trace])
    p100, reached = precision_at_k_recall(preds, 100, return_flag=True)
    if not reached or flags[-1]:
        assert p100 == curve[-1][1]
    if curve[-1][0] >= 0.3 - 1e-12:
        assert _stop_rank(preds, 10) <= _stop_rank(preds, 30)
        assert precision_at_k_recall(preds, 30) == pytest.approx(float(trace[_stop_rank(preds, 30)][1]))


def test_precision_at_k_100_equals_last_curve_point():
    preds = ranked([True, False, True, True])
    assert precision_at_k_recall(preds, 100) == pr_curve(preds)[-1][1] == 0.75


def test_p10_above_p30_is_not_general():
    # the traversal stops earlier for smaller K, but precision itself can rise
    preds = ranked([False] + [True] * 9)
    assert precision_at_k_recall(preds, 10) == 0.5
    assert precision_at_k_recall(preds, 30) == 0.75


def test_pr_curve_traces():
    assert [p for _, p in pr_curve(ranked([True] * 6))] == [1.0] * 6
    curve = pr_curve(ranked([False, True, True, True, True]))
    assert [p for _, p in curve] == pytest.approx([float(p) for _, p in oracles.precision_trace(
        [False, True, True, True, True], 4)])
    assert [p for _, p in curve] == pytest.approx([0, 1 / 2, 2 / 3, 3 / 4, 4 / 5])
    recalls = [r for r, _ in curve]
    assert recalls == sorted(recalls)


def test_rank_is_stable_and_drops_na():
    preds = [rec("r1", "r1", 0.5, "a"), rec("r1", "NA", 0.9, "b"), rec("r1", "r1", 0.5, "c"),
             rec("r1", "r1", 0.7, "d")]
    assert [r.instance_id for r in rank(preds)] == ["d", "a", "c"]


@given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), max_size=20))
def test_curve_csv_round_trip(tmp_path_factory, points):
    path = tmp_path_factory.mktemp("curve") / "c.csv"
    write_curve(path, points)
    assert read_curve(path) == points


def test_curve_reader_checks_header(tmp_path):
    (tmp_path / "c.csv").write_text("a,b\n")
    with pytest.raises(ValueError):
        read_curve(tmp_path / "c.csv")


@pytest.mark.parametrize("cells,stat,log10p", TABLE_ROWS)
def test_mcnemar_table_rows(cells, stat, log10p):
    res = mcnemar(ContingencyTable(*cells))
    assert res.statistic == pytest.approx(stat, abs=1e-9)
    assert res.log10_p == pytest.approx(log10p, abs=1e-9)
    assert res.significant()


def test_mcnemar_agrees_with_oracle():
    for b, c in [(10, 10), (1, 1), (0, 7), (120, 80), (4702, 3169)]:
        stat, log10p = oracles.mcnemar(b, c)
        res = mcnemar(ContingencyTable(0, b, c, 0))
        assert res.statistic == pytest.approx(stat, abs=1e-9)
        assert res.log10_p == pytest.approx(log10p, abs=1e-9)


def test_mcnemar_small_cases():
    assert mcnemar(ContingencyTable(5, 10, 10, 5)).statistic == pytest.approx(0.05)
    res = mcnemar(ContingencyTable(0, 1, 1, 0))
    assert res.statistic == 0.5 and not res.significant()
    assert res.p_value == pytest.approx(0.47950012218695, rel=1e-12)
    with pytest.raises(ValueError):
        mcnemar(ContingencyTable(3, 0, 0, 3))
    with pytest.raises(ValueError):
        ContingencyTable(-1, 0, 0, 0)


def test_contingency_from_predictions():
    a = [rec("r1", "r1"), rec("r1", "r1"), rec("r1", "r2"), rec("r1", "r2")]
    b = [rec("r1", "r1"), rec("r1", "r2"), rec("r1", "r1"), rec("r1", "r2")]
    assert ContingencyTable.from_predictions(a, b) == ContingencyTable(1, 1, 1, 1)


def test_degree_stats_cases():
    hig = random_hig(0, 3, 2)
    pooler = ContextPooler(4, 5, 3, (3,), np.random.default_rng(0))
    keep_all = forward_context_pooling(hig, pooler, 1e9)
    deg_h, deg_c = degree_stats([(hig, keep_all)])
    assert deg_h == deg_c == 3.5  # head: sentence + 3 attrs, tail: sentence + 2
    bare = hig_layout(SentenceInstance(["a", "b"], EntityMention("H", (0, 1)), EntityMention("T", (1, 2))),
                      (None, None))
    assert bare.adjacency[1].sum() == bare.adjacency[2].sum() == 1
    with pytest.raises(ValueError):
        degree_stats([])


@given(st.integers(0, 10_000), st.integers(0, 4), st.integers(0, 4))
def test_degree_alpha_one_below_alpha_four(seed, nh, nt):
    hig = random_hig(seed, nh, nt)
    pooler = ContextPooler(4, 5, 3, (3,), np.random.default_rng(seed))
    d1 = degree_stats([(hig, forward_context_pooling(hig, pooler, 1.0))])
    d4 = degree_stats([(hig, forward_context_pooling(hig, pooler, 4.0))])
    assert d1[0] == d4[0] and d1[1] <= d4[1] <= d4[0]
    assert not math.isnan(d1[1])
