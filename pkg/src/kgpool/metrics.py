"""Relation-extraction metrics and significance testing.

At test time the NA probability is ignored: each instance predicts the most
probable non-NA relation, with that probability as its ranking confidence.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.special import log_ndtr

from kgpool.graph import NA

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PredictionRecord:
    instance_id: str | None
    gold: str
    predicted: str
    confidence: float

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")

    @property
    def correct(self) -> bool:
        return self.predicted == self.gold and self.gold != NA


def records_from_probs(probs: np.ndarray, gold: Sequence[int], relations: Sequence[str],
                       ids: Sequence | None = None) -> list[PredictionRecord]:
    probs = np.asarray(probs, dtype=np.float64)
    relations = list(relations)
    masked = probs.copy()
    if NA in relations:
        masked[:, relations.index(NA)] = -np.inf
    pred = masked.argmax(axis=1)
    ids = [None] * len(probs) if ids is None else list(ids)
    return [PredictionRecord(ids[i], relations[int(gold[i])], relations[int(pred[i])],
                             float(min(1.0, max(0.0, probs[i, pred[i]]))))
            for i in range(len(probs))]


def micro_prf(preds: Iterable[PredictionRecord], warn: bool = True,
              relations: Iterable[str] | None = None) -> tuple[float, float, float]:
    """Micro precision, recall and F1 over non-NA relations.

    ``relations`` restricts the positive classes to a subset.
    """
    keep = None if relations is None else set(relations) - {NA}
    tp = fp = fn = 0
    for r in preds:
        pred_pos = r.predicted != NA and (keep is None or r.predicted in keep)
        gold_pos = r.gold != NA and (keep is None or r.gold in keep)
        if pred_pos:
            if r.predicted == r.gold:
                tp += 1
            else:
                fp += 1
        if gold_pos and r.predicted != r.gold:
            fn += 1
    if tp + fp == 0 or tp + fn == 0:
        if warn:
            log.warning("micro P/R undefined (tp=%d fp=%d fn=%d); reporting 0", tp, fp, fn)
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f1


def rank(preds: Sequence[PredictionRecord]) -> list[PredictionRecord]:
    """Non-NA predictions by descending confidence; ties keep input order."""
    kept = [r for r in preds if r.predicted != NA]
    return sorted(kept, key=lambda r: -r.confidence)


def pr_curve(preds: Sequence[PredictionRecord]) -> list[tuple[float, float]]:
    """``(recall, precision)`` after each rank position."""
    ranked = rank(preds)
    positives = sum(1 for r in preds if r.gold != NA)
    points = []
    tp = 0
    for k, r in enumerate(ranked, start=1):
        tp += r.correct
        points.append((tp / positives if positives else 0.0, tp / k))
    return points


def precision_at_k_recall(preds: Sequence[PredictionRecord], k_percent: float,
                          return_flag: bool = False):
    """Precision at the first rank where recall reaches ``k_percent``.

    If that recall is never reached the precision at the end of the list is
    returned; with ``return_flag`` the result is ``(precision, reached)``.
    """
    if not 0 < k_percent <= 100:
        raise ValueError("k_percent must lie in (0, 100]")
    ranked = rank(preds)
    positives = sum(1 for r in preds if r.gold != NA)
    target = k_percent / 100.0
    tp = 0
    precision, reached = 0.0, False
    for k, r in enumerate(ranked, start=1):
        tp += r.correct
        precision = tp / k
        if positives and tp / positives >= target - 1e-12:
            reached = True
            break
    if not reached:
        log.warning("recall %.1f%% never reached; reporting precision at end of list", k_percent)
    return (precision, reached) if return_flag else precision


def write_curve(path: str | Path, points: Sequence[tuple[float, float]]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["recall", "precision"])
        for rec, prec in points:
            w.writerow([repr(float(rec)), repr(float(prec))])


def read_curve(path: str | Path) -> list[tuple[float, float]]:
    with Path(path).open(encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != ["recall", "precision"]:
            raise ValueError(f"unexpected curve header {header}")
        return [(float(a), float(b)) for a, b in reader]


# ----------------------------------------------------------------- McNemar


@dataclass(frozen=True)
class ContingencyTable:
    a: int  # both correct
    b: int  # first correct, second wrong
    c: int  # first wrong, second correct
    d: int  # both wrong

    def __post_init__(self):
        if min(self.a, self.b, self.c, self.d) < 0:
            raise ValueError("contingency counts must be non-negative")

    @classmethod
    def from_predictions(cls, first: Sequence[PredictionRecord], second: Sequence[PredictionRecord]):
        if len(first) != len(second):
            raise ValueError("prediction lists differ in length")
        a = b = c = d = 0
        for x, y in zip(first, second):
            cx, cy = x.predicted == x.gold, y.predicted == y.gold
            if cx and cy:
                a += 1
            elif cx:
                b += 1
            elif cy:
                c += 1
            else:
                d += 1
        return cls(a, b, c, d)


@dataclass(frozen=True)
class McNemarResult:
    statistic: float
    p_value: float
    log10_p: float

    def significant(self, level: float = 0.05) -> bool:
        return self.p_value < level


def mcnemar(table: ContingencyTable) -> McNemarResult:
    """Continuity-corrected McNemar chi-square test with one degree of freedom.

    The survival function ``erfc(sqrt(x / 2)) = 2 * Phi(-sqrt(x))`` is taken
    in log space so very small p-values keep their exponent.
    """
    n = table.b + table.c
    if n == 0:
        raise ValueError("McNemar statistic undefined when b + c = 0")
    stat = (abs(table.b - table.c) - 1) ** 2 / n
    log_p = math.log(2.0) + float(log_ndtr(-math.sqrt(stat)))
    log_p = min(log_p, 0.0)
    return McNemarResult(stat, math.exp(log_p), log_p / math.log(10.0))


# ----------------------------------------------------------------- degrees


def degree_stats(graphs) -> tuple[float, float]:
    """Mean entity-node degree in the input graphs and in the pooled graphs.

    ``graphs`` yields ``(hig, context_graph)`` pairs; each contributes its two
    entity nodes.
    """
    hig_deg, cg_deg = [], []
    for hig, cg in graphs:
        hig_deg.extend(hig.entity_degrees())
        cg_deg.extend(cg.entity_degrees())
    if not hig_deg:
        raise ValueError("degree_stats needs at least one graph")
    return float(np.mean(hig_deg)), float(np.mean(cg_deg))
