"""Mini-batch training with Adam and categorical cross-entropy."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from kgpool.config import Config
from kgpool.encoder import Vocabulary
from kgpool.graph import NA, SentenceInstance
from kgpool.metrics import micro_prf, records_from_probs
from kgpool.model import AttributeStore, KGPoolModel, attributes_for
from kgpool.tensor import Tape, Tensor, nll

log = logging.getLogger(__name__)

METRIC_FIELDS = ("epoch", "split", "P", "R", "F1", "loss")


def loss(probs, gold) -> float:
    """Cross-entropy ``-log p[gold]`` of one distribution, clamped at 1e-12."""
    p = np.asarray(probs, dtype=np.float64).reshape(-1)
    if not 0 <= gold < p.size:
        raise IndexError(f"gold label {gold} out of range for {p.size} classes")
    return float(-math.log(max(p[gold], 1e-12)))


class AdamState:
    def __init__(self, params: Mapping[str, Tensor]):
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}


def adam_step(params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray | None], state: AdamState,
              config: Config) -> None:
    """Bias-corrected Adam update, in place. Missing gradients count as zero."""
    for name, g in grads.items():
        if g is not None and not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
    state.t += 1
    b1, b2, lr, eps = config.beta1, config.beta2, config.learning_rate, config.epsilon
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        g = grads.get(name)
        m, v = state.m[name], state.v[name]
        m *= b1
        v *= b2
        if g is not None:
            m += (1.0 - b1) * g
            v += (1.0 - b2) * (g * g)
        p.data -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


def clip_gradients(grads: dict[str, np.ndarray | None], max_norm: float) -> float:
    total = math.sqrt(sum(float((g * g).sum()) for g in grads.values() if g is not None))
    if total > max_norm:
        factor = max_norm / (total + 1e-12)
        for g in grads.values():
            if g is not None:
                g *= factor
    return total


def batch_loss(model: KGPoolModel, batch: Sequence[SentenceInstance], store: AttributeStore | None,
               rng=None, frozen=None):
    res = model.forward(batch, [attributes_for(i, store) for i in batch], rng=rng, frozen=frozen)
    return nll(res.probs, model.gold_indices(batch)), res


def evaluate(model: KGPoolModel, instances: Sequence[SentenceInstance], store: AttributeStore | None,
             alpha: float | None = None):
    """``(P, R, F1, mean loss, records)`` without dropout."""
    probs, _, _ = model.predict(instances, store, alpha=alpha)
    gold = model.gold_indices(instances)
    records = records_from_probs(probs, gold, model.relations, [i.id for i in instances])
    p, r, f1 = micro_prf(records)
    rows = np.arange(len(gold))
    mean_loss = float(-np.log(np.maximum(probs[rows, gold], 1e-12)).mean()) if len(gold) else float("nan")
    return p, r, f1, mean_loss, records


@dataclass
class TrainResult:
    model: KGPoolModel
    metrics: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    skipped: list = field(default_factory=list)
    batch_losses: list[float] = field(default_factory=list)


def check_instances(instances, store, relations):
    """Split off instances whose relation is unknown or whose entities are not in the store.

    A ``None`` store means "no KG context" and skips nothing.
    """
    rel = set(relations)
    keep, skipped = [], []
    for inst in instances:
        if inst.relation not in rel:
            skipped.append({"instance": inst.id, "reason": f"unknown relation {inst.relation!r}"})
            continue
        if store is not None:
            missing = [m.kg_id for m in (inst.head, inst.tail) if m.kg_id not in store]
            if missing:
                skipped.append({"instance": inst.id,
                                "reason": f"entities missing from attribute store: {', '.join(missing)}"})
                continue
        keep.append(inst)
    for s in skipped:
        log.warning("skipping instance %s: %s", s["instance"], s["reason"])
    return keep, skipped


def train(dataset: Sequence[SentenceInstance], attr_store: AttributeStore | None, config: Config,
          vocab: Vocabulary, relations: Sequence[str], valid: Sequence[SentenceInstance] = (),
          model: KGPoolModel | None = None, progress=None) -> TrainResult:
    """Train for ``config.max_epochs`` epochs and keep the best validation epoch."""
    config.check()
    relations = list(relations)
    if NA not in relations:
        relations.append(NA)
    data, skipped = check_instances(dataset, attr_store, relations)
    if not data:
        raise ValueError("training set is empty")
    valid, vskipped = check_instances(valid, attr_store, relations)
    skipped += vskipped
    if model is None:
        model = KGPoolModel(config, vocab, relations)
    params = model.parameters()
    state = AdamState(params)
    rng = np.random.default_rng(config.seed + 1)
    result = TrainResult(model, skipped=skipped)
    best_f1, best_state = -1.0, None
    if not valid:
        log.warning("empty validation set: the final epoch is kept")

    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(data))
        losses, probs_all, gold_all = [], [], []
        for lo in range(0, len(order), config.batch_size):
            batch = [data[i] for i in order[lo:lo + config.batch_size]]
            for p in params.values():
                p.grad = None
            with Tape() as tape:
                value, res = batch_loss(model, batch, attr_store, rng=rng)
                tape.backward(value)
            grads = {k: p.grad for k, p in params.items()}
            if config.grad_clip is not None:
                clip_gradients(grads, config.grad_clip)
            adam_step(params, grads, state, config)
            if not math.isfinite(value.item()):
                raise FloatingPointError(f"non-finite loss at epoch {epoch}")
            losses.append(value.item())
            probs_all.append(res.probs.data)
            gold_all.append(model.gold_indices(batch))
        result.batch_losses.extend(losses)
        recs = records_from_probs(np.vstack(probs_all), np.concatenate(gold_all), model.relations)
        tp, tr, tf = micro_prf(recs, warn=False)
        train_loss = float(np.mean(losses))
        result.metrics.append({"epoch": epoch, "split": "train", "P": tp, "R": tr, "F1": tf,
                               "loss": train_loss})
        line = f"epoch {epoch}: train loss {train_loss:.4f} F1 {tf:.4f}"
        if valid:
            vp, vr, vf, vl, _ = evaluate(model, valid, attr_store)
            result.metrics.append({"epoch": epoch, "split": "valid", "P": vp, "R": vr, "F1": vf, "loss": vl})
            line += f" | valid loss {vl:.4f} F1 {vf:.4f}"
            if vf > best_f1:
                best_f1, best_state, result.best_epoch = vf, model.state_dict(), epoch
        log.info(line)
        if progress is not None:
            progress(line)
    if best_state is not None:
        model.load_state_dict(best_state)
    else:
        result.best_epoch = config.max_epochs
    return result


def write_metrics(path: str | Path, rows: Sequence[dict]) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRIC_FIELDS)
        for r in rows:
            w.writerow([r["epoch"], r["split"]] + [repr(float(r[k])) for k in ("P", "R", "F1", "loss")])


def read_metrics(path: str | Path) -> list[dict]:
    with Path(path).open(encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    return [{"epoch": int(r["epoch"]), "split": r["split"],
             **{k: float(r[k]) for k in ("P", "R", "F1", "loss")}} for r in rows]
