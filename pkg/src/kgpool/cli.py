"""Command-line entry point: ``kgpool <command> ...``.

Commands: train, eval, pool-inspect, stats, mcnemar, synth. Set
``KGPOOL_LOG_LEVEL`` (DEBUG, INFO, WARNING, ...) to change log verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path
from typing import Sequence

import numpy as np

from kgpool import kernels
from kgpool.config import Config
from kgpool.data import (file_digest, load_attribute_store, load_dataset, load_relations,
                         synth_corpus)
from kgpool.encoder import load_embeddings
from kgpool.errors import CompatibilityError, ConfigError, KGPoolError
from kgpool.graph import NA, hig_layout
from kgpool.metrics import (ContingencyTable, degree_stats, mcnemar, micro_prf, pr_curve,
                            precision_at_k_recall, records_from_probs, write_curve)
from kgpool.model import load_checkpoint, save_checkpoint
from kgpool.train import check_instances, train, write_metrics

log = logging.getLogger("kgpool")

EXIT_USAGE = 2
EXIT_FAILURE = 1


def _setup_logging() -> None:
    level = os.environ.get("KGPOOL_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _out(text: str = "") -> None:
    sys.stdout.write(text + "\n")


def _fail(errors: Sequence[str], code: int = EXIT_USAGE) -> int:
    for e in errors:
        sys.stderr.write(f"error: {e}\n")
    return code


def _parse_floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _checked_paths(pairs) -> list[str]:
    return [f"{what} not found: {p}" for what, p in pairs if p is not None and not Path(p).exists()]


# -------------------------------------------------------------------- train


def _train_inputs(args):
    """Config plus every input-path problem, collected before failing."""
    errors = _checked_paths([
        ("config file", args.config), ("training set", args.train), ("validation set", args.valid),
        ("test set", args.test), ("attribute store", args.attributes),
        ("relation vocabulary", args.relations), ("embedding file", args.embeddings),
    ])
    config = None
    overrides = {"context_coefficient": args.alpha, "seed": args.seed, "max_epochs": args.epochs}
    try:
        if args.config is not None and Path(args.config).exists():
            config = Config.from_file(args.config, **overrides)
        elif args.config is None:
            config = Config.from_dict({k: v for k, v in overrides.items() if v is not None})
    except ConfigError as exc:
        errors.extend(str(exc).replace("invalid config:\n  ", "").split("\n  "))
    if config is not None:
        errors.extend(config.validate())
    return config, errors


def cmd_train(args) -> int:
    config, errors = _train_inputs(args)
    if errors:
        return _fail(errors)
    vocab = load_embeddings(args.embeddings, config.word_dim)
    relations = load_relations(args.relations)
    store = None if args.no_attributes else load_attribute_store(args.attributes)
    train_set = load_dataset(args.train, relations)
    valid_set = load_dataset(args.valid, relations) if args.valid else []
    test_set = load_dataset(args.test, relations) if args.test else []

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    inputs = {"train": args.train, "valid": args.valid, "test": args.test,
              "attributes": None if args.no_attributes else args.attributes,
              "relations": args.relations, "embeddings": args.embeddings}
    hashes = {k: file_digest(p) for k, p in inputs.items() if p is not None}

    alphas = args.alpha_sweep or [config.context_coefficient]
    if args.alpha_sweep and not (test_set or valid_set):
        return _fail(["--alpha-sweep needs --test or --valid to compare runs"])
    if args.runs < 1:
        return _fail(["--runs must be >= 1"])
    runs = []
    for alpha in alphas:
        for k in range(args.runs):
            # extra runs reseed and go to run-<k>/; run 0 is the one used for curves
            cfg = config.replace(context_coefficient=alpha, seed=config.seed + k)
            run_dir = out_dir / f"alpha-{alpha:g}" if args.alpha_sweep else out_dir
            if args.runs > 1:
                run_dir = run_dir / f"run-{k}"
            row = _train_one(args, cfg, run_dir, inputs, hashes, vocab, relations, store,
                             train_set, valid_set, test_set)
            runs.append({"alpha": alpha, "run": k, "curve_run": k == 0, **row})
    cols = ["alpha", "run", "P", "R", "F1", "P@10", "P@30", "DEG(HIG)", "DEG(CG)"]
    if args.alpha_sweep or args.runs > 1:
        if args.runs == 1:
            cols.remove("run")
        _out(_table(runs, cols))
        name = "sweep.json" if args.alpha_sweep else "runs.json"
        (out_dir / name).write_text(json.dumps(runs, indent=1) + "\n", encoding="utf-8")
    return 0


def _train_one(args, cfg, run_dir, inputs, hashes, vocab, relations, store, train_set, valid_set,
               test_set) -> dict:
    run_dir.mkdir(parents=True, exist_ok=True)
    paths = {"checkpoint": run_dir / "checkpoint.kgp", "metrics": run_dir / "metrics.csv",
             "manifest": run_dir / "manifest.json"}
    manifest = {
        "command": ["kgpool", *args.argv],
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "inputs": {k: str(p) for k, p in inputs.items() if p is not None},
        "hashes": hashes,
        "outputs": {k: str(p) for k, p in paths.items()},
        "backend": kernels.BACKEND,
        "started": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
    }
    paths["manifest"].write_text(json.dumps(manifest, indent=1) + "\n", encoding="utf-8")
    res = train(train_set, store, cfg, vocab.copy(), relations, valid=valid_set,
                progress=None if args.quiet else (lambda line: sys.stderr.write(line + "\n")))
    save_checkpoint(paths["checkpoint"], res.model, {"hashes": hashes, "best_epoch": res.best_epoch})
    write_metrics(paths["metrics"], res.metrics)
    if res.skipped:
        log.warning("%d instances skipped", len(res.skipped))
    row = {"seed": cfg.seed, "best_epoch": res.best_epoch}
    target = test_set or valid_set
    if target:
        kept, _ = check_instances(target, store, res.model.relations)
        probs, higs, cgs = res.model.predict(kept, store)
        recs = records_from_probs(probs, res.model.gold_indices(kept), res.model.relations,
                                  [i.id for i in kept])
        row.update(zip(("P", "R", "F1"), micro_prf(recs)))
        row["P@10"] = precision_at_k_recall(recs, 10)
        row["P@30"] = precision_at_k_recall(recs, 30)
        row["DEG(HIG)"], row["DEG(CG)"] = degree_stats(zip(higs, cgs))
    _out(f"wrote {paths['checkpoint']} (best epoch {res.best_epoch})")
    return row


def _table(rows, cols) -> str:
    def fmt(v):
        return f"{v:.4f}" if isinstance(v, float) else str(v)
    cells = [[fmt(r.get(c, "")) for c in cols] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(cols)]
    lines = ["  ".join(c.rjust(w) for c, w in zip(cols, widths))]
    lines += ["  ".join(v.rjust(w) for v, w in zip(row, widths)) for row in cells]
    return "\n".join(lines)


# --------------------------------------------------------------------- eval


def _load_for_eval(args):
    errors = _checked_paths([("checkpoint", args.checkpoint), ("dataset", args.data),
                             ("attribute store", args.attributes),
                             ("embedding file", getattr(args, "embeddings", None)),
                             ("relation vocabulary", getattr(args, "relations", None))])
    if errors:
        raise ConfigError("\n".join(errors))
    model, header = load_checkpoint(args.checkpoint)
    if getattr(args, "embeddings", None):
        vocab = load_embeddings(args.embeddings, model.config.word_dim)
        if vocab.digest() != header["vocab_hash"]:
            raise CompatibilityError(
                f"vocabulary of {args.embeddings} does not match the checkpoint "
                f"(hash {vocab.digest()[:12]} vs {header['vocab_hash'][:12]}); "
                "evaluate with the embedding file the model was trained on")
    if getattr(args, "relations", None):
        rels = load_relations(args.relations)
        if rels != model.relations:
            raise CompatibilityError(f"relation vocabulary {args.relations} differs from the checkpoint's")
    data = load_dataset(args.data)
    unknown = sorted({i.relation for i in data} - set(model.relations))
    if unknown:
        raise CompatibilityError(f"dataset uses relations unknown to the checkpoint: {', '.join(unknown)}")
    store = None if args.attributes is None else load_attribute_store(args.attributes)
    kept, skipped = check_instances(data, store, model.relations)
    return model, kept, store


def cmd_eval(args) -> int:
    model, data, store = _load_for_eval(args)
    probs, _, _ = model.predict(data, store, alpha=args.alpha)
    recs = records_from_probs(probs, model.gold_indices(data), model.relations, [i.id for i in data])
    p, r, f1 = micro_prf(recs)
    p10 = precision_at_k_recall(recs, 10)
    p30 = precision_at_k_recall(recs, 30)
    _out(f"instances {len(data)}")
    _out(f"P {p:.4f}  R {r:.4f}  F1 {f1:.4f}")
    _out(f"P@10 {p10:.4f}  P@30 {p30:.4f}")
    if args.curve:
        write_curve(args.curve, pr_curve(recs))
        _out(f"wrote {args.curve}")
    if args.json:
        Path(args.json).write_text(json.dumps({"P": p, "R": r, "F1": f1, "P@10": p10, "P@30": p30,
                                               "n": len(data)}, indent=1) + "\n", encoding="utf-8")
    return 0


# ------------------------------------------------------------- pool-inspect


def pooling_report(inst, hig, cg) -> dict:
    """Per-node scores and keep/drop flags for one instance, in HIG indices."""
    scores = [None] * hig.n
    blocks = []
    visible = np.arange(hig.n)
    for oc in cg.outcomes:
        orig = visible[oc.attr_positions]
        for pos, z in zip(orig, oc.z_score):
            scores[int(pos)] = float(z)
        blocks.append({"block": oc.block, "threshold": oc.threshold,
                       "kept": [int(i) for i in visible[oc.kept_idx]]})
        visible = visible[oc.kept_idx]
    kept = set(int(i) for i in cg.kept)
    nodes = [{"index": i, "role": hig.roles[i], "kind": hig.kinds[i], "text": " ".join(hig.texts[i]),
              "z_score": scores[i], "kept": i in kept} for i in range(hig.n)]
    thresholds = [b["threshold"] for b in blocks]
    return {"id": inst.id, "relation": inst.relation, "nodes": nodes,
            "threshold": thresholds[-1] if thresholds else None, "blocks": blocks,
            "degree_hig": list(hig.entity_degrees()), "degree_cg": list(cg.entity_degrees())}


def cmd_pool_inspect(args) -> int:
    model, data, store = _load_for_eval(args)
    alpha = model.config.context_coefficient if args.alpha is None else args.alpha
    _, higs, cgs = model.predict(data, store, alpha=alpha)
    out = open(args.out, "w", encoding="utf-8") if args.out else sys.stdout
    try:
        for inst, hig, cg in zip(data, higs, cgs):
            out.write(json.dumps(pooling_report(inst, hig, cg), ensure_ascii=False) + "\n")
    finally:
        if out is not sys.stdout:
            out.close()
    if higs:
        deg_hig, deg_cg = degree_stats(zip(higs, cgs))
        sys.stderr.write(f"alpha {alpha:g}  DEG(HIG) {deg_hig:.4f}  DEG(CG) {deg_cg:.4f}\n")
    return 0


# -------------------------------------------------------------------- stats


def cmd_stats(args) -> int:
    errors = _checked_paths([("dataset", args.data), ("attribute store", args.attributes),
                             ("checkpoint", args.checkpoint)])
    if errors:
        return _fail(errors)
    data = load_dataset(args.data)
    store = load_attribute_store(args.attributes) if args.attributes else None
    counts: dict[str, int] = {}
    for inst in data:
        counts[inst.relation] = counts.get(inst.relation, 0) + 1
    _out(f"instances {len(data)}")
    _out(f"relations {len(counts)}")
    for rel in sorted(counts):
        _out(f"  {rel:<12} {counts[rel]}")
    if store is None or not data:
        return 0
    if args.checkpoint:
        model, _ = load_checkpoint(args.checkpoint)
        kept, _ = check_instances(data, store, model.relations)
        _, higs, cgs = model.predict(kept, store, alpha=args.alpha)
        deg_hig, deg_cg = degree_stats(zip(higs, cgs))
        _out(f"DEG(HIG) {deg_hig:.4f}")
        _out(f"DEG(CG) {deg_cg:.4f}")
    else:
        config = Config()
        degs = []
        for inst in data:
            lay = hig_layout(inst, (store.get(inst.head.kg_id), store.get(inst.tail.kg_id)),
                             config.alias_mode, config.entity_edge, config.max_nodes, config.max_attr_tokens)
            deg = lay.adjacency.sum(axis=1)
            degs.extend([deg[1], deg[2]])
        _out(f"DEG(HIG) {float(np.mean(degs)):.4f}")
    return 0


# ------------------------------------------------------------------ mcnemar


def cmd_mcnemar(args) -> int:
    try:
        res = mcnemar(ContingencyTable(args.a, args.b, args.c, args.d))
    except ValueError as exc:
        return _fail([str(exc)])
    verdict = "significant" if res.significant(0.05) else "not significant"
    _out(f"statistic {res.statistic:.4f}")
    _out(f"p-value {res.p_value:.6g}")
    _out(f"log10(p) {res.log10_p:.4f}")
    _out(f"{verdict} at 0.05")
    return 0


# -------------------------------------------------------------------- synth


def cmd_synth(args) -> int:
    corpus = synth_corpus(args.n_train, args.n_test, args.n_relations, args.seed, n_valid=args.n_valid)
    paths = corpus.write(args.out_dir, word_dim=args.word_dim, seed=args.seed)
    for k, p in paths.items():
        _out(f"{k:<11} {p}")
    return 0


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kgpool", description="Relation extraction with KG context pooling.")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a model")
    t.add_argument("--config", help="key = value config file")
    t.add_argument("--train", required=True)
    t.add_argument("--valid")
    t.add_argument("--test", help="evaluated after training (used by --alpha-sweep)")
    t.add_argument("--attributes", required=True)
    t.add_argument("--relations", required=True)
    t.add_argument("--embeddings", required=True, help="word-vector text file")
    t.add_argument("--out-dir", required=True)
    t.add_argument("--alpha", type=float, help="context coefficient, overrides the config file")
    t.add_argument("--alpha-sweep", type=_parse_floats, help="comma-separated coefficients, e.g. 1,2,3,4")
    t.add_argument("--seed", type=int)
    t.add_argument("--epochs", type=int, help="overrides max_epochs")
    t.add_argument("--runs", type=int, default=1, help="independent runs with seeds seed, seed+1, ...")
    t.add_argument("--no-attributes", action="store_true", help="train without KG context")
    t.add_argument("--quiet", action="store_true")
    t.set_defaults(func=cmd_train)

    def eval_args(q, alpha_help="override the checkpoint's context coefficient"):
        q.add_argument("--checkpoint", required=True)
        q.add_argument("--data", required=True)
        q.add_argument("--attributes", help="omit to evaluate without KG context")
        q.add_argument("--embeddings", help="check this embedding file against the checkpoint")
        q.add_argument("--relations", help="check this relation vocabulary against the checkpoint")
        q.add_argument("--alpha", type=float, help=alpha_help)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    eval_args(e)
    e.add_argument("--curve", help="write the precision-recall curve CSV here")
    e.add_argument("--json", help="write the metrics as JSON here")
    e.set_defaults(func=cmd_eval)

    i = sub.add_parser("pool-inspect", help="per-instance pooling decisions")
    eval_args(i)
    i.add_argument("--out", help="JSONL report path (default stdout)")
    i.set_defaults(func=cmd_pool_inspect)

    s = sub.add_parser("stats", help="dataset and graph statistics")
    s.add_argument("--data", required=True)
    s.add_argument("--attributes")
    s.add_argument("--checkpoint", help="also report degrees after pooling")
    s.add_argument("--alpha", type=float)
    s.set_defaults(func=cmd_stats)

    m = sub.add_parser("mcnemar", help="McNemar test on a 2x2 contingency table")
    for name in "abcd":
        m.add_argument(name, type=int)
    m.set_defaults(func=cmd_mcnemar)

    y = sub.add_parser("synth", help="write a synthetic corpus")
    y.add_argument("--out-dir", required=True)
    y.add_argument("--n-train", type=int, default=2000)
    y.add_argument("--n-test", type=int, default=500)
    y.add_argument("--n-valid", type=int, default=0)
    y.add_argument("--n-relations", type=int, default=8)
    y.add_argument("--seed", type=int, default=7)
    y.add_argument("--word-dim", type=int, default=50)
    y.set_defaults(func=cmd_synth)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    _setup_logging()
    args = build_parser().parse_args(argv)
    args.argv = argv
    try:
        return args.func(args)
    except ConfigError as exc:
        return _fail(str(exc).split("\n"), EXIT_USAGE)
    except (KGPoolError, ValueError, FloatingPointError) as exc:
        return _fail([str(exc)], EXIT_FAILURE)
    except BrokenPipeError:
        # reader went away (``| head``); silence the flush at interpreter exit
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
