"""Dataset, attribute-store and relation-vocabulary files, plus a synthetic corpus.

Dataset files hold one JSON object per line::

    {"id": "s1", "tokens": ["Paris", "is", "in", "France"],
     "head": {"kg_id": "Q90", "span": [0, 1]},
     "tail": {"kg_id": "Q142", "span": [3, 4]},
     "relation": "P17"}

Attribute stores are one JSON object keyed by kg_id with ``label``,
``aliases``, ``description`` and ``instance_of`` fields. Relation files list
one relation id per line and must include ``NA``.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from kgpool.encoder import write_embeddings
from kgpool.errors import ParseError
from kgpool.graph import NA, EntityAttributes, EntityMention, SentenceInstance

log = logging.getLogger(__name__)

MAX_INVALID_FRACTION = 0.10


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


# ------------------------------------------------------------------ datasets


def _parse_mention(obj, n_tokens: int, which: str) -> EntityMention:
    if not isinstance(obj, dict):
        raise ValueError(f"{which} must be an object")
    kg_id = obj.get("kg_id")
    if not isinstance(kg_id, str) or not kg_id:
        raise ValueError(f"{which}.kg_id missing")
    span = obj.get("span")
    if (not isinstance(span, list) or len(span) != 2
            or not all(isinstance(x, int) and not isinstance(x, bool) for x in span)):
        raise ValueError(f"{which}.span must be two integers")
    start, end = span
    if start < 0 or end > n_tokens:
        raise ValueError("span out of bounds")
    if end <= start:
        raise ValueError(f"{which}.span is empty")
    return EntityMention(kg_id, (start, end))


def parse_record(obj, relations: set[str] | None = None) -> SentenceInstance:
    if not isinstance(obj, dict):
        raise ValueError("record must be a JSON object")
    tokens = obj.get("tokens")
    if not isinstance(tokens, list) or not tokens or not all(isinstance(t, str) and t for t in tokens):
        raise ValueError("tokens must be a non-empty list of non-empty strings")
    head = _parse_mention(obj.get("head"), len(tokens), "head")
    tail = _parse_mention(obj.get("tail"), len(tokens), "tail")
    if head.span[0] < tail.span[1] and tail.span[0] < head.span[1]:
        raise ValueError("head and tail spans overlap")
    rel = obj.get("relation", NA)
    if not isinstance(rel, str) or not rel:
        raise ValueError("relation must be a string")
    if relations is not None and rel != NA and rel not in relations:
        raise ValueError(f"relation {rel!r} not in vocabulary")
    rid = obj.get("id")
    return SentenceInstance(tokens, head, tail, rel, None if rid is None else str(rid))


def load_dataset(path: str | Path, relations: Iterable[str] | None = None,
                 rejects: list | None = None) -> list[SentenceInstance]:
    """Read and validate a dataset file.

    Invalid records are dropped and reported as ``(line, reason)`` in
    ``rejects``; more than 10% invalid records fails the whole file.
    """
    path = Path(path)
    rel = set(relations) if relations is not None else None
    out, bad = [], []
    total = 0
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            total += 1
            try:
                inst = parse_record(json.loads(line), rel)
            except json.JSONDecodeError as exc:
                bad.append((lineno, f"invalid JSON: {exc.msg}"))
                continue
            except ValueError as exc:
                bad.append((lineno, str(exc)))
                continue
            if inst.id is None:
                inst.id = f"{path.stem}:{lineno}"
            out.append(inst)
    if rejects is not None:
        rejects.extend(bad)
    for lineno, reason in bad:
        log.warning("%s:%d rejected: %s", path, lineno, reason)
    if total == 0:
        log.warning("%s: empty dataset", path)
    elif len(bad) > MAX_INVALID_FRACTION * total:
        first = "; ".join(f"line {n}: {r}" for n, r in bad[:5])
        raise ParseError(f"{len(bad)} of {total} records invalid ({first})", path=path)
    return out


def instance_to_record(inst: SentenceInstance) -> dict:
    rec = {
        "tokens": list(inst.tokens),
        "head": {"kg_id": inst.head.kg_id, "span": list(inst.head.span)},
        "tail": {"kg_id": inst.tail.kg_id, "span": list(inst.tail.span)},
        "relation": inst.relation,
    }
    if inst.id is not None:
        rec = {"id": inst.id, **rec}
    return rec


def write_dataset(path: str | Path, instances: Iterable[SentenceInstance]) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(json.dumps(instance_to_record(inst), ensure_ascii=False) + "\n")


# ------------------------------------------------------------ attribute store


def _no_duplicates(pairs):
    out = {}
    for k, v in pairs:
        if k in out:
            raise ValueError(f"duplicate key {k!r}")
        out[k] = v
    return out


def _str_list(value, key, kg_id):
    if value is None:
        return []
    if isinstance(value, str):
        value = [value]
    if not isinstance(value, list) or not all(isinstance(v, str) and v for v in value):
        raise ParseError(f"{kg_id}: {key} must be a list of non-empty strings")
    return list(value)


def _opt_str(value, key, kg_id):
    if value is None:
        return None
    if not isinstance(value, str) or not value:
        raise ParseError(f"{kg_id}: {key} must be a non-empty string")
    return value


def load_attribute_store(path: str | Path) -> dict[str, EntityAttributes]:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"), object_pairs_hook=_no_duplicates)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", line=exc.lineno, path=path) from None
    except ValueError as exc:
        raise ParseError(str(exc), path=path) from None
    if not isinstance(raw, dict):
        raise ParseError("attribute store must be a JSON object keyed by kg_id", path=path)
    store = {}
    for kg_id, rec in raw.items():
        if not isinstance(rec, dict):
            raise ParseError(f"{kg_id}: record must be an object", path=path)
        unknown = set(rec) - {"label", "aliases", "description", "instance_of", "extra"}
        if unknown:
            raise ParseError(f"{kg_id}: unknown fields {sorted(unknown)}", path=path)
        store[kg_id] = EntityAttributes(
            kg_id,
            label=_opt_str(rec.get("label"), "label", kg_id),
            aliases=_str_list(rec.get("aliases"), "aliases", kg_id),
            description=_opt_str(rec.get("description"), "description", kg_id),
            instance_of=_str_list(rec.get("instance_of"), "instance_of", kg_id),
            extra=_str_list(rec.get("extra"), "extra", kg_id),
        )
    return store


def write_attribute_store(path: str | Path, store: dict[str, EntityAttributes]) -> None:
    out = {}
    for kg_id in sorted(store):
        a = store[kg_id]
        rec = {}
        if a.label:
            rec["label"] = a.label
        if a.aliases:
            rec["aliases"] = list(a.aliases)
        if a.description:
            rec["description"] = a.description
        if a.instance_of:
            rec["instance_of"] = list(a.instance_of)
        if a.extra:
            rec["extra"] = list(a.extra)
        out[kg_id] = rec
    Path(path).write_text(json.dumps(out, indent=1, ensure_ascii=False) + "\n", encoding="utf-8")


# ------------------------------------------------------- relation vocabulary


def load_relations(path: str | Path) -> list[str]:
    path = Path(path)
    rels, seen = [], set()
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        name = line.strip()
        if not name:
            continue
        if name in seen:
            raise ParseError(f"duplicate relation {name!r}", line=lineno, path=path)
        seen.add(name)
        rels.append(name)
    if NA not in seen:
        raise ParseError("relation vocabulary must contain NA", path=path)
    return rels


def write_relations(path: str | Path, relations: Sequence[str]) -> None:
    Path(path).write_text("\n".join(relations) + "\n", encoding="utf-8")


# ----------------------------------------------------------- synthetic data

_ONSETS = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z"]
_VOWELS = ["a", "e", "i", "o", "u"]
_FILLER = ["the", "and", "of", "in", "on", "at", "by", "last", "year", "today", "reports", "say",
           "that", "after", "before", "during", "with", "a", "local", "news"]
_CONNECTORS = ["met", "joined", "contacted", "saw"]
_VERB_POOL = ["founded", "married", "visited", "governs", "sued", "coached", "hired", "funded",
              "painted", "bought", "sold", "taught", "defeated", "elected", "adopted", "built"]
_KEY_POOL = ["painter", "sculptor", "chemist", "banker", "pilot", "poet", "surgeon", "farmer",
             "actor", "lawyer", "monk", "sailor", "judge", "baker", "miner", "tailor"]
_NEUTRAL_DESC = ["famous", "known", "born", "person", "figure", "notable", "public", "member",
                 "group", "entity", "from", "the", "region", "north", "south", "east", "west"]
_TYPES = ["human", "organization", "settlement", "company", "band", "club"]
_ALIAS_SUFFIX = ["jr", "sr", "ii", "co"]


@dataclass
class SynthCorpus:
    train: list[SentenceInstance]
    test: list[SentenceInstance]
    valid: list[SentenceInstance]
    store: dict[str, EntityAttributes]
    relations: list[str]
    attribute_relations: list[str]
    sentence_relations: list[str]
    tokens: list[str] = field(default_factory=list)

    def stripped(self) -> None:
        """The store to use for the no-context ablation (always None)."""
        return None

    def write(self, out_dir: str | Path, word_dim: int = 50, seed: int = 0) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "train": out / "train.jsonl",
            "test": out / "test.jsonl",
            "valid": out / "valid.jsonl",
            "attributes": out / "attributes.json",
            "relations": out / "relations.txt",
            "embeddings": out / "vectors.txt",
            "info": out / "corpus.json",
        }
        write_dataset(paths["train"], self.train)
        write_dataset(paths["test"], self.test)
        write_dataset(paths["valid"], self.valid)
        write_attribute_store(paths["attributes"], self.store)
        write_relations(paths["relations"], self.relations)
        rng = np.random.default_rng(seed)
        write_embeddings(paths["embeddings"], self.tokens,
                         np.round(rng.uniform(-0.5, 0.5, size=(len(self.tokens), word_dim)), 6))
        paths["info"].write_text(json.dumps({
            "attribute_relations": self.attribute_relations,
            "sentence_relations": self.sentence_relations,
            "sizes": {"train": len(self.train), "test": len(self.test), "valid": len(self.valid)},
        }, indent=1) + "\n", encoding="utf-8")
        return paths


def _names(rng: np.random.Generator, count: int) -> list[str]:
    names = set()
    while len(names) < count:
        k = int(rng.integers(2, 4))
        names.add("".join(_ONSETS[rng.integers(len(_ONSETS))] + _VOWELS[rng.integers(len(_VOWELS))]
                          for _ in range(k)))
    return sorted(names)


def synth_corpus(n_train: int, n_test: int, n_relations: int, seed: int, n_valid: int = 0) -> SynthCorpus:
    """Generate a corpus where half of the relations are visible only in the KG.

    For the first ``n_relations // 2`` relations ("attribute relations") the
    sentence uses a connector shared by all of them and the relation keyword
    sits in the head entity's description. The remaining relations are
    signalled by a relation-specific verb in the sentence. Entity names are
    drawn independently of the relation.
    """
    if n_relations < 2:
        raise ValueError("n_relations must be >= 2")
    if n_relations > 2 * min(len(_VERB_POOL) // 2, len(_KEY_POOL) // 2):
        raise ValueError(f"at most {2 * (len(_KEY_POOL) // 2)} synthetic relations are supported")
    rng = np.random.default_rng(seed)
    relations = [f"R{i}" for i in range(n_relations)]
    n_attr = n_relations // 2
    attr_rel, sent_rel = relations[:n_attr], relations[n_attr:]
    keys = {r: _KEY_POOL[2 * i:2 * i + 2] for i, r in enumerate(attr_rel)}
    verbs = {r: _VERB_POOL[2 * i:2 * i + 2] for i, r in enumerate(sent_rel)}
    names = _names(rng, 400)
    store: dict[str, EntityAttributes] = {}
    counter = [0]

    def pick(pool):
        return pool[int(rng.integers(len(pool)))]

    def entity(keyword: str | None) -> tuple[str, list[str]]:
        counter[0] += 1
        kg_id = f"Q{counter[0]}"
        mention = [pick(names) for _ in range(int(rng.integers(1, 3)))]
        words = [pick(_NEUTRAL_DESC) for _ in range(int(rng.integers(2, 5)))]
        if keyword is not None:
            words.insert(int(rng.integers(len(words) + 1)), keyword)
        label = " ".join(mention) if rng.random() > 0.15 else None
        aliases = [" ".join(mention + [pick(_ALIAS_SUFFIX)])] if rng.random() > 0.15 else []
        if aliases and rng.random() < 0.3:
            aliases.append(" ".join(mention[-1:] + [pick(_ALIAS_SUFFIX)]))
        desc = " ".join(["a"] + words) if keyword is not None or rng.random() > 0.15 else None
        types = [pick(_TYPES)] if rng.random() > 0.15 else []
        store[kg_id] = EntityAttributes(kg_id, label=label, aliases=aliases, description=desc,
                                        instance_of=types)
        return kg_id, mention

    def instance(rel: str, iid: str) -> SentenceInstance:
        if rel in keys:
            h_id, h_tok = entity(pick(keys[rel]))
            verb = pick(_CONNECTORS)
        else:
            h_id, h_tok = entity(None)
            verb = pick(verbs[rel])
        t_id, t_tok = entity(None)
        pre = [pick(_FILLER) for _ in range(int(rng.integers(0, 3)))]
        mid = [pick(_FILLER) for _ in range(int(rng.integers(0, 2)))]
        post = [pick(_FILLER) for _ in range(int(rng.integers(0, 3)))]
        tokens = pre + h_tok + [verb] + mid + t_tok + post
        hs = len(pre)
        ts = hs + len(h_tok) + 1 + len(mid)
        return SentenceInstance(tokens, EntityMention(h_id, (hs, hs + len(h_tok))),
                                EntityMention(t_id, (ts, ts + len(t_tok))), rel, iid)

    def split(n: int, tag: str) -> list[SentenceInstance]:
        labels = [relations[i % n_relations] for i in range(n)]
        labels = [labels[i] for i in rng.permutation(n)]
        return [instance(r, f"{tag}-{i:05d}") for i, r in enumerate(labels)]

    train = split(n_train, "train")
    test = split(n_test, "test")
    valid = split(n_valid, "valid")
    tokens = sorted(set(names) | set(_FILLER) | set(_CONNECTORS) | set(_VERB_POOL) | set(_KEY_POOL)
                    | set(_NEUTRAL_DESC) | set(_TYPES) | set(_ALIAS_SUFFIX))
    return SynthCorpus(train, test, valid, store, relations + [NA], attr_rel, sent_rel, tokens)
