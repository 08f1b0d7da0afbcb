"""Sentence instances, KG entity attributes and heterogeneous graph assembly.

Node order in every graph is ``[sentence, head, tail, head attributes...,
tail attributes...]``. The sentence node links to both entity nodes and
each attribute node links only to the entity it describes.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from kgpool.encoder import BiLSTM, CharEncoder, Vocabulary, sequence_inputs
from kgpool.tensor import Tensor, concat, take_rows

log = logging.getLogger(__name__)

NA = "NA"
SENTENCE, HEAD, TAIL = 0, 1, 2
ATTRIBUTE_KINDS = ("label", "aliases", "description", "instance_of")
# lower value = dropped first when a graph exceeds max_nodes
_DROP_PRIORITY = {"aliases": 0, "alias": 0, "instance_of": 1, "label": 2, "description": 3, "extra": -1}


@dataclass(frozen=True)
class EntityMention:
    kg_id: str
    span: tuple[int, int]  # [start, end) token indices

    def __post_init__(self):
        start, end = self.span
        if end <= start:
            raise ValueError(f"empty mention span {self.span}")


@dataclass
class SentenceInstance:
    tokens: list[str]
    head: EntityMention
    tail: EntityMention
    relation: str = NA
    id: str | None = None

    def mention_tokens(self, which: int) -> list[str]:
        m = self.head if which == HEAD else self.tail
        return self.tokens[m.span[0]:m.span[1]]


@dataclass
class EntityAttributes:
    kg_id: str
    label: str | None = None
    aliases: list[str] = field(default_factory=list)
    description: str | None = None
    instance_of: list[str] = field(default_factory=list)
    extra: list[str] = field(default_factory=list)  # generic extra context nodes

    def count(self, alias_mode: str = "joined") -> int:
        return len(attribute_texts(self, alias_mode))


def tokenize(text: str) -> list[str]:
    return re.findall(r"\w+|[^\w\s]", text)


def attribute_texts(attrs: EntityAttributes | None, alias_mode: str = "joined") -> list[tuple[str, str]]:
    """``(kind, text)`` per attribute node, skipping anything missing."""
    if attrs is None:
        return []
    out = []
    if attrs.label:
        out.append(("label", attrs.label))
    aliases = [a for a in attrs.aliases if a and a.strip()]
    if aliases:
        if alias_mode == "per-alias":
            out.extend(("alias", a) for a in aliases)
        else:
            out.append(("aliases", " ".join(aliases)))
    if attrs.description:
        out.append(("description", attrs.description))
    types = [t for t in attrs.instance_of if t and t.strip()]
    if types:
        out.append(("instance_of", " ".join(types)))
    out.extend(("extra", e) for e in attrs.extra if e and e.strip())
    return out


@dataclass
class HigLayout:
    """Topology and node texts of a graph before encoding."""

    texts: list[list[str]]
    roles: list[str]
    kinds: list[str]
    owner: np.ndarray
    adjacency: np.ndarray

    @property
    def n(self) -> int:
        return len(self.texts)

    def attribute_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.owner >= 0)


@dataclass
class HIG:
    adjacency: np.ndarray
    features: Tensor
    roles: list[str]
    kinds: list[str]
    owner: np.ndarray
    texts: list[list[str]]

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    def attribute_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.owner >= 0)

    def entity_degrees(self) -> tuple[int, int]:
        deg = self.adjacency.sum(axis=1)
        return int(deg[HEAD]), int(deg[TAIL])


def hig_layout(inst: SentenceInstance, attrs: tuple[EntityAttributes | None, EntityAttributes | None],
               alias_mode: str = "joined", entity_edge: bool = False, max_nodes: int = 64,
               max_attr_tokens: int = 64) -> HigLayout:
    cands = []  # (entity node, kind, tokens)
    for ent, a in ((HEAD, attrs[0]), (TAIL, attrs[1])):
        for kind, text in attribute_texts(a, alias_mode):
            toks = tokenize(text)[:max_attr_tokens]
            if toks:
                cands.append((ent, kind, toks))
    while 3 + len(cands) > max_nodes:
        worst = min(range(len(cands)), key=lambda i: (_DROP_PRIORITY.get(cands[i][1], 0), -i))
        del cands[worst]

    texts = [list(inst.tokens), inst.mention_tokens(HEAD), inst.mention_tokens(TAIL)]
    roles = ["sentence", "head", "tail"]
    kinds = ["sentence", "head", "tail"]
    owner = [-1, -1, -1]
    for ent, kind, toks in cands:
        texts.append(toks)
        roles.append("attribute")
        kinds.append(kind)
        owner.append(ent)
    n = len(texts)
    adj = np.zeros((n, n))
    adj[SENTENCE, HEAD] = adj[HEAD, SENTENCE] = 1.0
    adj[SENTENCE, TAIL] = adj[TAIL, SENTENCE] = 1.0
    if entity_edge:
        adj[HEAD, TAIL] = adj[TAIL, HEAD] = 1.0
    for i in range(3, n):
        adj[i, owner[i]] = adj[owner[i], i] = 1.0
    return HigLayout(texts, roles, kinds, np.array(owner, dtype=np.intp), adj)


class Encoders:
    """Bi-LSTM encoders for sentence nodes and for entity/attribute nodes."""

    def __init__(self, sentence: BiLSTM, context: BiLSTM, chars: CharEncoder | None = None):
        if sentence.out_dim != context.out_dim:
            raise ValueError("sentence and context encoders must share an output size")
        self.sentence = sentence
        self.context = context
        self.chars = chars

    @property
    def out_dim(self) -> int:
        return self.sentence.out_dim

    def parameters(self) -> dict[str, Tensor]:
        out = {**self.sentence.parameters(), **self.context.parameters()}
        if self.chars is not None:
            out.update(self.chars.parameters())
        return out

    def encode(self, layouts: Sequence[HigLayout], vocab: Vocabulary) -> list[Tensor]:
        """Node feature matrices for many graphs, batching all sequences."""
        sent_x, sent_len = sequence_inputs([lay.texts[0] for lay in layouts], vocab, self.chars)
        sent = self.sentence(sent_x, sent_len)
        ctx_texts = [t for lay in layouts for t in lay.texts[1:]]
        ctx_x, ctx_len = sequence_inputs(ctx_texts, vocab)
        ctx = self.context(ctx_x, ctx_len)
        feats = []
        offset = 0
        # sentence row from `sent`, the rest from `ctx`
        for b, lay in enumerate(layouts):
            k = lay.n - 1
            rows = [take_rows(sent, [b]), take_rows(ctx, np.arange(offset, offset + k))]
            feats.append(concat(rows, axis=0))
            offset += k
        return feats


def build_hig(inst: SentenceInstance, attrs: tuple[EntityAttributes | None, EntityAttributes | None],
              encoders: Encoders, vocab: Vocabulary, *, alias_mode: str = "joined",
              entity_edge: bool = False, max_nodes: int = 64, max_attr_tokens: int = 64,
              warnings: list | None = None) -> HIG:
    lay = hig_layout(inst, lookup_warn(inst, attrs, warnings), alias_mode, entity_edge,
                     max_nodes, max_attr_tokens)
    feats = encoders.encode([lay], vocab)[0]
    return HIG(lay.adjacency, feats, lay.roles, lay.kinds, lay.owner, lay.texts)


def lookup_warn(inst: SentenceInstance, attrs, warnings: list | None = None):
    """Replace attribute records whose kg_id does not match the mention by None."""
    out = []
    for mention, a in ((inst.head, attrs[0]), (inst.tail, attrs[1])):
        if a is None or a.kg_id != mention.kg_id:
            rec = {"instance": inst.id, "kg_id": mention.kg_id, "reason": "no attributes in store"}
            if warnings is not None:
                warnings.append(rec)
            log.debug("no attributes for %s (instance %s)", mention.kg_id, inst.id)
            a = None
        out.append(a)
    return tuple(out)
