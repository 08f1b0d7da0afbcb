"""Context aggregators and the relation classifier.

Two aggregators sit behind one call signature: a sentence Bi-LSTM with
entity-position indicator features (``lstm``) and message passing over the
pooled context graph (``gnn``). Either produces the latent relation vector
that the classifier concatenates with the stacked context-graph vectors.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from kgpool.encoder import BiLSTM, Vocabulary
from kgpool.errors import ConfigError
from kgpool.graph import SentenceInstance
from kgpool.pooling import ContextGraph, _glorot, normalized_adjacency
from kgpool.tensor import Tensor, add, concat, dropout, matmul, relu, softmax, take_rows


class GnnAggregator:
    variant = "gnn"

    def __init__(self, in_dim: int, hidden: int = 256, rounds: int = 2,
                 rng: np.random.Generator | None = None, dropout: float = 0.5, scale: float = 1.0):
        self.in_dim, self.hidden, self.rounds, self.p = in_dim, hidden, rounds, dropout
        self.weights = []
        self.biases = []
        for r in range(rounds):
            d_in = in_dim if r == 0 else hidden
            self.weights.append(Tensor(_glorot(rng, d_in, hidden, scale), requires_grad=True, name=f"agg.w{r}"))
            self.biases.append(Tensor(np.zeros((1, hidden)), requires_grad=True, name=f"agg.b{r}"))

    @property
    def out_dim(self) -> int:
        return 2 * self.hidden

    def parameters(self) -> dict[str, Tensor]:
        out = {}
        for w, b in zip(self.weights, self.biases):
            out[w.name] = w
            out[b.name] = b
        return out

    def __call__(self, cg: ContextGraph, rng=None) -> Tensor:
        norm = normalized_adjacency(cg.adjacency)
        h = cg.features
        for w, b in zip(self.weights, self.biases):
            h = relu(add(matmul(matmul(norm, h), w), b))
            h = dropout(h, self.p, rng)
        return concat([take_rows(h, [1]), take_rows(h, [2])], axis=1)

    def batch(self, instances, cgs, vocab=None, rng=None) -> Tensor:
        return concat([self(cg, rng) for cg in cgs], axis=0)


def position_features(inst: SentenceInstance) -> np.ndarray:
    """One-hot ``[in-head, in-tail, other]`` per token."""
    n = len(inst.tokens)
    feats = np.zeros((n, 3))
    feats[:, 2] = 1.0
    for col, m in ((0, inst.head), (1, inst.tail)):
        feats[m.span[0]:m.span[1], 2] = 0.0
        feats[m.span[0]:m.span[1], col] = 1.0
    return feats


class LstmAggregator:
    variant = "lstm"

    def __init__(self, word_dim: int, hidden: int = 256, rng: np.random.Generator | None = None,
                 dropout: float = 0.5, scale: float = 1.0):
        self.hidden, self.p = hidden, dropout
        self.lstm = BiLSTM(word_dim + 3, hidden, rng, name="agg.bilstm", scale=scale)

    @property
    def out_dim(self) -> int:
        return 2 * self.hidden

    def parameters(self) -> dict[str, Tensor]:
        return self.lstm.parameters()

    def batch(self, instances: Sequence[SentenceInstance], cgs=None, vocab: Vocabulary = None,
              rng=None) -> Tensor:
        if vocab is None:
            raise ConfigError("the lstm aggregator needs the word vocabulary")
        ids = np.concatenate([vocab.ids(inst.tokens) for inst in instances])
        pos = np.vstack([position_features(inst) for inst in instances])
        lengths = [len(inst.tokens) for inst in instances]
        x = concat([take_rows(vocab.embeddings, ids), Tensor(pos)], axis=1)
        return dropout(self.lstm(x, lengths), self.p, rng)


def aggregate(inst: SentenceInstance, cg: ContextGraph, params, *, variant: str | None = None,
              vocab: Vocabulary | None = None, rng=None) -> Tensor:
    """Latent relation vector ``[1, 2 * hidden]`` for one instance."""
    if variant is not None and variant != getattr(params, "variant", None):
        raise ConfigError(f"aggregator variant {variant!r} does not match parameters "
                          f"of type {type(params).__name__}")
    if isinstance(params, GnnAggregator):
        return params(cg, rng)
    if isinstance(params, LstmAggregator):
        return params.batch([inst], vocab=vocab, rng=rng)
    raise ConfigError(f"unknown aggregator parameters {type(params).__name__}")


class Classifier:
    """MLP from the concatenated representation to relation logits."""

    def __init__(self, in_dim: int, n_relations: int, hidden: Sequence[int] = (256,),
                 rng: np.random.Generator | None = None, dropout: float = 0.5, scale: float = 1.0):
        self.in_dim, self.n_relations, self.p = in_dim, n_relations, dropout
        sizes = [in_dim, *hidden, n_relations]
        self.weights, self.biases = [], []
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            self.weights.append(Tensor(_glorot(rng, a, b, scale), requires_grad=True, name=f"cls.w{i}"))
            self.biases.append(Tensor(np.zeros((1, b)), requires_grad=True, name=f"cls.b{i}"))

    def parameters(self) -> dict[str, Tensor]:
        out = {}
        for w, b in zip(self.weights, self.biases):
            out[w.name] = w
            out[b.name] = b
        return out

    def logits(self, x: Tensor, rng=None) -> Tensor:
        if x.shape[1] != self.in_dim:
            raise ConfigError(f"classifier expects {self.in_dim} inputs, got {x.shape[1]}")
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            x = add(matmul(x, w), b)
            if i < last:
                x = dropout(relu(x), self.p, rng)
        return x

    def __call__(self, x: Tensor, rng=None) -> Tensor:
        return softmax(self.logits(x, rng))


def joint_representation(r: Tensor, cg: ContextGraph) -> Tensor:
    """``r' + e_h' + e_t' + W' + R'`` concatenated in that order."""
    return concat([r, cg.head, cg.tail, cg.sentence, cg.readout], axis=1)


def classify(r: Tensor, cg: ContextGraph, params: Classifier, rng=None) -> Tensor:
    return params(joint_representation(r, cg), rng)
