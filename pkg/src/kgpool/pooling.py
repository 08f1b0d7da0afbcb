"""Graph convolution blocks with self-attention context pooling.

Three GCN blocks each produce node features and a mean/max readout. A
pooling block additionally scores the attribute nodes, keeps those whose
normalised score reaches ``max - alpha * std`` and scales their features
by that score. Sentence and entity nodes are never removed and always
occupy positions 0, 1, 2 of every pooled graph.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from kgpool.graph import HIG
from kgpool.tensor import (
    Tensor,
    concat,
    matmul,
    max_rows,
    mean_rows,
    mul,
    relu,
    softmax,
    take_rows,
    tanh,
    transpose,
)

CORE = np.array([0, 1, 2], dtype=np.intp)


def normalized_adjacency(adj: np.ndarray) -> np.ndarray:
    """``D^-1/2 (A + I) D^-1/2``; the self-loop keeps every degree >= 1."""
    a = np.asarray(adj, dtype=np.float64)
    a_hat = a + np.eye(a.shape[0])
    d = 1.0 / np.sqrt(a_hat.sum(axis=1))
    return a_hat * d[:, None] * d[None, :]


def gcn_layer(adj: np.ndarray, feats: Tensor, theta: Tensor, norm: np.ndarray | None = None) -> Tensor:
    if feats.shape[0] != adj.shape[0]:
        raise ValueError(f"{feats.shape[0]} feature rows for a {adj.shape[0]}-node graph")
    if norm is None:
        norm = normalized_adjacency(adj)
    return relu(matmul(matmul(norm, feats), theta))


def readout(feats: Tensor) -> Tensor:
    """Column mean concatenated with column max, ``[1, 2d]``."""
    if feats.shape[0] == 0:
        raise ValueError("readout of an empty graph")
    return concat([mean_rows(feats), max_rows(feats)], axis=1)


def attention_scores(adj: np.ndarray, feats: Tensor, theta_att: Tensor,
                     norm: np.ndarray | None = None) -> Tensor:
    """One tanh-bounded score per node, shape ``[n, 1]``."""
    if norm is None:
        norm = normalized_adjacency(adj)
    return tanh(matmul(matmul(norm, feats), theta_att))


def select_nodes(z_score, alpha: float) -> tuple[np.ndarray, float | None]:
    """Positions (into ``z_score``) at or above ``max - alpha * std``.

    ``std`` is the population standard deviation. With no scores the kept
    set is empty and the threshold is None.
    """
    if alpha < 0:
        raise ValueError("context coefficient must be >= 0")
    z = np.asarray(z_score, dtype=np.float64).reshape(-1)
    if z.size == 0:
        return np.zeros(0, dtype=np.intp), None
    threshold = float(z.max() - alpha * z.std())
    return np.flatnonzero(z >= threshold), threshold


@dataclass
class PoolingOutcome:
    kept_idx: np.ndarray  # positions in the graph the block saw
    z_score: np.ndarray  # normalised scores of that graph's attribute nodes
    threshold: float | None
    features: Tensor  # F_out
    adjacency: np.ndarray  # A_out
    block: int = 0
    attr_positions: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.intp))

    @property
    def kept_attr(self) -> np.ndarray:
        """Positions (into ``attr_positions``) of the kept attribute nodes."""
        return np.searchsorted(self.attr_positions, self.kept_idx[3:])


def pool_graph(adj: np.ndarray, feats: Tensor, attr_positions: np.ndarray, kept_attr: np.ndarray,
               z_score: Tensor) -> PoolingOutcome:
    """Keep the core nodes plus ``attr_positions[kept_attr]``.

    ``z_score`` is the ``[1, m]`` normalised score row over the attribute
    nodes; kept attribute rows are multiplied by their score and core rows
    by one. The adjacency is the induced subgraph.
    """
    attr_positions = np.asarray(attr_positions, dtype=np.intp)
    kept_attr = np.sort(np.asarray(kept_attr, dtype=np.intp))
    core = np.setdiff1d(np.arange(adj.shape[0]), attr_positions)
    kept_idx = np.concatenate([core, attr_positions[kept_attr]]).astype(np.intp)
    order = np.argsort(kept_idx, kind="stable")
    kept_idx = kept_idx[order]
    sub = take_rows(feats, kept_idx)
    if kept_attr.size:
        mask = concat([Tensor(np.ones((core.size, 1))), take_rows(transpose(z_score), kept_attr)], axis=0)
        if not np.array_equal(order, np.arange(order.size)):
            mask = take_rows(mask, order)
        out = mul(sub, mask)
    else:
        out = sub
    z_vals = z_score.data.reshape(-1).copy() if z_score is not None else np.zeros(0)
    return PoolingOutcome(kept_idx, z_vals, None, out, adj[np.ix_(kept_idx, kept_idx)],
                          attr_positions=attr_positions)


@dataclass
class ContextGraph:
    hig: HIG
    adjacency: np.ndarray  # pooled adjacency after the final block
    features: Tensor  # node features after the final block
    kept: np.ndarray  # original HIG indices of the final nodes
    outcomes: list[PoolingOutcome]
    head: Tensor  # e_h', [1, n_blocks * d]
    tail: Tensor
    sentence: Tensor
    readout: Tensor  # R', [1, n_blocks * 2d]

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    def entity_degrees(self) -> tuple[int, int]:
        deg = self.adjacency.sum(axis=1)
        return int(deg[1]), int(deg[2])

    def dropped(self) -> np.ndarray:
        return np.setdiff1d(np.arange(self.hig.n), self.kept)


class ContextPooler:
    """Parameters of the GCN blocks and attention vectors."""

    def __init__(self, in_dim: int, hidden: int = 128, n_blocks: int = 3, pool_blocks=(3,),
                 rng: np.random.Generator | None = None, readout_after_pool: bool = True,
                 scale: float = 1.0):
        self.in_dim, self.hidden, self.n_blocks = in_dim, hidden, n_blocks
        self.pool_blocks = tuple(sorted(set(pool_blocks)))
        self.readout_after_pool = readout_after_pool
        self.thetas = []
        for k in range(n_blocks):
            d_in = in_dim if k == 0 else hidden
            self.thetas.append(Tensor(_glorot(rng, d_in, hidden, scale), requires_grad=True,
                                      name=f"pool.theta{k + 1}"))
        self.att = {b: Tensor(_glorot(rng, hidden, 1, scale), requires_grad=True, name=f"pool.att{b}")
                    for b in self.pool_blocks}

    def parameters(self) -> dict[str, Tensor]:
        out = {t.name: t for t in self.thetas}
        out.update({t.name: t for t in self.att.values()})
        return out

    def __call__(self, hig: HIG, alpha: float, frozen: dict | None = None) -> ContextGraph:
        return forward_context_pooling(hig, self, alpha, frozen=frozen)


def _glorot(rng, d_in, d_out, scale=1.0):
    if rng is None:
        return np.zeros((d_in, d_out))
    bound = scale * np.sqrt(6.0 / (d_in + d_out))
    return rng.uniform(-bound, bound, size=(d_in, d_out))


def forward_context_pooling(hig: HIG, params: ContextPooler, alpha: float,
                            frozen: dict | None = None) -> ContextGraph:
    """Run every block, pooling where configured, and stack the block outputs.

    ``frozen`` maps a block number to the kept attribute positions to use
    instead of fresh selection (selection is discrete, so gradient checks
    hold it fixed). Selections made are written back into ``frozen`` when
    it is an empty dict.
    """
    adj = hig.adjacency
    feats = hig.features
    is_attr = hig.owner >= 0
    kept = np.arange(hig.n)
    heads, tails, sents, reads, outcomes = [], [], [], [], []
    for k in range(1, params.n_blocks + 1):
        norm = normalized_adjacency(adj)
        feats = gcn_layer(adj, feats, params.thetas[k - 1], norm)
        if k in params.pool_blocks:
            pre_read = readout(feats) if not params.readout_after_pool else None
            attr_pos = np.flatnonzero(is_attr)
            if attr_pos.size:
                z = attention_scores(adj, feats, params.att[k], norm)
                z_score = softmax(transpose(take_rows(z, attr_pos)))
                if frozen is not None and k in frozen:
                    kept_attr, threshold = np.asarray(frozen[k], dtype=np.intp), None
                else:
                    kept_attr, threshold = select_nodes(z_score.data, alpha)
                    if frozen is not None:
                        frozen[k] = kept_attr
                outcome = pool_graph(adj, feats, attr_pos, kept_attr, z_score)
                outcome.threshold = threshold
                outcome.block = k
                outcomes.append(outcome)
                feats, adj = outcome.features, outcome.adjacency
                kept = kept[outcome.kept_idx]
                is_attr = is_attr[outcome.kept_idx]
            reads.append(pre_read if pre_read is not None else readout(feats))
        else:
            reads.append(readout(feats))
        core = take_rows(feats, CORE)
        sents.append(take_rows(core, [0]))
        heads.append(take_rows(core, [1]))
        tails.append(take_rows(core, [2]))
    return ContextGraph(
        hig=hig,
        adjacency=adj,
        features=feats,
        kept=kept,
        outcomes=outcomes,
        head=concat(heads, axis=1),
        tail=concat(tails, axis=1),
        sentence=concat(sents, axis=1),
        readout=concat(reads, axis=1),
    )
