"""Small shared builders for the test-suite."""

import numpy as np

from kgpool.config import Config
from kgpool.encoder import Vocabulary
from kgpool.graph import EntityAttributes, EntityMention, SentenceInstance
from kgpool.model import KGPoolModel, attributes_for
from kgpool.tensor import nll

WORDS = "the cat sat on mat paris france is capital city of a country light french republic".split()
RELATIONS = ["NA", "r1", "r2"]


def tiny_config(**kw):
    base = dict(word_dim=4, lstm_hidden=3, gcn_hidden=5, agg_hidden=4, classifier_hidden=(4,),
                dropout=0.0, seed=1)
    base.update(kw)
    return Config(**base)


def tiny_vocab(dim=4, seed=0):
    return Vocabulary.random(WORDS, dim, np.random.default_rng(seed))


def two_instances():
    """An 11-node and a 5-node graph once attributes are attached."""
    a = SentenceInstance("paris is capital of france".split(), EntityMention("Q1", (0, 1)),
                         EntityMention("Q2", (4, 5)), "r1", "a")
    b = SentenceInstance("the cat sat on mat".split(), EntityMention("Q3", (1, 2)),
                         EntityMention("Q4", (4, 5)), "r2", "b")
    store = {
        "Q1": EntityAttributes("Q1", label="paris", aliases=["city of light"],
                               description="capital city of france", instance_of=["city"]),
        "Q2": EntityAttributes("Q2", label="france", aliases=["french republic"],
                               description="a country", instance_of=["country"]),
        "Q3": EntityAttributes("Q3", description="a cat"),
        "Q4": EntityAttributes("Q4", label="mat"),
    }
    return [a, b], store


def tiny_model(init_scale=2.5, aggregator="gnn", randomize_biases=True, **kw):
    model = KGPoolModel(tiny_config(init_scale=init_scale, aggregator=aggregator, **kw), tiny_vocab(),
                        RELATIONS)
    if randomize_biases:
        # zero biases put ReLU units exactly on their kink for all-zero inputs,
        # where one-sided and central differences disagree
        rng = np.random.default_rng(5)
        for p in model.parameters().values():
            if p.shape[0] == 1:
                p.data[...] = rng.uniform(-0.5, 0.5, p.shape)
    return model


def loss_fn(model, instances, store):
    """Scalar loss with pooling selections frozen after the first call."""
    pairs = [attributes_for(i, store) for i in instances]
    frozen = [{} for _ in instances]
    gold = model.gold_indices(instances)

    def f(_=None):
        return nll(model.forward(instances, pairs, frozen=frozen).probs, gold)

    f()
    return f, frozen


def random_hig(seed, n_head, n_tail, dim=4, duplicate=False):
    """A HIG with random node features; ``duplicate`` copies one attribute row to force score ties."""
    from kgpool.graph import HIG, hig_layout
    from kgpool.tensor import Tensor

    inst = SentenceInstance(["w"] * 4, EntityMention("H", (0, 1)), EntityMention("T", (2, 3)))
    head = EntityAttributes("H", extra=[f"h{i}" for i in range(n_head)])
    tail = EntityAttributes("T", extra=[f"t{i}" for i in range(n_tail)])
    lay = hig_layout(inst, (head, tail))
    feats = np.random.default_rng(seed).uniform(-1, 1, size=(lay.n, dim))
    if duplicate and n_head >= 2:
        feats[4] = feats[3]
    return HIG(lay.adjacency, Tensor(feats), lay.roles, lay.kinds, lay.owner, lay.texts)
