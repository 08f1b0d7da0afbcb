import numpy as np
import pytest
from hypothesis import given, strategies as st

from kgpool.encoder import BiLSTM, Vocabulary
from kgpool.graph import (HEAD, SENTENCE, TAIL, EntityAttributes, EntityMention, Encoders,
                          SentenceInstance, attribute_texts, build_hig, hig_layout)

from helpers import WORDS
from oracles import hig_counts

INST = SentenceInstance("paris is the capital of france".split(), EntityMention("Q90", (0, 1)),
                        EntityMention("Q142", (5, 6)), "P1376")


def full(kg_id):
    return EntityAttributes(kg_id, label="x", aliases=["a b", "c"], description="d e f", instance_of=["city"])


@pytest.fixture(scope="module")
def enc():
    rng = np.random.default_rng(0)
    vocab = Vocabulary.random(WORDS, 4, rng)
    return Encoders(BiLSTM(4, 3, rng), BiLSTM(4, 3, rng)), vocab


def test_full_attributes(enc):
    encoders, vocab = enc
    hig = build_hig(INST, (full("Q90"), full("Q142")), encoders, vocab)
    n, dh, dt = hig_counts(4, 4)
    assert hig.n == n == 11
    assert hig.entity_degrees() == (dh, dt) == (5, 5)
    assert hig.features.shape == (11, 6)


def test_no_attributes_is_the_star(enc):
    encoders, vocab = enc
    hig = build_hig(INST, (None, None), encoders, vocab)
    assert hig.n == 3
    assert hig.entity_degrees() == (1, 1)
    assert hig.adjacency.tolist() == [[0, 1, 1], [1, 0, 0], [1, 0, 0]]


def test_description_only(enc):
    encoders, vocab = enc
    hig = build_hig(INST, (EntityAttributes("Q90", description="capital city"), None), encoders, vocab)
    assert hig.n == 4
    assert hig.owner[3] == HEAD
    assert hig.kinds[3] == "description"


def test_mismatched_record_is_ignored_with_warning(enc):
    encoders, vocab = enc
    warnings = []
    hig = build_hig(INST, (full("Q1"), full("Q142")), encoders, vocab, warnings=warnings)
    assert hig.n == 3 + 4
    assert warnings and warnings[0]["kg_id"] == "Q90"


def test_entity_edge_option():
    lay = hig_layout(INST, (None, None), entity_edge=True)
    assert lay.adjacency[HEAD, TAIL] == lay.adjacency[TAIL, HEAD] == 1


def test_per_alias_mode():
    lay = hig_layout(INST, (full("Q90"), None), alias_mode="per-alias")
    assert lay.kinds[3:] == ["label", "alias", "alias", "description", "instance_of"]
    joined = hig_layout(INST, (full("Q90"), None))
    assert joined.texts[4] == ["a", "b", "c"]


def test_node_cap_drops_aliases_first():
    many = EntityAttributes("Q90", label="l", aliases=[f"alias{i}" for i in range(10)], description="d")
    lay = hig_layout(INST, (many, None), alias_mode="per-alias", max_nodes=6)
    assert lay.n == 6
    assert "label" in lay.kinds and "description" in lay.kinds


def test_attribute_text_truncation():
    long = EntityAttributes("Q90", description=" ".join(["w"] * 100))
    lay = hig_layout(INST, (long, None), max_attr_tokens=64)
    assert len(lay.texts[3]) == 64


def test_empty_strings_are_not_nodes():
    a = EntityAttributes("Q90", label=None, aliases=["", " "], description=None, instance_of=[""])
    assert attribute_texts(a) == []


def test_empty_span_rejected():
    with pytest.raises(ValueError):
        EntityMention("Q1", (2, 2))


attrs_strategy = st.builds(
    EntityAttributes,
    kg_id=st.just("Q"),
    label=st.one_of(st.none(), st.sampled_from(["paris", "the city"])),
    aliases=st.lists(st.sampled_from(["a", "b c", "light"]), max_size=3),
    description=st.one_of(st.none(), st.sampled_from(["a city", "capital of france"])),
    instance_of=st.lists(st.sampled_from(["city", "country"]), max_size=2),
)


@given(attrs_strategy, attrs_strategy, st.sampled_from(["joined", "per-alias"]))
def test_topology_invariants(head, tail, mode):
    head.kg_id, tail.kg_id = "Q90", "Q142"
    lay = hig_layout(INST, (head, tail), alias_mode=mode)
    adj = lay.adjacency
    nh, nt = head.count(mode), tail.count(mode)
    assert lay.n == 3 + nh + nt
    assert np.array_equal(adj, adj.T) and not np.diag(adj).any()
    assert set(np.unique(adj)) <= {0.0, 1.0}
    assert lay.roles.count("sentence") == 1 and lay.roles[1:3] == ["head", "tail"]
    deg = adj.sum(axis=1)
    for i in lay.attribute_nodes():
        assert deg[i] == 1 and adj[i, lay.owner[i]] == 1
    assert (deg[HEAD], deg[TAIL]) == (1 + nh, 1 + nt)
    core = adj[:3, :3]
    assert core.tolist() == [[0, 1, 1], [1, 0, 0], [1, 0, 0]]
    assert deg[SENTENCE] == 2
