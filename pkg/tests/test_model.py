import zipfile

import numpy as np
import pytest

from kgpool.encoder import Vocabulary
from kgpool.errors import CompatibilityError, ConfigError
from kgpool.model import KGPoolModel, attributes_for, load_checkpoint, save_checkpoint
from kgpool.tensor import grad_check

from helpers import RELATIONS, WORDS, loss_fn, tiny_config, tiny_model, tiny_vocab, two_instances


def test_batch_graph_sizes():
    insts, store = two_instances()
    model = tiny_model()
    res = model.forward(insts, [attributes_for(i, store) for i in insts])
    assert [h.n for h in res.higs] == [11, 5]
    np.testing.assert_allclose(res.probs.data.sum(axis=1), 1.0, atol=1e-12)


@pytest.mark.parametrize("aggregator", ["gnn", "lstm"])
def test_end_to_end_gradients(aggregator):
    insts, store = two_instances()
    # unit-scale weights keep the softmax off saturation, so no coordinate's
    # true gradient sinks into central-difference noise (~1e-10 here)
    model = tiny_model(init_scale=1.0, aggregator=aggregator)
    f, _ = loss_fn(model, insts, store)
    for name, p in model.parameters().items():
        assert grad_check(f, p) < 1e-4, name


def test_gradients_with_char_encoder():
    insts, store = two_instances()
    model = tiny_model(char_encoder=True, char_dim=3, char_hidden=2)
    f, _ = loss_fn(model, insts, store)
    p = model.parameters()
    for name in ("chars.embeddings", "chars.bilstm.u_f", "enc.sentence.w_b"):
        assert grad_check(f, p[name]) < 1e-4, name


def test_single_five_node_graph():
    insts, store = two_instances()
    model = tiny_model(init_scale=1.0)
    f, frozen = loss_fn(model, insts[1:], store)
    assert frozen[0]  # pooling made a selection
    for name, p in model.parameters().items():
        assert grad_check(f, p) < 1e-4, name


def test_no_context_ablation_runs():
    insts, _ = two_instances()
    model = tiny_model()
    probs, higs, cgs = model.predict(insts, None)
    assert [h.n for h in higs] == [3, 3] and probs.shape == (2, 3)


def test_relations_need_na():
    with pytest.raises(ConfigError):
        KGPoolModel(tiny_config(), tiny_vocab(), ["r1", "r2"])


def test_embedding_dim_checked():
    with pytest.raises(ConfigError):
        KGPoolModel(tiny_config(word_dim=5), tiny_vocab(), RELATIONS)


def test_checkpoint_round_trip(tmp_path):
    insts, store = two_instances()
    model = tiny_model()
    save_checkpoint(tmp_path / "m.kgp", model, {"note": "x"})
    loaded, header = load_checkpoint(tmp_path / "m.kgp")
    assert header["meta"] == {"note": "x"} and loaded.relations == RELATIONS
    a = model.predict(insts, store)[0]
    b = loaded.predict(insts, store)[0]
    np.testing.assert_array_equal(a, b)


def test_checkpoint_bytes_are_deterministic(tmp_path):
    save_checkpoint(tmp_path / "a.kgp", tiny_model())
    save_checkpoint(tmp_path / "b.kgp", tiny_model())
    assert (tmp_path / "a.kgp").read_bytes() == (tmp_path / "b.kgp").read_bytes()
    with zipfile.ZipFile(tmp_path / "a.kgp") as zf:
        assert {i.date_time for i in zf.infolist()} == {(1980, 1, 1, 0, 0, 0)}


def test_checkpoint_char_encoder_round_trip(tmp_path):
    insts, store = two_instances()
    model = tiny_model(char_encoder=True, char_dim=3, char_hidden=2)
    save_checkpoint(tmp_path / "c.kgp", model)
    loaded, _ = load_checkpoint(tmp_path / "c.kgp")
    np.testing.assert_array_equal(model.predict(insts, store)[0], loaded.predict(insts, store)[0])


def test_checkpoint_missing_and_tampered(tmp_path):
    with pytest.raises(CompatibilityError):
        load_checkpoint(tmp_path / "none.kgp")
    model = tiny_model()
    state = model.state_dict()
    del state["cls.w0"]
    with pytest.raises(CompatibilityError):
        model.load_state_dict(state)
    bad = model.state_dict()
    bad["cls.w0"] = np.zeros((1, 1))
    with pytest.raises(CompatibilityError):
        model.load_state_dict(bad)


def test_frozen_embeddings_not_parameters():
    model = KGPoolModel(tiny_config(train_embeddings=False), tiny_vocab(), RELATIONS)
    assert "embeddings" not in model.parameters()
    assert "embeddings" in model.state_dict()
