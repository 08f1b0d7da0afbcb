import pytest

from kgpool.config import Config
from kgpool.errors import ConfigError


def test_defaults_match_training_setup():
    c = Config()
    assert (c.learning_rate, c.batch_size, c.beta1, c.beta2, c.epsilon) == (0.001, 50, 0.9, 0.999, 1e-8)
    assert (c.max_epochs, c.dropout, c.pool_blocks, c.alpha) == (14, 0.5, (3,), 1.0)
    assert c.validate() == []


@pytest.mark.parametrize("header", ["", "[kgpool]\n"])
def test_from_file(tmp_path, header):
    path = tmp_path / "run.cfg"
    path.write_text(header + "learning_rate = 0.01\npool_blocks = 1,2,3  # every block\n"
                    "grad_clip = none\nchar_encoder = yes\n")
    c = Config.from_file(path)
    assert c.learning_rate == 0.01 and c.pool_blocks == (1, 2, 3)
    assert c.grad_clip is None and c.char_encoder is True


def test_overrides_take_precedence(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("context_coefficient = 3\nseed = 4\n")
    c = Config.from_file(path, context_coefficient=2.0, seed=None)
    assert c.alpha == 2.0 and c.seed == 4


def test_write_round_trip(tmp_path):
    c = Config(pool_blocks=(1, 3), grad_clip=5.0, aggregator="lstm", classifier_hidden=(8, 4))
    c.write(tmp_path / "c.cfg")
    assert Config.from_file(tmp_path / "c.cfg") == c
    Config().write(tmp_path / "d.cfg")
    assert Config.from_file(tmp_path / "d.cfg") == Config()


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="colour"):
        Config.from_dict({"colour": "red"})


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        Config.from_file(tmp_path / "nope.cfg")
    (tmp_path / "bad.cfg").write_text("batch_size = many\nchar_encoder = maybe\n")
    with pytest.raises(ConfigError) as exc:
        Config.from_file(tmp_path / "bad.cfg")
    assert "batch_size" in str(exc.value) and "char_encoder" in str(exc.value)


def test_validation_lists_every_problem():
    c = Config(learning_rate=0, batch_size=0, context_coefficient=-1, dropout=1.0, aggregator="cnn",
               pool_blocks=(4,), beta1=1.0)
    errs = c.validate()
    assert len(errs) == 7
    with pytest.raises(ConfigError) as exc:
        c.check()
    for e in errs:
        assert e in str(exc.value)
