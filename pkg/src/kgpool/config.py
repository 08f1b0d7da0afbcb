"""Run configuration: model sizes, pooling placement and optimiser settings.

Config files are flat ``key = value`` text, read with :mod:`configparser`.
A ``[kgpool]`` section header is optional. Keys use the field names below::

    learning_rate = 0.001
    batch_size = 50
    context_coefficient = 1
    pool_blocks = 3
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path

from kgpool.errors import ConfigError


@dataclass
class Config:
    # graph construction / encoders
    word_dim: int = 50
    lstm_hidden: int = 50
    char_encoder: bool = False
    char_dim: int = 16
    char_hidden: int = 8
    alias_mode: str = "joined"  # "joined" | "per-alias"
    entity_edge: bool = False
    max_nodes: int = 64
    max_attr_tokens: int = 64
    train_embeddings: bool = True

    # context pooling
    gcn_hidden: int = 128
    n_blocks: int = 3
    pool_blocks: tuple[int, ...] = (3,)
    readout_after_pool: bool = True
    context_coefficient: float = 1.0

    # aggregator / classifier
    aggregator: str = "gnn"  # "gnn" | "lstm"
    agg_hidden: int = 256
    agg_rounds: int = 2
    classifier_hidden: tuple[int, ...] = (256,)
    dropout: float = 0.5

    # optimisation
    learning_rate: float = 0.001
    batch_size: int = 50
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    max_epochs: int = 14
    grad_clip: float | None = None
    seed: int = 0
    init_scale: float = 1.0

    @property
    def alpha(self) -> float:
        return self.context_coefficient

    def validate(self) -> list[str]:
        """Every problem with this config, as human-readable strings."""
        errs = []
        if self.learning_rate <= 0:
            errs.append("learning_rate must be > 0")
        if self.batch_size < 1:
            errs.append("batch_size must be >= 1")
        if self.context_coefficient < 0:
            errs.append("context_coefficient must be >= 0")
        if self.max_epochs < 1:
            errs.append("max_epochs must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            errs.append("dropout must be in [0, 1)")
        if self.aggregator not in ("gnn", "lstm"):
            errs.append(f"aggregator must be 'gnn' or 'lstm', got {self.aggregator!r}")
        if self.alias_mode not in ("joined", "per-alias"):
            errs.append(f"alias_mode must be 'joined' or 'per-alias', got {self.alias_mode!r}")
        if self.n_blocks < 1:
            errs.append("n_blocks must be >= 1")
        bad = [b for b in self.pool_blocks if not 1 <= b <= self.n_blocks]
        if bad:
            errs.append(f"pool_blocks {bad} outside 1..{self.n_blocks}")
        if self.max_nodes < 3:
            errs.append("max_nodes must be >= 3")
        if self.grad_clip is not None and self.grad_clip <= 0:
            errs.append("grad_clip must be > 0 when set")
        for name in ("word_dim", "lstm_hidden", "gcn_hidden", "agg_hidden", "char_dim",
                     "char_hidden", "max_attr_tokens"):
            if getattr(self, name) < 1:
                errs.append(f"{name} must be >= 1")
        if not 0 <= self.beta1 < 1 or not 0 <= self.beta2 < 1:
            errs.append("beta1 and beta2 must lie in [0, 1)")
        return errs

    def check(self) -> "Config":
        errs = self.validate()
        if errs:
            raise ConfigError("invalid config:\n  " + "\n  ".join(errs))
        return self

    def replace(self, **changes) -> "Config":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        for k, v in out.items():
            if isinstance(v, tuple):
                out[k] = list(v)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Config":
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        kwargs = {}
        errs = []
        for key, raw in data.items():
            try:
                kwargs[key] = _coerce(known[key], raw)
            except (TypeError, ValueError) as exc:
                errs.append(f"{key}: {exc}")
        if errs:
            raise ConfigError("invalid config:\n  " + "\n  ".join(errs))
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str | Path, **overrides) -> "Config":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        text = path.read_text(encoding="utf-8")
        if not text.lstrip().startswith("["):
            text = "[kgpool]\n" + text
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        try:
            parser.read_string(text, source=str(path))
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
        values = {}
        for section in parser.sections():
            values.update(parser[section])
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(values)

    def write(self, path: str | Path) -> None:
        lines = []
        for k, v in self.to_dict().items():
            if isinstance(v, list):
                v = ",".join(str(x) for x in v)
            lines.append(f"{k} = {'none' if v is None else v}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _coerce(f: dataclasses.Field, raw):
    ftype = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", str(f.type))
    if not isinstance(raw, str):
        if "tuple" in ftype:
            return tuple(int(x) for x in (raw if isinstance(raw, (list, tuple)) else [raw]))
        if ftype == "float | None" and raw is None:
            return None
        if ftype == "bool":
            return bool(raw)
        if ftype == "int":
            return int(raw)
        if ftype.startswith("float"):
            return float(raw)
        return raw
    s = raw.strip()
    if "tuple" in ftype:
        return tuple(int(x) for x in s.replace("&", ",").split(",") if x.strip())
    if ftype == "bool":
        low = s.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {s!r}")
    if ftype == "int":
        return int(s)
    if ftype == "float":
        return float(s)
    if ftype == "float | None":
        return None if s.lower() in ("", "none", "off") else float(s)
    return s
