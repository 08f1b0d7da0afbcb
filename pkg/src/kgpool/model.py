"""The full relation classifier: encoders, context pooling, aggregator, MLP."""

from __future__ import annotations

import io
import json
import zipfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from kgpool.aggregator import Classifier, GnnAggregator, LstmAggregator, joint_representation
from kgpool.config import Config
from kgpool.encoder import BiLSTM, CharEncoder, Vocabulary
from kgpool.errors import CompatibilityError, ConfigError
from kgpool.graph import HIG, NA, EntityAttributes, Encoders, SentenceInstance, hig_layout, lookup_warn
from kgpool.pooling import ContextGraph, ContextPooler
from kgpool.tensor import Tensor, concat, take_rows

CHECKPOINT_VERSION = 1

AttributeStore = Mapping[str, EntityAttributes]


def attributes_for(inst: SentenceInstance, store: AttributeStore | None):
    if store is None:
        return (None, None)
    return store.get(inst.head.kg_id), store.get(inst.tail.kg_id)


@dataclass
class ForwardResult:
    probs: Tensor
    higs: list[HIG]
    cgs: list[ContextGraph]
    warnings: list = field(default_factory=list)


class KGPoolModel:
    def __init__(self, config: Config, vocab: Vocabulary, relations: Sequence[str],
                 alphabet: Sequence[str] | None = None):
        config.check()
        if vocab.dim != config.word_dim:
            raise ConfigError(f"embedding dim {vocab.dim} differs from word_dim {config.word_dim}")
        relations = list(relations)
        if NA not in relations:
            raise ConfigError("relation vocabulary must contain NA")
        self.config = config
        self.vocab = vocab
        self.relations = relations
        self.rel_index = {r: i for i, r in enumerate(relations)}
        self.na_index = self.rel_index[NA]
        rng = np.random.default_rng(config.seed)
        s = config.init_scale
        chars = None
        if config.char_encoder:
            if alphabet is None:
                alphabet = sorted({c for tok in vocab.tokens for c in tok})
            chars = CharEncoder(alphabet, config.char_dim, config.char_hidden, rng, scale=s)
        self.alphabet = list(chars.alphabet) if chars is not None else []
        sent_in = config.word_dim + (chars.out_dim if chars is not None else 0)
        self.encoders = Encoders(
            BiLSTM(sent_in, config.lstm_hidden, rng, name="enc.sentence", scale=s),
            BiLSTM(config.word_dim, config.lstm_hidden, rng, name="enc.context", scale=s),
            chars,
        )
        self.pooler = ContextPooler(self.encoders.out_dim, config.gcn_hidden, config.n_blocks,
                                    config.pool_blocks, rng, config.readout_after_pool, scale=s)
        if config.aggregator == "gnn":
            self.aggregator = GnnAggregator(config.gcn_hidden, config.agg_hidden, config.agg_rounds,
                                            rng, config.dropout, scale=s)
        else:
            self.aggregator = LstmAggregator(config.word_dim, config.agg_hidden, rng, config.dropout, scale=s)
        joint = self.aggregator.out_dim + 5 * config.n_blocks * config.gcn_hidden
        self.classifier = Classifier(joint, len(relations), config.classifier_hidden, rng,
                                     config.dropout, scale=s)

    # ------------------------------------------------------------ params

    def parameters(self) -> dict[str, Tensor]:
        out = {}
        if self.config.train_embeddings:
            out["embeddings"] = self.vocab.embeddings
        out.update(self.encoders.parameters())
        out.update(self.pooler.parameters())
        out.update(self.aggregator.parameters())
        out.update(self.classifier.parameters())
        return out

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {k: v.data.copy() for k, v in self.parameters().items()}
        state["embeddings"] = self.vocab.embeddings.data.copy()
        return state

    def load_state_dict(self, state: Mapping[str, np.ndarray]) -> None:
        params = dict(self.parameters())
        params["embeddings"] = self.vocab.embeddings
        missing = sorted(set(params) - set(state))
        if missing:
            raise CompatibilityError(f"checkpoint lacks parameters: {', '.join(missing)}")
        for k, t in params.items():
            arr = np.asarray(state[k], dtype=np.float64)
            if arr.shape != t.shape:
                raise CompatibilityError(f"parameter {k}: shape {arr.shape} != {t.shape}")
            t.data[...] = arr

    # ----------------------------------------------------------- forward

    def layouts(self, instances, attr_pairs, warnings=None):
        c = self.config
        return [hig_layout(inst, lookup_warn(inst, attrs, warnings), c.alias_mode, c.entity_edge,
                           c.max_nodes, c.max_attr_tokens)
                for inst, attrs in zip(instances, attr_pairs)]

    def forward(self, instances: Sequence[SentenceInstance], attr_pairs, *, rng=None,
                alpha: float | None = None, frozen: list[dict] | None = None) -> ForwardResult:
        """Relation distributions for a batch; ``rng`` enables dropout."""
        alpha = self.config.context_coefficient if alpha is None else alpha
        warnings: list = []
        lays = self.layouts(instances, attr_pairs, warnings)
        feats = self.encoders.encode(lays, self.vocab)
        higs = [HIG(l.adjacency, f, l.roles, l.kinds, l.owner, l.texts) for l, f in zip(lays, feats)]
        cgs = [self.pooler(h, alpha, None if frozen is None else frozen[i]) for i, h in enumerate(higs)]
        r = self.aggregator.batch(instances, cgs, vocab=self.vocab, rng=rng)
        joint = concat([joint_representation(take_rows(r, [i]), cg) for i, cg in enumerate(cgs)], axis=0)
        probs = self.classifier(joint, rng)
        return ForwardResult(probs, higs, cgs, warnings)

    def predict(self, instances: Sequence[SentenceInstance], store: AttributeStore | None,
                alpha: float | None = None, batch_size: int = 100):
        """Probabilities ``[N, |R|]`` plus the graphs, without dropout."""
        probs, higs, cgs = [], [], []
        for lo in range(0, len(instances), batch_size):
            chunk = instances[lo:lo + batch_size]
            res = self.forward(chunk, [attributes_for(i, store) for i in chunk], alpha=alpha)
            probs.append(res.probs.data)
            higs.extend(res.higs)
            cgs.extend(res.cgs)
        if not probs:
            return np.zeros((0, len(self.relations))), [], []
        return np.vstack(probs), higs, cgs

    def gold_indices(self, instances: Sequence[SentenceInstance]) -> np.ndarray:
        try:
            return np.array([self.rel_index[i.relation] for i in instances], dtype=np.intp)
        except KeyError as exc:
            raise ConfigError(f"relation {exc.args[0]!r} not in the relation vocabulary") from None


# --------------------------------------------------------------- checkpoints


def _npy_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    np.lib.format.write_array(buf, np.ascontiguousarray(arr), allow_pickle=False)
    return buf.getvalue()


def _write_entry(zf: zipfile.ZipFile, name: str, payload: bytes) -> None:
    info = zipfile.ZipInfo(name, date_time=(1980, 1, 1, 0, 0, 0))
    info.compress_type = zipfile.ZIP_DEFLATED
    info.external_attr = 0o644 << 16
    zf.writestr(info, payload)


def save_checkpoint(path: str | Path, model: KGPoolModel, meta: Mapping | None = None) -> None:
    """Deterministic zip: ``meta.json`` plus one ``.npy`` per parameter."""
    header = {
        "version": CHECKPOINT_VERSION,
        "config": model.config.to_dict(),
        "relations": model.relations,
        "vocab_tokens": model.vocab.tokens,
        "vocab_hash": model.vocab.digest(),
        "alphabet": model.alphabet,
        "meta": dict(meta or {}),
    }
    state = model.state_dict()
    with zipfile.ZipFile(path, "w") as zf:
        _write_entry(zf, "meta.json", json.dumps(header, sort_keys=True).encode("utf-8"))
        for name in sorted(state):
            _write_entry(zf, f"params/{name}.npy", _npy_bytes(state[name]))


def load_checkpoint(path: str | Path) -> tuple[KGPoolModel, dict]:
    path = Path(path)
    if not path.exists():
        raise CompatibilityError(f"checkpoint not found: {path}")
    with zipfile.ZipFile(path) as zf:
        header = json.loads(zf.read("meta.json").decode("utf-8"))
        if header.get("version") != CHECKPOINT_VERSION:
            raise CompatibilityError(f"unsupported checkpoint version {header.get('version')}")
        state = {}
        for name in zf.namelist():
            if name.startswith("params/") and name.endswith(".npy"):
                state[name[len("params/"):-4]] = np.lib.format.read_array(io.BytesIO(zf.read(name)))
    config = Config.from_dict(header["config"])
    emb = state["embeddings"]
    vocab = Vocabulary(header["vocab_tokens"], emb)
    if vocab.digest() != header["vocab_hash"]:
        raise CompatibilityError("vocabulary hash does not match the stored tokens")
    model = KGPoolModel(config, vocab, header["relations"], alphabet=header["alphabet"] or None)
    model.load_state_dict(state)
    return model, header
