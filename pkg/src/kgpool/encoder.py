"""Word vocabularies and bidirectional LSTM sequence encoders."""

from __future__ import annotations

import hashlib
from pathlib import Path
from typing import Sequence

import numpy as np

from kgpool import kernels
from kgpool.errors import ConfigError, EncodingError, ParseError
from kgpool.tensor import Tensor, _accum, _result, concat, take_rows

UNK = "<unk>"
PAD = "<pad>"


class Vocabulary:
    """Token index plus a trainable embedding table.

    Lookup tries the exact token, then its lowercase form, then UNK. The
    PAD row is zero and never used as encoder input, so it receives no
    gradient and stays zero under Adam.
    """

    def __init__(self, tokens: Sequence[str], vectors: np.ndarray):
        tokens = list(tokens)
        if len(tokens) != vectors.shape[0]:
            raise ConfigError(f"{len(tokens)} tokens but {vectors.shape[0]} vectors")
        self.tokens = tokens
        self.index = {tok: i for i, tok in enumerate(tokens)}
        if UNK not in self.index or PAD not in self.index:
            raise ConfigError("vocabulary needs UNK and PAD entries")
        self.unk = self.index[UNK]
        self.pad = self.index[PAD]
        self.embeddings = Tensor(vectors, requires_grad=True, name="embeddings")

    @classmethod
    def build(cls, tokens, vectors) -> "Vocabulary":
        """Append UNK and PAD (both zero rows) to file tokens."""
        vectors = np.asarray(vectors, dtype=np.float64).reshape(len(tokens), -1)
        dim = vectors.shape[1]
        table = np.vstack([vectors, np.zeros((2, dim))])
        return cls(list(tokens) + [UNK, PAD], table)

    @classmethod
    def random(cls, tokens, dim: int, rng: np.random.Generator, scale: float = 0.5):
        return cls.build(tokens, rng.uniform(-scale, scale, size=(len(tokens), dim)))

    def copy(self) -> "Vocabulary":
        return Vocabulary(self.tokens, self.embeddings.data.copy())

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]

    def __len__(self) -> int:
        return len(self.tokens)

    def lookup(self, token: str) -> int:
        i = self.index.get(token)
        if i is None:
            i = self.index.get(token.lower(), self.unk)
        return i

    def ids(self, tokens: Sequence[str]) -> np.ndarray:
        return np.array([self.lookup(t) for t in tokens], dtype=np.intp)

    def digest(self) -> str:
        h = hashlib.sha256()
        for tok in self.tokens:
            h.update(tok.encode("utf-8"))
            h.update(b"\n")
        return h.hexdigest()


def load_embeddings(path: str | Path, dim: int) -> Vocabulary:
    """Read a word-vector text file: ``token f1 ... fdim`` per line, UTF-8."""
    path = Path(path)
    tokens, rows = [], []
    seen = set()
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").rstrip("\r").split(" ")
            parts = [p for p in parts if p != ""]
            if not parts:
                raise ParseError("empty line", line=lineno, path=path)
            token, values = parts[0], parts[1:]
            if len(values) != dim:
                raise ConfigError(f"{path}:line {lineno}: expected {dim} values, found {len(values)}")
            try:
                row = [float(v) for v in values]
            except ValueError:
                raise ParseError(f"non-numeric value in vector for {token!r}", line=lineno, path=path) from None
            if token in seen:
                raise ParseError(f"duplicate token {token!r}", line=lineno, path=path)
            seen.add(token)
            tokens.append(token)
            rows.append(row)
    vectors = np.array(rows, dtype=np.float64).reshape(len(rows), dim)
    return Vocabulary.build(tokens, vectors)


def write_embeddings(path: str | Path, tokens: Sequence[str], vectors: np.ndarray) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for tok, row in zip(tokens, vectors):
            fh.write(tok + " " + " ".join(repr(float(x)) for x in row) + "\n")


# --------------------------------------------------------------- Bi-LSTM op


def _pad_projection(xw_flat: np.ndarray, lengths: np.ndarray, reverse: bool) -> tuple[np.ndarray, np.ndarray]:
    """Scatter ``[N, 4H]`` position rows into a ``[T, B, 4H]`` padded block.

    Returns the block and the flat source row for every (t, b) cell (-1 for
    padding) so gradients can be gathered back.
    """
    B = len(lengths)
    T = int(lengths.max()) if B else 0
    starts = np.concatenate([[0], np.cumsum(lengths)[:-1]]).astype(np.intp)
    src = np.full((T, B), -1, dtype=np.intp)
    for b in range(B):
        n = lengths[b]
        pos = starts[b] + np.arange(n)
        src[:n, b] = pos[::-1] if reverse else pos
    block = np.zeros((T, B, xw_flat.shape[1]))
    live = src >= 0
    block[live] = xw_flat[src[live]]
    return block, src


def bilstm(x: Tensor, lengths, w_f, u_f, b_f, w_b, u_b, b_b) -> Tensor:
    """Final forward state concatenated with final backward state.

    ``x`` stacks the input rows of every sequence back to back
    (``sum(lengths)`` rows); the result has one ``[1, 2H]`` row per sequence.
    """
    lengths = np.asarray(lengths, dtype=np.int64)
    if np.any(lengths < 1):
        raise EncodingError("cannot encode an empty sequence")
    if x.shape[0] != int(lengths.sum()):
        raise ConfigError(f"{x.shape[0]} input rows for total length {int(lengths.sum())}")
    if w_f.shape[0] != x.shape[1]:
        raise ConfigError(f"encoder expects input dim {w_f.shape[0]}, got {x.shape[1]}")
    H = u_f.shape[0]
    runs = []
    for w, u, b, rev in ((w_f, u_f, b_f, False), (w_b, u_b, b_b, True)):
        xw = x.data @ w.data + b.data
        block, src = _pad_projection(xw, lengths, rev)
        hs, cs, gates = kernels.lstm_forward(block, u.data, lengths)
        runs.append((w, u, b, src, hs, cs, gates))
    out = np.concatenate([runs[0][4][-1], runs[1][4][-1]], axis=1)

    def backward(g):
        dx = np.zeros_like(x.data) if x.requires_grad else None
        for k, (w, u, b, src, hs, cs, gates) in enumerate(runs):
            dz, du = kernels.lstm_backward(g[:, k * H:(k + 1) * H], hs, cs, gates, u.data, lengths)
            live = src >= 0
            dflat = np.zeros((x.shape[0], 4 * H))
            dflat[src[live]] = dz[live]
            _accum(u, du)
            _accum(w, x.data.T @ dflat)
            _accum(b, dflat.sum(axis=0, keepdims=True))
            if dx is not None:
                dx += dflat @ w.data.T
        if dx is not None:
            _accum(x, dx)

    return _result(out, (x, w_f, u_f, b_f, w_b, u_b, b_b), backward)


class BiLSTM:
    """Parameters of one bidirectional single-layer LSTM."""

    def __init__(self, d_in: int, d_h: int, rng: np.random.Generator | None = None,
                 name: str = "bilstm", scale: float = 1.0):
        self.d_in, self.d_h = d_in, d_h
        self.name = name
        bound = scale / np.sqrt(d_h)
        params = {}
        for tag in ("f", "b"):
            if rng is None:
                w = np.zeros((d_in, 4 * d_h))
                u = np.zeros((d_h, 4 * d_h))
                b = np.zeros((1, 4 * d_h))
            else:
                w = rng.uniform(-bound, bound, size=(d_in, 4 * d_h))
                u = rng.uniform(-bound, bound, size=(d_h, 4 * d_h))
                b = np.zeros((1, 4 * d_h))
                b[0, d_h:2 * d_h] = 1.0  # forget gate open at start
            params[f"w_{tag}"] = Tensor(w, requires_grad=True, name=f"{name}.w_{tag}")
            params[f"u_{tag}"] = Tensor(u, requires_grad=True, name=f"{name}.u_{tag}")
            params[f"b_{tag}"] = Tensor(b, requires_grad=True, name=f"{name}.b_{tag}")
        self.params = params

    @property
    def out_dim(self) -> int:
        return 2 * self.d_h

    def parameters(self) -> dict[str, Tensor]:
        return {f"{self.name}.{k}": v for k, v in self.params.items()}

    def __call__(self, x: Tensor, lengths) -> Tensor:
        p = self.params
        return bilstm(x, lengths, p["w_f"], p["u_f"], p["b_f"], p["w_b"], p["u_b"], p["b_b"])


class CharEncoder:
    """Character embeddings plus a Bi-LSTM over each token's characters."""

    def __init__(self, alphabet: Sequence[str], char_dim: int, char_hidden: int,
                 rng: np.random.Generator | None = None, scale: float = 1.0):
        chars = sorted(set(alphabet))
        self.index = {c: i + 1 for i, c in enumerate(chars)}  # 0 = unknown char
        self.alphabet = chars
        table = np.zeros((len(chars) + 1, char_dim)) if rng is None else \
            rng.uniform(-0.5, 0.5, size=(len(chars) + 1, char_dim))
        self.embeddings = Tensor(table, requires_grad=True, name="chars.embeddings")
        self.lstm = BiLSTM(char_dim, char_hidden, rng, name="chars.bilstm", scale=scale)

    @property
    def out_dim(self) -> int:
        return self.lstm.out_dim

    def parameters(self) -> dict[str, Tensor]:
        return {"chars.embeddings": self.embeddings, **self.lstm.parameters()}

    def encode_tokens(self, tokens: Sequence[str]) -> Tensor:
        """One ``2*char_hidden`` row per token."""
        ids, lengths = [], []
        for tok in tokens:
            if not tok:
                raise EncodingError("empty token")
            ids.extend(self.index.get(c, 0) for c in tok)
            lengths.append(len(tok))
        x = take_rows(self.embeddings, np.array(ids, dtype=np.intp))
        return self.lstm(x, lengths)


def sequence_inputs(token_lists: Sequence[Sequence[str]], vocab: Vocabulary,
                    chars: CharEncoder | None = None) -> tuple[Tensor, np.ndarray]:
    """Stacked per-token input rows and lengths for a batch of sequences."""
    lengths = np.array([len(t) for t in token_lists], dtype=np.int64)
    if np.any(lengths == 0):
        raise EncodingError("cannot encode an empty token list")
    flat = [tok for toks in token_lists for tok in toks]
    x = take_rows(vocab.embeddings, vocab.ids(flat))
    if chars is not None:
        x = concat([x, chars.encode_tokens(flat)], axis=1)
    return x, lengths


def encode_sequence(tokens: Sequence[str], params: BiLSTM, vocab: Vocabulary) -> Tensor:
    """Encode one token list into a ``[1, 2*d_h]`` vector."""
    if len(tokens) == 0:
        raise EncodingError("cannot encode an empty token list; substitute a placeholder token")
    x, lengths = sequence_inputs([tokens], vocab)
    return params(x, lengths)


def encode_with_chars(tokens: Sequence[str], word_params: BiLSTM, char_params: CharEncoder | None,
                      vocab: Vocabulary) -> Tensor:
    """Like :func:`encode_sequence` with word vectors extended by char encodings.

    With ``char_params=None`` this is exactly :func:`encode_sequence`.
    """
    if char_params is None:
        return encode_sequence(tokens, word_params, vocab)
    if len(tokens) == 0:
        raise EncodingError("cannot encode an empty token list; substitute a placeholder token")
    x, lengths = sequence_inputs([tokens], vocab, char_params)
    return word_params(x, lengths)
