"""Per-token input vectors: word embeddings, character BiLSTM embeddings and
precomputed contextual layers combined by a learned scalar mix."""

from __future__ import annotations

import struct
from collections import Counter
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .nn import DTYPE, BiLstm, ParamStore, glorot, softmax
from .treebank import Sentence, Token

UNK = "<unk>"
CTXV_MAGIC = b"CTXV"
CTXV_VERSION = 1

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3


class ContextualStoreError(ValueError):
    pass


def fnv1a_64(data: bytes) -> int:
    h = FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def forms_checksum(forms: Sequence[str]) -> int:
    return fnv1a_64("\x01".join(forms).encode("utf-8"))


# --------------------------------------------------------------------------
# contextual vectors


class ContextualStore:
    """Read-only view of a CTXV file: per-sentence (N, L, D) tensors.

    Checksums are verified when a sentence is fetched with its forms, so a
    store built for a different treebank fails loudly at first use.
    """

    def __init__(self, n_layers: int, dim: int, entries: dict[str, tuple[int, np.ndarray]]):
        self.n_layers = n_layers
        self.dim = dim
        self._entries = entries

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key) -> bool:
        return str(key) in self._entries

    def keys(self) -> list[str]:
        return list(self._entries)

    def checksum(self, key) -> int:
        return self._entries[str(key)][0]

    def get(self, key, forms: Sequence[str] | None = None) -> np.ndarray:
        key = str(key)
        if key not in self._entries:
            raise ContextualStoreError(f"sentence {key!r} not in contextual store")
        checksum, tensor = self._entries[key]
        if forms is not None:
            if len(forms) != tensor.shape[0]:
                raise ContextualStoreError(
                    f"sentence {key}: store has {tensor.shape[0]} tokens, treebank has {len(forms)}")
            if forms_checksum(forms) != checksum:
                raise ContextualStoreError(f"sentence {key}: token forms checksum mismatch")
        return tensor.astype(DTYPE)

    def verify(self, sentences: Iterable[Sentence]) -> list[str]:
        """Keys of sentences whose stored checksum disagrees (or are missing)."""
        bad = []
        for k, sent in enumerate(sentences):
            key = str(sent.index if sent.index is not None else k)
            if key not in self._entries or forms_checksum(sent.forms) != self._entries[key][0]:
                bad.append(key)
        return bad


def write_contextual_store(path: str | Path, items: Mapping[str, tuple[Sequence[str], np.ndarray]]) -> None:
    """Write ``{key: (forms, tensor[N, L, D])}`` in CTXV layout."""
    shapes = {np.shape(t)[1:] for _, t in items.values()}
    if len(shapes) > 1:
        raise ValueError(f"inconsistent (L, D) across sentences: {shapes}")
    L, D = shapes.pop() if shapes else (0, 0)
    parts = [CTXV_MAGIC, struct.pack("<IIIQ", CTXV_VERSION, L, D, len(items))]
    for key, (forms, tensor) in items.items():
        tensor = np.asarray(tensor)
        if tensor.shape[0] != len(forms):
            raise ValueError(f"sentence {key}: {len(forms)} forms but {tensor.shape[0]} rows")
        raw = str(key).encode("utf-8")
        parts.append(struct.pack("<I", len(raw)) + raw)
        parts.append(struct.pack("<QI", forms_checksum(forms), tensor.shape[0]))
        parts.append(np.ascontiguousarray(tensor, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_contextual_store(path: str | Path) -> ContextualStore:
    data = Path(path).read_bytes()
    if data[:4] != CTXV_MAGIC:
        raise ContextualStoreError(f"{path}: bad magic, not a CTXV file")
    try:
        version, L, D, count = struct.unpack_from("<IIIQ", data, 4)
        if version != CTXV_VERSION:
            raise ContextualStoreError(f"{path}: unsupported CTXV version {version}")
        pos = 24
        entries = {}
        for _ in range(count):
            (klen,) = struct.unpack_from("<I", data, pos)
            pos += 4
            key = data[pos:pos + klen].decode("utf-8")
            pos += klen
            checksum, n = struct.unpack_from("<QI", data, pos)
            pos += 12
            size = n * L * D
            if pos + 4 * size > len(data):
                raise ContextualStoreError(f"{path}: truncated tensor for sentence {key!r}")
            tensor = np.frombuffer(data, dtype="<f4", count=size, offset=pos).reshape(n, L, D)
            pos += 4 * size
            entries[key] = (checksum, tensor)
    except struct.error:
        raise ContextualStoreError(f"{path}: truncated CTXV file") from None
    return ContextualStore(L, D, entries)


# --------------------------------------------------------------------------
# word embeddings


def load_embeddings_text(path: str | Path) -> dict[str, np.ndarray]:
    """Read the "count dim" header format, one "form v1 ... vD" per line."""
    vectors = {}
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2:
            raise ValueError(f"{path}: first line must be 'count dim'")
        count, dim = int(header[0]), int(header[1])
        for lineno, line in enumerate(fh, 2):
            parts = line.rstrip("\n").rstrip(" ").split(" ")
            if len(parts) != dim + 1:
                raise ValueError(f"{path}:{lineno}: expected {dim} values, found {len(parts) - 1}")
            vectors[parts[0]] = np.array(parts[1:], dtype=DTYPE)
    if len(vectors) != count:
        raise ValueError(f"{path}: header announces {count} vectors, found {len(vectors)}")
    return vectors


class EmbeddingTable:
    """Trainable word vectors; row 0 is the UNK vector."""

    def __init__(self, store: ParamStore, vocab: Sequence[str], dim: int = 300,
                 pretrained: Mapping[str, np.ndarray] | None = None,
                 name: str = "word.E", trainable: bool = True, create: bool = True):
        self.store, self.name, self.dim = store, name, dim
        self.trainable = trainable
        words = [UNK] + [w for w in vocab if w != UNK]
        self.index = {w: i for i, w in enumerate(words)}
        if create:
            E = glorot(store.rng, (len(words), dim), 1, dim)
            for w, vec in (pretrained or {}).items():
                if w in self.index:
                    if len(vec) != dim:
                        raise ValueError(f"pretrained vector for {w!r} has dim {len(vec)}, expected {dim}")
                    E[self.index[w]] = vec
            store.add(name, E, sparse=True)

    @property
    def words(self) -> list[str]:
        return list(self.index)

    @property
    def vectors(self) -> np.ndarray:
        return self.store[self.name]

    def row(self, form: str) -> int:
        if form in self.index:
            return self.index[form]
        return self.index.get(form.lower(), 0)

    def rows(self, forms: Sequence[str]) -> np.ndarray:
        return np.array([self.row(f) for f in forms], dtype=np.intp)

    def backward(self, rows: np.ndarray, dE: np.ndarray) -> None:
        if not self.trainable:
            return
        np.add.at(self.store.grads[self.name], rows, dE)
        self.store.touch(self.name, rows)


def lookup_word(form: str, table: EmbeddingTable) -> np.ndarray:
    """Exact form, then lowercased form, then UNK."""
    return table.vectors[table.row(form)]


# --------------------------------------------------------------------------
# characters


class CharEmbedder:
    """Single-layer character BiLSTM; a form is represented by the final
    forward state concatenated with the final backward state."""

    def __init__(self, store: ParamStore, chars: Sequence[str], char_dim: int = 50,
                 hidden: int = 100, name: str = "char", create: bool = True):
        self.store, self.name = store, name
        self.char_dim, self.hidden = char_dim, hidden
        self.index = {c: i for i, c in enumerate([""] + [c for c in chars if c])}
        if create:
            store.add(f"{name}.E", glorot(store.rng, (len(self.index), char_dim), 1, char_dim),
                      sparse=True)
        self.bilstm = BiLstm(store, f"{name}.bilstm", char_dim, hidden, 1, create=create)

    @property
    def dim(self) -> int:
        return 2 * self.hidden

    @property
    def chars(self) -> list[str]:
        return list(self.index)[1:]

    def forward(self, form: str):
        vecs, cache = self.forward_many([form])
        return vecs[0], cache

    def backward(self, dvec, cache) -> None:
        self.backward_many(np.asarray(dvec)[None], cache)

    def forward_many(self, forms: Sequence[str]):
        """(len(forms), 2 * hidden) embeddings from one padded batch."""
        lengths = [max(1, len(f)) for f in forms]
        rows = np.zeros((len(forms), max(lengths)), dtype=np.intp)
        for k, f in enumerate(forms):
            rows[k, :len(f)] = [self.index.get(c, 0) for c in f]
        X = self.store[f"{self.name}.E"][rows]
        for k, n in enumerate(lengths):
            X[k, n:] = 0.0
        out, cache = self.bilstm.forward(X, lengths=lengths)
        h = self.hidden
        last = np.array(lengths) - 1
        batch = np.arange(len(forms))
        vecs = np.concatenate([out[batch, last, :h], out[:, 0, h:]], axis=1)
        return vecs, (rows, lengths, out.shape, cache)

    def backward_many(self, dvecs, cache) -> None:
        rows, lengths, shape, bcache = cache
        h = self.hidden
        dOut = np.zeros(shape)
        batch = np.arange(len(lengths))
        dOut[batch, np.array(lengths) - 1, :h] = dvecs[:, :h]
        dOut[:, 0, h:] += dvecs[:, h:]
        dX = self.bilstm.backward(dOut, bcache)
        mask = np.arange(rows.shape[1])[None, :] < np.array(lengths)[:, None]
        name = f"{self.name}.E"
        np.add.at(self.store.grads[name], rows[mask], dX[mask])
        self.store.touch(name, rows[mask])


def char_embed(form: str, chars: CharEmbedder) -> np.ndarray:
    return chars.forward(form)[0]


# --------------------------------------------------------------------------
# scalar mix


class ScalarMix:
    """gamma * sum_j softmax(s_raw)_j * layer_j with trainable s_raw, gamma."""

    def __init__(self, store: ParamStore, n_layers: int, name: str = "mix", create: bool = True):
        self.store, self.name, self.n_layers = store, name, n_layers
        if create:
            store.add(f"{name}.s", np.zeros(n_layers))
            store.add(f"{name}.gamma", np.ones(1))

    @classmethod
    def from_values(cls, s_raw, gamma: float) -> "ScalarMix":
        store = ParamStore()
        mix = cls(store, len(s_raw))
        store[f"{mix.name}.s"][:] = s_raw
        store[f"{mix.name}.gamma"][:] = gamma
        return mix

    @property
    def s_raw(self) -> np.ndarray:
        return self.store[f"{self.name}.s"]

    @property
    def gamma(self) -> float:
        return float(self.store[f"{self.name}.gamma"][0])

    @property
    def weights(self) -> np.ndarray:
        return softmax(self.s_raw)

    def forward(self, T: np.ndarray):
        """Mix a (..., L, D) tensor over its layer axis."""
        T = np.asarray(T, dtype=DTYPE)
        if T.shape[-2] != self.n_layers:
            raise ValueError(f"expected {self.n_layers} layers, got {T.shape[-2]}")
        w = self.weights
        mixed = np.einsum("...ld,l->...d", T, w)
        return self.gamma * mixed, (T, w, mixed)

    def backward(self, dOut, cache) -> None:
        T, w, mixed = cache
        g = self.store.grads
        g[f"{self.name}.gamma"] += np.sum(dOut * mixed)
        dw = self.gamma * np.einsum("...ld,...d->...l", T, dOut).reshape(-1, self.n_layers).sum(axis=0)
        g[f"{self.name}.s"] += w * (dw - np.dot(w, dw))


def scalar_mix(layers, mix: ScalarMix) -> np.ndarray:
    layers = np.asarray(layers, dtype=DTYPE)
    if layers.ndim != 2:
        raise ValueError("scalar_mix expects L vectors of a common dimension")
    return mix.forward(layers)[0]


# --------------------------------------------------------------------------
# full token representation


def parse_layer_range(layer_range: str | Sequence[int] | None, n_layers: int) -> tuple[int, int]:
    """"A-B" (inclusive, 0-based) -> (A, B); None means every stored layer."""
    if layer_range is None:
        lo, hi = 0, n_layers - 1
    elif isinstance(layer_range, str):
        try:
            a, b = layer_range.split("-")
            lo, hi = int(a), int(b)
        except ValueError:
            raise ValueError(f"layer range must look like 'A-B', got {layer_range!r}") from None
    else:
        lo, hi = int(layer_range[0]), int(layer_range[1])
    if not 0 <= lo <= hi < n_layers:
        raise ValueError(f"layer range {lo}-{hi} outside stored layers 0-{n_layers - 1}")
    return lo, hi


class Featurizer:
    """Builds the (N, d) input matrix for a sentence and routes gradients
    back to the word table, character BiLSTM and scalar mix."""

    def __init__(self, words: EmbeddingTable, chars: CharEmbedder,
                 mix: ScalarMix | None = None, ctx_dim: int = 0,
                 layer_range: tuple[int, int] | None = None):
        self.words, self.chars, self.mix = words, chars, mix
        self.ctx_dim = ctx_dim
        self.layer_range = layer_range

    @property
    def dim(self) -> int:
        return self.words.dim + self.chars.dim + (self.ctx_dim if self.mix else 0)

    def forward(self, sentence: Sentence, ctx: np.ndarray | None = None):
        rows = self.words.rows(sentence.forms)
        parts = [self.words.vectors[rows]]
        char_vecs, char_cache = self.chars.forward_many(sentence.forms)
        parts.append(char_vecs)
        mix_cache = None
        if self.mix is not None:
            if ctx is None:
                raise ValueError("this featurizer needs contextual vectors")
            lo, hi = self.layer_range
            if hi >= ctx.shape[1]:
                raise ValueError(f"layer range {lo}-{hi} outside stored layers 0-{ctx.shape[1] - 1}")
            mixed, mix_cache = self.mix.forward(ctx[:, lo:hi + 1, :])
            parts.append(mixed)
        return np.concatenate(parts, axis=1), (rows, char_cache, mix_cache)

    def backward(self, dX, cache) -> None:
        rows, char_cache, mix_cache = cache
        wd, cd = self.words.dim, self.chars.dim
        self.words.backward(rows, dX[:, :wd])
        self.chars.backward_many(dX[:, wd:wd + cd], char_cache)
        if mix_cache is not None:
            self.mix.backward(dX[:, wd + cd:], mix_cache)


def token_vector(token: Token, sentence: Sentence, table: EmbeddingTable, chars: CharEmbedder,
                 ctx: ContextualStore | None = None, mix: ScalarMix | None = None,
                 layer_range=None) -> np.ndarray:
    """Input vector of one token: [word; chars] or [word; chars; mixed context]."""
    parts = [lookup_word(token.form, table), char_embed(token.form, chars)]
    if ctx is not None:
        lo, hi = parse_layer_range(layer_range, ctx.n_layers)
        key = sentence.index if sentence.index is not None else 0
        tensor = ctx.get(key, sentence.forms)
        if mix is None:
            mix = ScalarMix.from_values(np.zeros(hi - lo + 1), 1.0)
        parts.append(scalar_mix(tensor[token.id - 1, lo:hi + 1], mix))
    return np.concatenate(parts)


def vocabulary(sentences: Iterable[Sentence]) -> tuple[list[str], list[str]]:
    """Word forms and characters in first-seen order (deterministic)."""
    words: Counter = Counter()
    chars: dict[str, None] = {}
    for sent in sentences:
        for form in sent.forms:
            words[form] += 1
            for c in form:
                chars.setdefault(c, None)
    return list(words), list(chars)
