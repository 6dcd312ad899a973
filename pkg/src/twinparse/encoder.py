"""Sentence BiLSTM shared by the arc/transition scorer and the label scorer
of one parser."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nn import DTYPE, BiLstm, ParamStore, glorot


@dataclass
class EncodedSentence:
    vectors: np.ndarray  # (N + 1, 2 * hidden); row 0 is ROOT
    pad: np.ndarray      # (2 * hidden,)

    def __len__(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]


class SentenceEncoder:
    """BiLSTM over [w_1 .. w_N, root]. The trained ROOT input sits at the end
    of the sequence (where ROOT sits in the transition buffer); its output is
    moved to index 0 so that vector k belongs to token k."""

    def __init__(self, store: ParamStore, d_in: int, hidden: int = 125, layers: int = 2,
                 dropout: float = 0.33, name: str = "enc", create: bool = True):
        self.store, self.name = store, name
        self.d_in, self.hidden, self.n_layers = d_in, hidden, layers
        if create:
            store.add(f"{name}.root", glorot(store.rng, (d_in,), 1, d_in))
            store.add(f"{name}.pad", glorot(store.rng, (2 * hidden,), 1, 2 * hidden))
        self.bilstm = BiLstm(store, f"{name}.bilstm", d_in, hidden, layers, dropout, create)

    @property
    def dim(self) -> int:
        return 2 * self.hidden

    def forward(self, X: np.ndarray, train: bool = False, rng: np.random.Generator | None = None):
        X = np.asarray(X, dtype=DTYPE)
        if X.ndim != 2 or X.shape[0] == 0:
            raise ValueError("cannot encode an empty sentence")
        seq = np.vstack([X, self.store[f"{self.name}.root"]])
        out, cache = self.bilstm.forward(seq, train, rng)
        vectors = np.vstack([out[-1:], out[:-1]])
        return EncodedSentence(vectors, self.store[f"{self.name}.pad"]), cache

    def backward(self, dvectors: np.ndarray, dpad: np.ndarray | None, cache) -> np.ndarray:
        """Gradient w.r.t. the token inputs (N, d_in)."""
        dout = np.vstack([dvectors[1:], dvectors[:1]])
        dseq = self.bilstm.backward(dout, cache)
        g = self.store.grads
        g[f"{self.name}.root"] += dseq[-1]
        if dpad is not None:
            g[f"{self.name}.pad"] += dpad
        return dseq[:-1]


def encode(sentence, token_vectors, encoder: SentenceEncoder) -> EncodedSentence:
    if len(token_vectors) != len(sentence):
        raise ValueError("one token vector per token is required")
    return encoder.forward(np.asarray(token_vectors))[0]
