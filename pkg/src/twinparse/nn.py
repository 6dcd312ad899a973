"""Small numpy kernel for the parsers: parameters, LSTM/MLP layers with
explicit backward passes, Adam, finite-difference gradient checks and the
binary checkpoint format.

All layers compute in float64. Each layer's ``forward`` returns its output
and an opaque cache; ``backward`` consumes the cache, *accumulates* parameter
gradients into ``store.grads`` and returns the gradient w.r.t. its input.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

DTYPE = np.float64
CHECKPOINT_MAGIC = b"TWNP"
CHECKPOINT_VERSION = 1


def sigmoid(x):
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def softmax(x, axis=-1):
    x = np.asarray(x, dtype=DTYPE)
    z = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def glorot(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape).astype(DTYPE)


class ParamStore:
    """Named float64 tensors plus their gradients and Adam moments.

    Parameters registered with ``sparse=True`` (embedding tables) are updated
    row-wise: only rows listed via :meth:`touch` are zeroed and stepped.
    """

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.step = 0
        self.sparse: set[str] = set()
        self.touched: dict[str, set[int]] = {}

    def add(self, name: str, value: np.ndarray, sparse: bool = False) -> np.ndarray:
        if name in self.params:
            raise KeyError(f"duplicate parameter {name!r}")
        value = np.ascontiguousarray(value, dtype=DTYPE)
        self.params[name] = value
        self.grads[name] = np.zeros_like(value)
        self.m[name] = np.zeros_like(value)
        self.v[name] = np.zeros_like(value)
        if sparse:
            self.sparse.add(name)
            self.touched[name] = set()
        return value

    def __getitem__(self, name: str) -> np.ndarray:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def names(self) -> list[str]:
        return list(self.params)

    def touch(self, name: str, rows) -> None:
        self.touched[name].update(int(r) for r in np.atleast_1d(rows))

    def zero_grad(self) -> None:
        for name, g in self.grads.items():
            if name in self.sparse:
                rows = sorted(self.touched[name])
                g[rows] = 0.0
                self.touched[name].clear()
            else:
                g.fill(0.0)

    def load_values(self, values: Mapping[str, np.ndarray]) -> None:
        missing = set(self.params) - set(values)
        if missing:
            raise KeyError(f"checkpoint lacks parameters {sorted(missing)}")
        for name, arr in self.params.items():
            src = np.asarray(values[name], dtype=DTYPE)
            if src.shape != arr.shape:
                raise ValueError(f"shape mismatch for {name}: {src.shape} vs {arr.shape}")
            arr[...] = src

    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())


def adam_step(store: ParamStore, grads: Mapping[str, np.ndarray] | None = None,
              lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> ParamStore:
    """One bias-corrected Adam update, in place; returns ``store``."""
    if grads is None:
        grads = store.grads
    for name, g in grads.items():
        if g.shape != store.params[name].shape:
            raise ValueError(f"gradient shape {g.shape} does not match {name} {store.params[name].shape}")
    store.step += 1
    t = store.step
    corr1 = 1.0 - beta1 ** t
    corr2 = 1.0 - beta2 ** t
    for name, g in grads.items():
        p, m, v = store.params[name], store.m[name], store.v[name]
        if name in store.sparse:
            rows = np.array(sorted(store.touched[name]), dtype=np.intp)
            if rows.size == 0:
                continue
            gr = g[rows]
            m[rows] = beta1 * m[rows] + (1.0 - beta1) * gr
            v[rows] = beta2 * v[rows] + (1.0 - beta2) * gr * gr
            p[rows] -= lr * (m[rows] / corr1) / (np.sqrt(v[rows] / corr2) + eps)
            continue
        # same arithmetic as the sparse branch, without temporaries
        tmp = _scratch(store, name)
        m *= beta1
        np.multiply(g, 1.0 - beta1, out=tmp)
        m += tmp
        v *= beta2
        np.multiply(g, g, out=tmp)
        tmp *= 1.0 - beta2
        v += tmp
        np.divide(v, corr2, out=tmp)
        np.sqrt(tmp, out=tmp)
        tmp += eps
        np.divide(m, tmp, out=tmp)
        tmp *= lr / corr1
        p -= tmp
    return store


def _scratch(store: ParamStore, name: str) -> np.ndarray:
    buf = store.__dict__.setdefault("_scratch", {})
    if name not in buf:
        buf[name] = np.empty_like(store.params[name])
    return buf[name]


# --------------------------------------------------------------------------
# LSTM


@dataclass
class LstmParams:
    """Gate weights stacked as (4, d_h, d_in + d_h) in order input, forget,
    output, candidate; biases (4, d_h)."""

    W: np.ndarray
    b: np.ndarray

    @property
    def d_h(self) -> int:
        return self.W.shape[1]

    @property
    def d_in(self) -> int:
        return self.W.shape[2] - self.W.shape[1]

    @classmethod
    def zeros(cls, d_in: int, d_h: int) -> "LstmParams":
        return cls(np.zeros((4, d_h, d_in + d_h)), np.zeros((4, d_h)))


def lstm_step(x, h_prev, c_prev, p: LstmParams):
    """Single LSTM cell update; returns (h, c)."""
    x = np.asarray(x, dtype=DTYPE)
    if x.shape != (p.d_in,) or np.shape(h_prev) != (p.d_h,) or np.shape(c_prev) != (p.d_h,):
        raise ValueError("lstm_step: dimension mismatch")
    z = np.einsum("gij,j->gi", p.W, np.concatenate([x, h_prev])) + p.b
    i, f, o = sigmoid(z[0]), sigmoid(z[1]), sigmoid(z[2])
    g = np.tanh(z[3])
    c = f * c_prev + i * g
    h = o * np.tanh(c)
    return h, c


def lstm_forward(X: np.ndarray, W: np.ndarray, b: np.ndarray):
    """Run an LSTM from zero state over time.

    X is (T, d_in), or (B, T, d_in) for a batch of sequences padded at the
    end; padding only follows real positions, so it never affects them.
    """
    batched = X.ndim == 3
    Xb = X if batched else X[None]
    B, T, d_in = Xb.shape
    d_h = W.shape[1]
    if W.shape[2] != d_in + d_h:
        raise ValueError(f"LSTM expects input dim {W.shape[2] - d_h}, got {d_in}")
    W2 = W.reshape(4 * d_h, d_in + d_h)
    WhT = W2[:, d_in:].T
    Z = Xb @ W2[:, :d_in].T + b.reshape(-1)
    acts = np.empty((B, T, 4 * d_h))
    C = np.empty((B, T, d_h))
    TC = np.empty((B, T, d_h))
    H = np.empty((B, T, d_h))
    h = np.zeros((B, d_h))
    c = np.zeros((B, d_h))
    for t in range(T):
        z = Z[:, t] + h @ WhT
        a = acts[:, t]
        a[:, :3 * d_h] = sigmoid(z[:, :3 * d_h])
        a[:, 3 * d_h:] = np.tanh(z[:, 3 * d_h:])
        c = a[:, d_h:2 * d_h] * c + a[:, :d_h] * a[:, 3 * d_h:]
        tc = np.tanh(c)
        h = a[:, 2 * d_h:3 * d_h] * tc
        C[:, t], TC[:, t], H[:, t] = c, tc, h
    return (H if batched else H[0]), (Xb, W, acts, C, TC, H, batched)


def lstm_backward(dH: np.ndarray, cache, dW: np.ndarray, db: np.ndarray) -> np.ndarray:
    Xb, W, acts, C, TC, H, batched = cache
    dHb = dH if batched else dH[None]
    B, T, d_in = Xb.shape
    d_h = W.shape[1]
    W2 = W.reshape(4 * d_h, d_in + d_h)
    Wh = W2[:, d_in:]
    dZ = np.empty((B, T, 4 * d_h))
    dh_next = np.zeros((B, d_h))
    dc_next = np.zeros((B, d_h))
    for t in range(T - 1, -1, -1):
        a = acts[:, t]
        i, f, o, g = a[:, :d_h], a[:, d_h:2 * d_h], a[:, 2 * d_h:3 * d_h], a[:, 3 * d_h:]
        dh = dHb[:, t] + dh_next
        tc = TC[:, t]
        dc = dh * o * (1.0 - tc * tc) + dc_next
        c_prev = C[:, t - 1] if t > 0 else 0.0
        dz = dZ[:, t]
        dz[:, :d_h] = dc * g * i * (1.0 - i)
        dz[:, d_h:2 * d_h] = dc * c_prev * f * (1.0 - f)
        dz[:, 2 * d_h:3 * d_h] = dh * tc * o * (1.0 - o)
        dz[:, 3 * d_h:] = dc * i * (1.0 - g * g)
        dc_next = dc * f
        dh_next = dz @ Wh
    dW2 = dW.reshape(4 * d_h, d_in + d_h)
    flat = dZ.reshape(-1, 4 * d_h)
    dW2[:, :d_in] += flat.T @ Xb.reshape(-1, d_in)
    if T > 1:
        dW2[:, d_in:] += dZ[:, 1:].reshape(-1, 4 * d_h).T @ H[:, :-1].reshape(-1, d_h)
    db += flat.sum(axis=0).reshape(4, d_h)
    dX = dZ @ W2[:, :d_in]
    return dX if batched else dX[0]


class Lstm:
    def __init__(self, store: ParamStore, name: str, d_in: int, d_h: int, create: bool = True):
        self.store, self.name = store, name
        self.d_in, self.d_h = d_in, d_h
        if create:
            rng = store.rng
            store.add(f"{name}.W", glorot(rng, (4, d_h, d_in + d_h), d_in + d_h, d_h))
            store.add(f"{name}.b", np.zeros((4, d_h)))

    @property
    def params(self) -> LstmParams:
        return LstmParams(self.store[f"{self.name}.W"], self.store[f"{self.name}.b"])

    def forward(self, X):
        return lstm_forward(X, self.store[f"{self.name}.W"], self.store[f"{self.name}.b"])

    def backward(self, dH, cache):
        return lstm_backward(dH, cache, self.store.grads[f"{self.name}.W"],
                             self.store.grads[f"{self.name}.b"])


class BiLstm:
    """Stacked bidirectional LSTM; each layer sees the previous layer's
    concatenated [forward; backward] states. Inverted dropout is applied to
    every layer output when ``train`` is set."""

    def __init__(self, store: ParamStore, name: str, d_in: int, d_h: int,
                 layers: int = 1, dropout: float = 0.0, create: bool = True):
        self.d_in, self.d_h, self.dropout = d_in, d_h, dropout
        self.layers = []
        for k in range(layers):
            din = d_in if k == 0 else 2 * d_h
            self.layers.append((Lstm(store, f"{name}.l{k}.fwd", din, d_h, create),
                                Lstm(store, f"{name}.l{k}.bwd", din, d_h, create)))

    @property
    def d_out(self) -> int:
        return 2 * self.d_h

    def forward(self, X, train: bool = False, rng: np.random.Generator | None = None,
                lengths=None):
        """X is (T, d) or, with ``lengths``, a batch (B, T, d) of sequences
        padded at the end; returns (T, 2 d_h) or (B, T, 2 d_h)."""
        X = np.asarray(X, dtype=DTYPE)
        if X.ndim == 3:
            if lengths is None or len(lengths) != X.shape[0] or min(lengths) < 1:
                raise ValueError("a batched BiLSTM input needs one positive length per sequence")
        elif X.ndim != 2 or X.shape[0] == 0:
            raise ValueError("BiLSTM needs a non-empty (T, d) input")
        flip = _flipper(X, lengths)
        caches = []
        for fwd, bwd in self.layers:
            Hf, cf = fwd.forward(X)
            Hb, cb = bwd.forward(flip(X))
            out = np.concatenate([Hf, flip(Hb)], axis=-1)
            mask = None
            if train and self.dropout > 0.0:
                keep = 1.0 - self.dropout
                mask = (rng.random(out.shape) < keep) / keep
                out = out * mask
            caches.append((cf, cb, mask))
            X = out
        return X, (caches, flip)

    def backward(self, dOut, cache):
        caches, flip = cache
        d_h = self.d_h
        for (fwd, bwd), (cf, cb, mask) in zip(reversed(self.layers), reversed(caches)):
            if mask is not None:
                dOut = dOut * mask
            dX = fwd.backward(np.ascontiguousarray(dOut[..., :d_h]), cf)
            dX += flip(bwd.backward(np.ascontiguousarray(flip(dOut[..., d_h:])), cb))
            dOut = dX
        return dOut


def _flipper(X: np.ndarray, lengths):
    """Time reversal; in a padded batch each sequence flips within its length."""
    if X.ndim == 2:
        return lambda A: A[::-1]
    B, T = X.shape[:2]
    lengths = np.asarray(lengths)
    t = np.arange(T)[None, :]
    idx = np.where(t < lengths[:, None], lengths[:, None] - 1 - t, t)[..., None]
    return lambda A: np.take_along_axis(A, idx, axis=1)


def bilstm(seq, layers: int, store: ParamStore, name: str) -> list[np.ndarray]:
    """Run the BiLSTM registered under ``name`` in ``store`` (no dropout)."""
    X = np.asarray(seq, dtype=DTYPE)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("bilstm: empty sequence")
    d_h = store[f"{name}.l0.fwd.W"].shape[1]
    net = BiLstm(store, name, X.shape[1], d_h, layers, create=False)
    return list(net.forward(X)[0])


# --------------------------------------------------------------------------
# MLP


class Mlp:
    """One tanh hidden layer followed by a linear output layer."""

    def __init__(self, store: ParamStore, name: str, d_in: int, hidden: int, d_out: int):
        self.store, self.name = store, name
        self.d_in, self.hidden, self.d_out = d_in, hidden, d_out
        rng = store.rng
        store.add(f"{name}.W1", glorot(rng, (hidden, d_in), d_in, hidden))
        store.add(f"{name}.b1", np.zeros(hidden))
        store.add(f"{name}.W2", glorot(rng, (d_out, hidden), hidden, d_out))
        store.add(f"{name}.b2", np.zeros(d_out))

    def _p(self, key):
        return self.store[f"{self.name}.{key}"]

    def forward(self, X):
        X = np.asarray(X, dtype=DTYPE)
        if X.shape[-1] != self.d_in:
            raise ValueError(f"MLP {self.name} expects input dim {self.d_in}, got {X.shape[-1]}")
        hid = np.tanh(X @ self._p("W1").T + self._p("b1"))
        return hid @ self._p("W2").T + self._p("b2"), (X, hid)

    def backward(self, dY, cache):
        X, hid = cache
        g = self.store.grads
        n = self.name
        dY = np.asarray(dY, dtype=DTYPE)
        if dY.ndim == 1:
            g[f"{n}.W2"] += np.outer(dY, hid)
        else:
            g[f"{n}.W2"] += dY.T @ hid
        g[f"{n}.b2"] += dY if dY.ndim == 1 else dY.sum(axis=0)
        dpre = (dY @ self._p("W2")) * (1.0 - hid * hid)
        if dpre.ndim == 1:
            g[f"{n}.W1"] += np.outer(dpre, X)
        else:
            g[f"{n}.W1"] += dpre.T @ X
        g[f"{n}.b1"] += dpre if dpre.ndim == 1 else dpre.sum(axis=0)
        return dpre @ self._p("W1")


def mlp(x, W1, b1, W2, b2):
    """Functional MLP: W2 tanh(W1 x + b1) + b2."""
    x = np.asarray(x, dtype=DTYPE)
    if x.shape[-1] != np.shape(W1)[1]:
        raise ValueError("mlp: dimension mismatch")
    return np.tanh(x @ np.asarray(W1).T + b1) @ np.asarray(W2).T + b2


# --------------------------------------------------------------------------
# gradient checking


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst: tuple[str, tuple[int, ...]] | None
    n_checked: int
    tol: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol


def grad_check(fn: Callable[[], float], params: Mapping[str, np.ndarray],
               analytic: Mapping[str, np.ndarray], tol: float = 1e-4, h: float = 1e-5,
               floor: float = 1e-6, max_coords: int | None = None,
               seed: int = 0) -> GradCheckReport:
    """Compare ``analytic`` gradients against central finite differences of
    ``fn`` (which must read the arrays in ``params``, perturbed in place).

    Relative error per coordinate is |a - n| / max(|a|, |n|, floor).
    ``max_coords`` samples that many coordinates per tensor.
    """
    rng = np.random.default_rng(seed)
    base = fn()
    if not np.isfinite(base):
        raise FloatingPointError("grad_check: function value is not finite")
    worst, worst_at, count = 0.0, None, 0
    for name, arr in params.items():
        flat = arr.reshape(-1)
        ana = np.asarray(analytic[name]).reshape(-1)
        if not np.all(np.isfinite(ana)):
            raise FloatingPointError(f"grad_check: non-finite analytic gradient for {name}")
        idx = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            idx = rng.choice(flat.size, size=max_coords, replace=False)
        for k in idx:
            old = flat[k]
            flat[k] = old + h
            up = fn()
            flat[k] = old - h
            down = fn()
            flat[k] = old
            if not (np.isfinite(up) and np.isfinite(down)):
                raise FloatingPointError(f"grad_check: non-finite value perturbing {name}[{k}]")
            num = (up - down) / (2.0 * h)
            err = abs(ana[k] - num) / max(abs(ana[k]), abs(num), floor)
            count += 1
            if worst_at is None or err > worst:
                worst = err
                worst_at = (name, tuple(int(i) for i in np.unravel_index(k, arr.shape)))
    return GradCheckReport(float(worst), worst_at, count, tol)


# --------------------------------------------------------------------------
# checkpoints


def save_checkpoint(path: str | Path, tensors: Mapping[str, np.ndarray]) -> None:
    """Write named float64 tensors: magic, u32 version, then per tensor
    u32 name length, UTF-8 name, u32 rank, u32 dims, little-endian f64 data."""
    parts = [CHECKPOINT_MAGIC, struct.pack("<I", CHECKPOINT_VERSION)]
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f8")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    data = Path(path).read_bytes()
    if data[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: not a TWNP checkpoint")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    pos = 8
    out = {}
    try:
        while pos < len(data):
            (nlen,) = struct.unpack_from("<I", data, pos)
            pos += 4
            name = data[pos:pos + nlen].decode("utf-8")
            pos += nlen
            (rank,) = struct.unpack_from("<I", data, pos)
            pos += 4
            dims = struct.unpack_from(f"<{rank}I", data, pos)
            pos += 4 * rank
            size = int(np.prod(dims)) if rank else 1
            if pos + 8 * size > len(data):
                raise ValueError(f"{path}: truncated tensor {name!r}")
            out[name] = np.frombuffer(data, dtype="<f8", count=size, offset=pos).reshape(dims).copy()
            pos += 8 * size
    except struct.error:
        raise ValueError(f"{path}: truncated checkpoint") from None
    return out
