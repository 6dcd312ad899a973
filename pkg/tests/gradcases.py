"""Random gradient-check instances for each differentiable component.

Every case builds a small float64 module, draws a random linear (or
cross-entropy) objective over its output and returns the grad_check report
for all of its parameters plus its input where the input is continuous.
"""

import numpy as np

from twinparse.encoder import SentenceEncoder
from twinparse.graph import ArcScorer
from twinparse.nn import Mlp, ParamStore, grad_check
from twinparse.representations import CharEmbedder, ScalarMix
from twinparse.training import label_loss

TOL = 1e-4
CHARS = list("abcdeé")


def _check(store, fn, backward, extra=None):
    store.zero_grad()
    fn()
    backward()
    params = dict(store.params)
    grads = {k: store.grads[k] for k in params}
    for name, (arr, grad) in (extra or {}).items():
        params[name], grads[name] = arr, grad
    return grad_check(fn, params, grads, tol=TOL)


def char_bilstm_case(seed: int):
    rng = np.random.default_rng(seed)
    store = ParamStore(seed)
    emb = CharEmbedder(store, CHARS, char_dim=4, hidden=3)
    forms = ["".join(rng.choice(CHARS + ["z"], size=rng.integers(1, 5)))
             for _ in range(rng.integers(1, 4))]
    R = rng.normal(size=(len(forms), emb.dim))
    # touch every row so that zero_grad clears the full table
    store.touch("char.E", range(len(CHARS) + 1))

    def fn():
        return float(np.sum(R * emb.forward_many(forms)[0]))

    def backward():
        vecs, cache = emb.forward_many(forms)
        emb.backward_many(R, cache)

    return _check(store, fn, backward)


def encoder_case(seed: int):
    rng = np.random.default_rng(seed)
    store = ParamStore(seed)
    enc = SentenceEncoder(store, d_in=4, hidden=3, layers=2, dropout=0.33)
    X = rng.normal(size=(int(rng.integers(1, 5)), 4))
    R = rng.normal(size=(len(X) + 1, enc.dim))
    Rp = rng.normal(size=enc.dim)
    dX = np.zeros_like(X)

    def run():
        # a fresh generator per call fixes the dropout masks
        return enc.forward(X, train=True, rng=np.random.default_rng(seed + 1))

    def fn():
        e, _ = run()
        return float(np.sum(R * e.vectors) + Rp @ e.pad)

    def backward():
        _, cache = run()
        dX[...] = enc.backward(R, Rp, cache)

    return _check(store, fn, backward, {"input": (X, dX)})


def _mlp_case(seed: int, name: str, d_in: int, d_out: int):
    rng = np.random.default_rng(seed)
    store = ParamStore(seed)
    net = Mlp(store, name, d_in, 5, d_out)
    X = rng.normal(size=(int(rng.integers(1, 4)), d_in))
    dX = np.zeros_like(X)
    return rng, store, net, X, dX


def transition_mlp_case(seed: int):
    # input is a stack of 12 slot vectors of width 2
    rng, store, net, X, dX = _mlp_case(seed, "trans", 24, 2 + 2 * 3)
    R = rng.normal(size=(len(X), net.d_out))

    def fn():
        return float(np.sum(R * net.forward(X)[0]))

    def backward():
        _, cache = net.forward(X)
        dX[...] = net.backward(R, cache)

    return _check(store, fn, backward, {"input": (X, dX)})


def label_mlp_case(seed: int):
    rng, store, net, X, dX = _mlp_case(seed, "label", 8, 4)
    gold = rng.integers(0, 4, size=len(X))

    def fn():
        return label_loss(net.forward(X)[0], gold)[0]

    def backward():
        logits, cache = net.forward(X)
        dX[...] = net.backward(label_loss(logits, gold)[1], cache)

    return _check(store, fn, backward, {"input": (X, dX)})


def arc_scorer_case(seed: int):
    rng = np.random.default_rng(seed)
    store = ParamStore(seed)
    net = ArcScorer(store, 4, 5)
    V = rng.normal(size=(int(rng.integers(2, 6)), 4))
    R = rng.normal(size=(len(V), len(V)))
    dV = np.zeros_like(V)

    def fn():
        S, _ = net.forward(V)
        return float(np.sum(np.where(np.isfinite(S), R * S, 0.0)))

    def backward():
        _, cache = net.forward(V)
        dV[...] = net.backward(R, cache)

    return _check(store, fn, backward, {"input": (V, dV)})


def scalar_mix_case(seed: int):
    rng = np.random.default_rng(seed)
    store = ParamStore(seed)
    L = int(rng.integers(1, 5))
    mix = ScalarMix(store, L)
    store["mix.s"][:] = rng.normal(size=L)
    store["mix.gamma"][:] = rng.uniform(0.5, 2.0)
    T = rng.normal(size=(int(rng.integers(1, 4)), L, 3))
    R = rng.normal(size=(len(T), 3))

    def fn():
        return float(np.sum(R * mix.forward(T)[0]))

    def backward():
        _, cache = mix.forward(T)
        mix.backward(R, cache)

    return _check(store, fn, backward)


CASES = {
    "char_bilstm": char_bilstm_case,
    "sentence_encoder": encoder_case,
    "transition_mlp": transition_mlp_case,
    "arc_scorer": arc_scorer_case,
    "label_mlp": label_mlp_case,
    "scalar_mix": scalar_mix_case,
}
