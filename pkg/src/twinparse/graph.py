"""Arc-factored scoring and maximum spanning arborescence decoding."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .nn import DTYPE, ParamStore, glorot
from .treebank import ROOT, find_cycle

NEG_INF = -np.inf
ROOT_LABEL = "root"


def legal_cells(n: int) -> np.ndarray:
    """(n+1, n+1) mask of arcs h -> d with d >= 1 and h != d."""
    mask = np.ones((n + 1, n + 1), dtype=bool)
    mask[:, 0] = False
    np.fill_diagonal(mask, False)
    return mask


def _prepare(matrix) -> np.ndarray:
    S = np.array(matrix, dtype=DTYPE)
    if S.ndim != 2 or S.shape[0] != S.shape[1] or S.shape[0] < 2:
        raise ValueError("score matrix must be (n+1, n+1) with n >= 1")
    S[~legal_cells(S.shape[0] - 1)] = NEG_INF
    return S


def tree_score(matrix, heads) -> float:
    """Sum of score[heads[d-1], d] over d = 1..n, accumulated left to right."""
    total = 0.0
    for d, h in enumerate(heads, 1):
        total += float(matrix[h][d])
    return total


def _cle(S: np.ndarray) -> np.ndarray:
    """Heads for nodes 0..m-1 of the best arborescence rooted at 0 (heads[0] = -1)."""
    m = S.shape[0]
    heads = np.argmax(S, axis=0)
    heads[0] = -1
    cycle = find_cycle([int(h) for h in heads[1:]]) if m > 1 else []
    if not cycle:
        return heads
    in_cycle = np.zeros(m, dtype=bool)
    in_cycle[cycle] = True
    rest = np.flatnonzero(~in_cycle)
    cyc = np.flatnonzero(in_cycle)
    k = len(rest)
    sub = np.full((k + 1, k + 1), NEG_INF)
    sub[:k, :k] = S[np.ix_(rest, rest)]

    # entering the cycle at v breaks the arc heads[v] -> v
    enter_gain = S[np.ix_(rest, cyc)] - S[heads[cyc], cyc][None, :]
    enter_pick = np.argmax(enter_gain, axis=1)
    sub[:k, k] = enter_gain[np.arange(k), enter_pick]
    leave = S[np.ix_(cyc, rest)]
    leave_pick = np.argmax(leave, axis=0)
    sub[k, :k] = leave[leave_pick, np.arange(k)]
    sub[:, 0] = NEG_INF
    np.fill_diagonal(sub, NEG_INF)

    sub_heads = _cle(sub)
    out = heads.copy()
    for j, v in enumerate(rest):
        if j == 0:
            continue
        h = sub_heads[j]
        out[v] = cyc[leave_pick[j]] if h == k else rest[h]
    j = sub_heads[k]
    out[cyc[enter_pick[j]]] = rest[j]
    return out


def cle(matrix) -> list[int]:
    """Maximum spanning arborescence rooted at 0 (any number of root children)."""
    S = _prepare(matrix)
    return [int(h) for h in _cle(S)[1:]]


def single_root_cle(matrix) -> list[int]:
    """Best arborescence in which node 0 has exactly one child."""
    S = _prepare(matrix)
    free = [int(h) for h in _cle(S)[1:]]
    if free.count(ROOT) == 1:
        return free
    n = S.shape[0] - 1
    best, best_total = None, NEG_INF
    for r in range(1, n + 1):
        R = S.copy()
        R[0, :] = NEG_INF
        R[0, r] = S[0, r]
        heads = [int(h) for h in _cle(R)[1:]]
        total = tree_score(S, heads)
        if best is None or total > best_total:
            best, best_total = heads, total
    return best


@lru_cache(maxsize=8)
def _all_arborescences(n: int) -> np.ndarray:
    """Every head array over 1..n rooted at 0, in lexicographic order."""
    out = []
    heads = [0] * (n + 1)

    def acyclic(d, h):
        while h != ROOT and h <= d:
            if h == d:
                return False
            h = heads[h]
        # unassigned nodes (> d) may still close a cycle later; checked then
        return True

    def assign(d):
        if d > n:
            out.append(heads[1:])
            return
        for h in range(n + 1):
            if h == d:
                continue
            heads[d] = h
            if h > d or acyclic(d, h):
                assign(d + 1)

    assign(1)
    arr = np.array(out, dtype=np.int64).reshape(-1, n)
    ok = np.array([not find_cycle(list(row)) for row in arr], dtype=bool)
    return arr[ok]


def brute_force_arborescence(matrix, single_root: bool = False) -> list[int]:
    """Exhaustive search; ties go to the lexicographically smallest heads."""
    S = np.asarray(matrix, dtype=DTYPE)
    n = S.shape[0] - 1
    if n > 8:
        raise ValueError(f"brute force is limited to n <= 8, got {n}")
    trees = _all_arborescences(n)
    if single_root:
        trees = trees[(trees == ROOT).sum(axis=1) == 1]
    totals = S[trees, np.arange(1, n + 1)[None, :]].sum(axis=1)
    return [int(h) for h in trees[int(np.argmax(totals))]]


class ArcScorer:
    """score[h, d] = w2 . tanh(W1 [v_h; v_d] + b1) + b2. W1 is applied to
    heads and dependents separately so that all pairs cost one broadcast."""

    def __init__(self, store: ParamStore, d_in: int, hidden: int = 100, name: str = "arc"):
        self.store, self.name = store, name
        self.d_in, self.hidden = d_in, hidden
        rng = store.rng
        store.add(f"{name}.W1", glorot(rng, (hidden, 2 * d_in), 2 * d_in, hidden))
        store.add(f"{name}.b1", np.zeros(hidden))
        store.add(f"{name}.W2", glorot(rng, (1, hidden), hidden, 1))
        store.add(f"{name}.b2", np.zeros(1))

    def _p(self, key):
        return self.store[f"{self.name}.{key}"]

    def forward(self, vectors: np.ndarray):
        V = np.asarray(vectors, dtype=DTYPE)
        if V.shape[1] != self.d_in:
            raise ValueError(f"arc scorer expects dim {self.d_in}, got {V.shape[1]}")
        W1 = self._p("W1")
        A = V @ W1[:, :self.d_in].T
        B = V @ W1[:, self.d_in:].T
        hid = np.tanh(A[:, None, :] + B[None, :, :] + self._p("b1"))
        S = hid @ self._p("W2")[0] + self._p("b2")[0]
        n = V.shape[0] - 1
        S = np.where(legal_cells(n), S, NEG_INF)
        return S, (V, hid)

    def backward(self, dS: np.ndarray, cache) -> np.ndarray:
        V, hid = cache
        n = V.shape[0] - 1
        dS = np.where(legal_cells(n), dS, 0.0)
        g, nm = self.store.grads, self.name
        g[f"{nm}.W2"][0] += np.einsum("hd,hdk->k", dS, hid)
        g[f"{nm}.b2"][0] += dS.sum()
        dpre = dS[:, :, None] * self._p("W2")[0] * (1.0 - hid * hid)
        dA = dpre.sum(axis=1)
        dB = dpre.sum(axis=0)
        g[f"{nm}.b1"] += dA.sum(axis=0)
        g[f"{nm}.W1"][:, :self.d_in] += dA.T @ V
        g[f"{nm}.W1"][:, self.d_in:] += dB.T @ V
        W1 = self._p("W1")
        return dA @ W1[:, :self.d_in] + dB @ W1[:, self.d_in:]


def score_arcs(encoded, scorer: ArcScorer) -> np.ndarray:
    return scorer.forward(encoded.vectors)[0]


def score_labels(h_head: np.ndarray, h_dep: np.ndarray, label_mlp) -> np.ndarray:
    """One score per label for the arc head -> dep."""
    return label_mlp.forward(np.concatenate([h_head, h_dep], axis=-1))[0]


def assign_labels(vectors: np.ndarray, heads, label_mlp, labels) -> list[str]:
    """Argmax label per decoded arc (lowest index on ties); the root child
    always gets ROOT_LABEL."""
    idx = np.arange(1, len(heads) + 1)
    X = np.concatenate([vectors[np.asarray(heads)], vectors[idx]], axis=1)
    scores = label_mlp.forward(X)[0]
    out = []
    for d, h in enumerate(heads):
        out.append(ROOT_LABEL if h == ROOT else labels[int(np.argmax(scores[d]))])
    return out
