"""Arc-hybrid transition system with Swap.

ROOT (index 0) sits at the end of the buffer and receives its dependents via
LEFT_ARC, so RIGHT_ARC never involves it. SWAP moves the stack top back into
the buffer right behind the buffer front, which lets the parser process words
in an order other than surface order and so build non-projective trees.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .treebank import ROOT, DepTree, dependents, is_projective, tree_from_heads

SHIFT = "SHIFT"
SWAP = "SWAP"
LEFT_ARC = "LEFT_ARC"
RIGHT_ARC = "RIGHT_ARC"
KINDS = (SHIFT, SWAP, LEFT_ARC, RIGHT_ARC)
PAD = -1
N_SLOTS = 12


@dataclass(frozen=True)
class Transition:
    kind: str
    label: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown transition kind {self.kind!r}")
        is_arc = self.kind in (LEFT_ARC, RIGHT_ARC)
        if is_arc != (self.label is not None):
            raise ValueError(f"{self.kind} {'needs' if is_arc else 'takes no'} label")

    def __str__(self):
        return self.kind if self.label is None else f"{self.kind}({self.label})"


@dataclass
class Configuration:
    stack: list[int]
    buffer: list[int]
    heads: list[int]          # heads[d] for d in 0..n, -1 while unattached
    labels: list[str | None]
    root_attachments: list[int] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.heads) - 1

    @property
    def arcs(self) -> set[tuple[int, str, int]]:
        return {(h, self.labels[d], d) for d, h in enumerate(self.heads) if d and h >= 0}

    @property
    def terminal(self) -> bool:
        return not self.stack and self.buffer == [ROOT]

    def copy(self) -> "Configuration":
        return Configuration(list(self.stack), list(self.buffer), list(self.heads),
                             list(self.labels), list(self.root_attachments))


def initial_config(n: int) -> Configuration:
    if n < 1:
        raise ValueError("a configuration needs at least one token")
    return Configuration([], list(range(1, n + 1)) + [ROOT], [-1] * (n + 1), [None] * (n + 1))


def legal(config: Configuration) -> set[str]:
    if config.terminal:
        raise ValueError("no transitions are legal in a terminal configuration")
    stack, buf = config.stack, config.buffer
    kinds = set()
    front_is_root = buf[0] == ROOT
    if not front_is_root:
        kinds.add(SHIFT)
    if stack:
        kinds.add(LEFT_ARC)
        if not front_is_root and stack[-1] < buf[0]:
            kinds.add(SWAP)
    if len(stack) >= 2:
        kinds.add(RIGHT_ARC)
    return kinds


def apply(config: Configuration, t: Transition) -> Configuration:
    if t.kind not in legal(config):
        raise ValueError(f"illegal transition {t} in configuration stack={config.stack} buffer={config.buffer}")
    c = config.copy()
    if t.kind == SHIFT:
        c.stack.append(c.buffer.pop(0))
    elif t.kind == SWAP:
        c.buffer.insert(1, c.stack.pop())
    elif t.kind == LEFT_ARC:
        d, h = c.stack.pop(), c.buffer[0]
        c.heads[d], c.labels[d] = h, t.label
        if h == ROOT:
            c.root_attachments.append(d)
    else:
        d = c.stack.pop()
        c.heads[d], c.labels[d] = c.stack[-1], t.label
    return c


def feature_slots(config: Configuration) -> list[int]:
    """Token indices for s1, s2, s3, b1, each followed by its leftmost and
    rightmost dependent so far; PAD (-1) where absent."""
    items = [config.stack[-k] if len(config.stack) >= k else PAD for k in (1, 2, 3)]
    items.append(config.buffer[0] if config.buffer else PAD)
    left = {i: PAD for i in items if i != PAD}
    right = dict(left)
    for d, h in enumerate(config.heads):
        if d and h in left:
            if left[h] == PAD:
                left[h] = d
            right[h] = d
    slots = []
    for i in items:
        if i == PAD:
            slots.extend((PAD, PAD, PAD))
        else:
            slots.extend((i, left[i], right[i]))
    return slots


# --------------------------------------------------------------------------
# oracles


def projective_order(tree: DepTree | Sequence[int]) -> list[int]:
    """In-order traversal of the tree: left dependents, node, right dependents."""
    heads = tree.heads if isinstance(tree, DepTree) else list(tree)
    kids = dependents(heads)
    order: list[int] = []

    def visit(node):
        for d in kids[node]:
            if d < node:
                visit(d)
        if node != ROOT:
            order.append(node)
        for d in kids[node]:
            if d > node:
                visit(d)

    visit(ROOT)
    return order


def _order_positions(tree: DepTree) -> list[int]:
    pos = [0] * (len(tree.heads) + 1)
    for p, node in enumerate(projective_order(tree), 1):
        pos[node] = p
    pos[ROOT] = len(tree.heads) + 1
    return pos


def _static_choice(config: Configuration, tree: DepTree, pos: Sequence[int],
                   n_gold_kids: Sequence[int]) -> Transition | None:
    stack, buf = config.stack, config.buffer
    gold = tree.heads
    if stack:
        s1 = stack[-1]
        complete = sum(1 for d, h in enumerate(config.heads) if d and h == s1) == n_gold_kids[s1]
        if complete and gold[s1 - 1] == buf[0]:
            return Transition(LEFT_ARC, tree.labels[s1 - 1])
        if complete and len(stack) >= 2 and gold[s1 - 1] == stack[-2]:
            return Transition(RIGHT_ARC, tree.labels[s1 - 1])
        if buf[0] != ROOT and s1 < buf[0] and pos[s1] > pos[buf[0]]:
            return Transition(SWAP)
    if buf[0] != ROOT:
        return Transition(SHIFT)
    return None


def static_oracle(tree: DepTree) -> list[Transition]:
    """Canonical transition sequence (eager swap) that rebuilds ``tree``."""
    tree_from_heads(tree.heads, tree.labels)
    n = len(tree.heads)
    pos = _order_positions(tree)
    n_kids = [len(k) for k in dependents(tree.heads)]
    config = initial_config(n)
    seq = []
    limit = n * (n + 1) + 1
    while not config.terminal:
        t = _static_choice(config, tree, pos, n_kids)
        if t is None or len(seq) > limit:
            raise RuntimeError(f"static oracle is stuck on tree {tree.heads}")
        seq.append(t)
        config = apply(config, t)
    return seq


def _min_future_loss(config: Configuration, gold: Sequence[int]) -> int:
    """Gold arcs already lost plus those no longer individually reachable
    (arc-hybrid, no further swaps). Exact for projective gold trees."""
    stack, buf = config.stack, config.buffer
    where = {}
    for k, i in enumerate(stack):
        where[i] = ("S", k)
    for i in buf:
        where[i] = ("B", 0)
    loss = 0
    for d in range(1, len(config.heads)):
        h = gold[d - 1]
        if config.heads[d] >= 0:
            loss += config.heads[d] != h
            continue
        if h not in where:
            loss += 1
            continue
        d_in, d_k = where[d]
        h_in, h_k = where[h]
        if d_in == "S" and h_in == "S" and h_k != d_k - 1:
            loss += 1
    return loss


def dynamic_costs(config: Configuration, tree: DepTree,
                  projective: bool | None = None) -> dict[str, int]:
    """Cost of every legal transition kind: the increase in the least
    achievable number of wrong heads. SWAP on a projective gold tree costs 1
    (the completions considered never reorder words). For non-projective
    trees only the static-oracle choice is free."""
    kinds = legal(config)
    if projective is None:
        projective = is_projective(tree)
    if not projective:
        pos = _order_positions(tree)
        n_kids = [len(k) for k in dependents(tree.heads)]
        choice = _static_choice(config, tree, pos, n_kids)
        return {k: 0 if choice is not None and k == choice.kind else 1 for k in kinds}
    gold = tree.heads
    here = _min_future_loss(config, gold)
    costs = {}
    for k in kinds:
        if k == SWAP:
            costs[k] = 1
            continue
        nxt = apply(config, Transition(k, None if k == SHIFT else "_"))
        costs[k] = _min_future_loss(nxt, gold) - here
    return costs


# --------------------------------------------------------------------------
# scoring and decoding


def output_index(kind: str, label_index: int, n_labels: int) -> int:
    if kind == SHIFT:
        return 0
    if kind == SWAP:
        return 1
    if kind == LEFT_ARC:
        return 2 + label_index
    return 2 + n_labels + label_index


def decode_output(index: int, labels: Sequence[str]) -> Transition:
    L = len(labels)
    if index == 0:
        return Transition(SHIFT)
    if index == 1:
        return Transition(SWAP)
    if index < 2 + L:
        return Transition(LEFT_ARC, labels[index - 2])
    return Transition(RIGHT_ARC, labels[index - 2 - L])


def legal_mask(config: Configuration, n_labels: int) -> np.ndarray:
    kinds = legal(config)
    mask = np.zeros(2 + 2 * n_labels, dtype=bool)
    mask[0] = SHIFT in kinds
    mask[1] = SWAP in kinds
    mask[2:2 + n_labels] = LEFT_ARC in kinds
    mask[2 + n_labels:] = RIGHT_ARC in kinds
    return mask


def masked_argmax(scores: np.ndarray, mask: np.ndarray) -> int:
    """Highest-scoring allowed output; lowest index on ties."""
    return int(np.argmax(np.where(mask, scores, -np.inf)))


def slot_input(slots: Sequence[int], vectors: np.ndarray, pad: np.ndarray) -> np.ndarray:
    return np.concatenate([pad if s == PAD else vectors[s] for s in slots])


def score_transitions(slots: Sequence[int], encoded, scorer) -> np.ndarray:
    """Scores ordered [SHIFT, SWAP, LEFT_ARC x labels, RIGHT_ARC x labels]."""
    return scorer.forward(slot_input(slots, encoded.vectors, encoded.pad))[0]


def transition_bound(n: int) -> int:
    """Upper bound on the length of any legal transition sequence."""
    return n * (n + 1)


def greedy_decode(n: int, score_fn: Callable[[Configuration], np.ndarray],
                  labels: Sequence[str]) -> tuple[DepTree, int]:
    """Follow the best legal transition until terminal; returns the repaired
    tree and the number of transitions taken."""
    config = initial_config(n)
    steps = 0
    while not config.terminal:
        scores = score_fn(config)
        config = apply(config, decode_output(masked_argmax(scores, legal_mask(config, len(labels))), labels))
        steps += 1
    heads = config.heads[1:]
    labs = config.labels[1:]
    if len(config.root_attachments) > 1:
        first = config.root_attachments[0]
        for d in config.root_attachments[1:]:
            heads[d - 1] = first
    return DepTree(tuple(heads), tuple(labs)), steps


def greedy_parse(sentence, model) -> DepTree:
    return model.parse(sentence)
