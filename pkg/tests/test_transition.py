import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import CompletionOracle, all_trees, is_tree, random_tree, reachable_configs
from twinparse.transition import (
    LEFT_ARC, PAD, RIGHT_ARC, SHIFT, SWAP, Configuration, Transition, apply, decode_output,
    dynamic_costs, feature_slots, greedy_decode, initial_config, legal, legal_mask,
    masked_argmax, output_index, projective_order, static_oracle, transition_bound,
)
from twinparse.treebank import DepTree, is_projective


def run(tree: DepTree):
    seq = static_oracle(tree)
    c = initial_config(len(tree))
    for t in seq:
        c = apply(c, t)
    assert c.terminal
    return c, seq


def labelled(heads):
    return DepTree(tuple(heads), tuple(f"l{d % 3}" if h else "root" for d, h in enumerate(heads, 1)))


def test_initial_and_terminal():
    c = initial_config(2)
    assert c.stack == [] and c.buffer == [1, 2, 0]
    assert legal(c) == {SHIFT}
    with pytest.raises(ValueError):
        initial_config(0)
    done = Configuration([], [0], [-1, 0], [None, "root"])
    assert done.terminal
    with pytest.raises(ValueError):
        legal(done)


def test_legality():
    c = Configuration([1, 3], [2, 0], [-1] * 4, [None] * 4)
    assert legal(c) == {SHIFT, LEFT_ARC, RIGHT_ARC}  # no swap: 3 > 2
    c = Configuration([1, 2], [3, 0], [-1] * 4, [None] * 4)
    assert legal(c) == {SHIFT, LEFT_ARC, RIGHT_ARC, SWAP}
    c = Configuration([2], [0], [-1] * 3, [None] * 3)
    assert legal(c) == {LEFT_ARC}
    with pytest.raises(ValueError):
        apply(c, Transition(SHIFT))


def test_transition_validation():
    with pytest.raises(ValueError):
        Transition("REDUCE")
    with pytest.raises(ValueError):
        Transition(LEFT_ARC)
    with pytest.raises(ValueError):
        Transition(SHIFT, "x")
    assert str(Transition(RIGHT_ARC, "obj")) == "RIGHT_ARC(obj)"


def test_swap_reorders():
    c = initial_config(3)
    c = apply(apply(c, Transition(SHIFT)), Transition(SWAP))
    assert c.stack == [] and c.buffer == [2, 1, 3, 0]


def test_static_oracle_exhaustive_small():
    for n in range(1, 5):
        for heads in all_trees(n):
            tree = labelled(heads)
            c, seq = run(tree)
            assert tuple(c.heads[1:]) == tree.heads
            assert tuple(c.labels[1:]) == tree.labels
            assert len(seq) <= transition_bound(n)
            if is_projective(heads):
                assert not any(t.kind == SWAP for t in seq)


def test_projective_order():
    assert projective_order([2, 0, 2]) == [1, 2, 3]
    # 1 <- 3 across 2, which hangs off 4
    assert projective_order([3, 4, 4, 0]) == [2, 1, 3, 4]


def test_feature_slots():
    c = Configuration([1, 3], [4, 0], [-1, -1, 3, -1, -1], [None] * 5)
    assert feature_slots(c) == [3, 2, 2, 1, PAD, PAD, PAD, PAD, PAD, 4, PAD, PAD]


def test_output_index_round_trip():
    labels = ["a", "b", "c"]
    for i in range(2 + 2 * len(labels)):
        t = decode_output(i, labels)
        li = labels.index(t.label) if t.label else 0
        assert output_index(t.kind, li, len(labels)) == i


def test_masked_argmax_ties_and_mask():
    assert masked_argmax(np.array([1.0, 5.0, 1.0]), np.array([True, False, True])) == 0


def test_dynamic_costs_small_exhaustive():
    for n in range(1, 5):
        configs = reachable_configs(n)
        for heads in all_trees(n):
            if not is_projective(heads):
                continue
            tree = labelled(heads)
            oracle = CompletionOracle(heads)
            for c in configs:
                got = dynamic_costs(c, tree, True)
                want = oracle.costs(c)
                assert {k: got[k] for k in want} == want
                assert min(got.values()) == 0
                if SWAP in got:
                    assert got[SWAP] == 1


def test_nonprojective_costs_follow_static_oracle():
    tree = labelled((3, 4, 4, 0))
    c = initial_config(4)
    for t in static_oracle(tree):
        costs = dynamic_costs(c, tree)
        assert costs[t.kind] == 0
        assert sorted(costs.values()).count(0) == 1
        c = apply(c, t)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 9), st.integers(0, 2**32 - 1))
def test_static_oracle_random(n, seed):
    tree = labelled(random_tree(np.random.default_rng(seed), n))
    c, seq = run(tree)
    assert tuple(c.heads[1:]) == tree.heads
    assert len(seq) <= transition_bound(n)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 10), st.integers(0, 2**32 - 1))
def test_greedy_decode_always_yields_tree(n, seed):
    rng = np.random.default_rng(seed)
    labels = ["root", "x", "y"]
    tree, steps = greedy_decode(n, lambda c: rng.normal(size=2 + 2 * len(labels)), labels)
    assert is_tree(tree.heads)
    assert steps <= transition_bound(n)


def test_legal_mask_layout():
    c = Configuration([1, 2], [3, 0], [-1] * 4, [None] * 4)
    assert legal_mask(c, 2).tolist() == [True] * 6
    c = Configuration([2], [0], [-1] * 3, [None] * 3)
    assert legal_mask(c, 2).tolist() == [False, False, True, True, False, False]


def test_transition_bound_is_tight():
    # longest path through the configuration graph under any legal policy
    for n in range(1, 6):
        memo = {}

        def longest(c):
            k = (tuple(c.stack), tuple(c.buffer), tuple(c.heads))
            if k not in memo:
                memo[k] = 0 if c.terminal else 1 + max(
                    longest(apply(c, Transition(kind, None if kind in (SHIFT, SWAP) else "x")))
                    for kind in legal(c))
            return memo[k]

        assert longest(initial_config(n)) == transition_bound(n) == n * (n + 1)
