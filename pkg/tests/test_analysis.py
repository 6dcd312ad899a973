from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import wilcoxon_enumeration
from twinparse.analysis import (
    ALL, PR, Ratio, attachment_scores, compute_profile, dep_length, depths, error_reduction,
    judge, las_by_sentence_length, nonproj_pr, profile_csv, root_distance, sample_balanced,
    sentence_length_bin, wilcoxon_signed_rank,
)
from twinparse.toy import toy_treebank
from twinparse.treebank import DepTree, read_conllu_file

PROFILE = Path(__file__).parent / "fixtures" / "profile"


@pytest.fixture(scope="module")
def fixture_pair():
    return read_conllu_file(PROFILE / "gold.conllu"), read_conllu_file(PROFILE / "sys.conllu")


def test_profile_golden(fixture_pair):
    gold, pred = fixture_pair
    got = profile_csv(compute_profile(gold, {"sys": pred}))
    assert got == (PROFILE / "expected.csv").read_text(encoding="utf-8")


def test_profile_per_treebank(fixture_pair):
    gold, pred = fixture_pair
    profiles = compute_profile(gold, {"sys": pred, "oracle": gold}, group_by_language=True)
    assert list(profiles) == [("sys", ALL), ("sys", "aa"), ("sys", "bb"),
                              ("oracle", ALL), ("oracle", "aa"), ("oracle", "bb")]
    assert profiles[("sys", "aa")].las == Ratio(5, 7)
    assert profiles[("sys", "bb")].las == Ratio(10, 12)
    assert profiles[("oracle", ALL)].las == Ratio(19, 19)
    # pooled counts are the sums of the per-treebank counts
    for key in ("1", "2"):
        pooled = profiles[("sys", ALL)].by_root_distance[key].recall_counts
        parts = [profiles[("sys", tb)].by_root_distance.get(key) for tb in ("aa", "bb")]
        assert pooled == sum((p.recall_counts for p in parts if p), Ratio(0, 0))


def test_profile_alignment_errors(fixture_pair):
    gold, pred = fixture_pair
    with pytest.raises(ValueError):
        compute_profile(gold, {"x": pred[:2]})
    with pytest.raises(ValueError):
        compute_profile(gold, {"x": [pred[1], pred[0], pred[2]]})


def test_judge(fixture_pair):
    gold, pred = fixture_pair
    j = judge(gold[2], pred[2])[11]
    assert (j.gold_head, j.pred_head, j.gold_dep_length, j.pred_dep_length) == (3, 2, "9", ">=10")
    assert j.pred_nonprojective and not j.gold_nonprojective and not j.correct_unlabeled


def test_attachment_scores():
    g = DepTree((2, 0, 2), ("a", "root", "b"))
    p = DepTree((2, 0, 1), ("x", "root", "b"))
    assert attachment_scores(g, p) == (pytest.approx(1 / 3), pytest.approx(2 / 3))
    assert attachment_scores([g, g], [p, g]) == (pytest.approx(4 / 6), pytest.approx(5 / 6))
    with pytest.raises(ValueError):
        attachment_scores(g, DepTree((0,), ("root",)))
    with pytest.raises(ValueError):
        attachment_scores([g], [p, p])


@pytest.mark.parametrize("h, d, b", [(0, 3, "root"), (2, 3, "1"), (9, 1, "8"), (1, 11, ">=10"), (12, 3, "9")])
def test_dep_length_bins(h, d, b):
    assert dep_length(h, d) == b


@pytest.mark.parametrize("n, b", [(1, "1-10"), (10, "1-10"), (11, "11-20"), (50, "41-50"), (51, "50+")])
def test_sentence_length_bins(n, b):
    assert sentence_length_bin(n) == b


def test_depths_and_root_distance():
    heads = [2, 0, 2, 3]
    assert depths(heads) == [1, 0, 1, 2]
    assert root_distance(DepTree(tuple(heads), ("x",) * 4), 4) == "2"
    chain = tuple(range(0, 12))  # token k hangs off k - 1
    assert root_distance(DepTree(chain, ("x",) * 12), 12) == ">=10"


def test_las_by_sentence_length(fixture_pair):
    gold, pred = fixture_pair
    assert las_by_sentence_length(gold, pred) == {"1-10": pytest.approx(500 / 7),
                                                  "11-20": pytest.approx(1000 / 12)}


def test_nonproj_pr_undefined_sides():
    g = DepTree((2, 0), ("a", "root"))
    pr = nonproj_pr(g, g)
    assert pr.precision is None and pr.recall is None and pr.f == 0.0
    assert PR(Ratio(1, 2), Ratio(1, 1)).f == pytest.approx(2 / 3)


def test_error_reduction():
    assert error_reduction(80.5, 84.5) == pytest.approx(20.5128, abs=1e-4)
    assert error_reduction(90.0, 90.0) == 0.0
    assert error_reduction(90.0, 85.0) < 0
    with pytest.raises(ValueError):
        error_reduction(100.0, 100.0)


def test_sample_balanced():
    a, b, c = toy_treebank(5, 1, treebank_id="a"), toy_treebank(3, 2, treebank_id="b"), \
        toy_treebank(8, 3, treebank_id="c")
    s1 = sample_balanced([a, b, c], seed=4)
    assert len(s1) == 9
    assert [s.treebank_id for s in s1] == ["a"] * 3 + ["b"] * 3 + ["c"] * 3
    assert s1[3:6] == b  # the smallest set passes through whole
    assert s1 == sample_balanced([a, b, c], seed=4)
    idx = [c.index(s) for s in s1[6:]]
    assert idx == sorted(idx) and len(set(idx)) == 3
    with pytest.raises(ValueError):
        sample_balanced([a, []], 0)
    with pytest.raises(ValueError):
        sample_balanced([], 0)


def test_wilcoxon_reference_value():
    r = wilcoxon_signed_rank([1, 2, 3, 4, 5])
    assert r.p_value == pytest.approx(0.0625, abs=1e-12)
    assert (r.statistic, r.n, r.method) == (0.0, 5, "exact")
    with pytest.raises(ValueError):
        wilcoxon_signed_rank([0, 0])
    with pytest.raises(ValueError):
        wilcoxon_signed_rank([1, 2], method="bogus")


@settings(max_examples=150, deadline=None)
@given(st.lists(st.integers(-6, 6), min_size=1, max_size=10))
def test_wilcoxon_exact_matches_enumeration(diffs):
    if not any(diffs):
        return
    r = wilcoxon_signed_rank(diffs, method="exact")
    w, p = wilcoxon_enumeration(diffs)
    assert r.statistic == pytest.approx(w)
    assert r.p_value == pytest.approx(p, abs=1e-12)


def test_wilcoxon_normal_close_to_exact_for_large_n():
    d = np.random.default_rng(0).normal(0.3, 1.0, size=30)
    exact = wilcoxon_signed_rank(d, method="exact").p_value
    normal = wilcoxon_signed_rank(d).p_value
    assert wilcoxon_signed_rank(d).method == "normal"
    assert abs(exact - normal) < 0.01
