from pathlib import Path

import pytest
from hypothesis import given, settings, strategies as st

from oracles import descendant_nonprojective, has_crossing, is_tree, random_tree
from twinparse.treebank import (
    ConlluError, Sentence, Token, TreeError, check_heads, find_cycle, is_projective,
    nonprojective_arcs, read_conllu, read_conllu_file, validate_tree, write_conllu,
)

FIXTURES = Path(__file__).parent / "fixtures"


def test_round_trip_preserves_ranges_and_empty_nodes():
    text = (FIXTURES / "roundtrip.conllu").read_text(encoding="utf-8")
    sents = read_conllu(text)
    assert [len(s) for s in sents] == [5, 7]
    assert write_conllu(sents) == text


def test_columns_interpreted():
    s = read_conllu_file(FIXTURES / "roundtrip.conllu")[1]
    assert s.forms[:3] == ["Sue", "likes", "coffee"]
    assert s.heads == [2, 0, 2, 5, 3, 5, 2]
    assert s.tokens[0].upos == "PROPN"
    assert s.labels[5] == "orphan"
    assert s.treebank_id == "roundtrip"
    assert s.index == 1


def test_treebank_comment_overrides_file_id():
    text = "# treebank_id = xx_test\n1\ta\t_\tX\t_\t_\t0\troot\t_\t_\n\n"
    assert read_conllu(text, "file")[0].treebank_id == "xx_test"


@pytest.mark.parametrize("line, lineno", [
    ("1\ta\t_\tX\t_\t_\t0\troot\t_", 1),
    ("1\ta\t_\tX\t_\t_\tzero\troot\t_\t_", 1),
])
def test_malformed_lines_report_line_number(line, lineno):
    with pytest.raises(ConlluError) as err:
        read_conllu(line + "\n\n")
    assert err.value.lineno == lineno


def test_id_gap_detected():
    text = "# c\n1\ta\t_\tX\t_\t_\t0\troot\t_\t_\n3\tb\t_\tX\t_\t_\t1\tdep\t_\t_\n\n"
    with pytest.raises(ConlluError) as err:
        read_conllu(text)
    assert err.value.lineno == 3


def test_token_rejects_self_loop():
    with pytest.raises(ValueError):
        Token(2, "x", "X", 2, "dep")


@pytest.mark.parametrize("heads, ids", [
    ([2, 1], [1, 2]),          # cycle
    ([0, 0], [1, 2]),          # two roots
    ([2, 3, 1], [1, 2, 3]),    # cycle, no root
])
def test_check_heads_errors(heads, ids):
    with pytest.raises(TreeError) as err:
        check_heads(heads)
    assert sorted(err.value.token_ids) == ids


def test_validate_tree():
    s = Sentence([Token(1, "a", "X", 0, "root"), Token(2, "b", "X", 1, "dep")])
    assert validate_tree(s).root == 1
    assert find_cycle([0, 1]) == []


def test_nonprojective_example():
    # the arc 3 -> 1 spans token 2, which hangs off 4
    heads = [3, 4, 4, 0]
    assert has_crossing(heads)
    assert nonprojective_arcs(heads) == {1}


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 9), st.integers(0, 2**32 - 1))
def test_nonprojective_matches_independent_definitions(n, seed):
    import numpy as np
    heads = random_tree(np.random.default_rng(seed), n)
    assert is_tree(heads)
    arcs = nonprojective_arcs(heads)
    assert arcs == descendant_nonprojective(heads)
    assert is_projective(heads) == (not has_crossing(heads))


_form = st.text(st.characters(blacklist_categories=("Cc", "Cs", "Zl", "Zp"),
                              blacklist_characters="\t\n\r "), min_size=1, max_size=6)


@settings(max_examples=100, deadline=None)
@given(st.lists(_form, min_size=1, max_size=8), st.integers(0, 2**32 - 1))
def test_write_read_round_trip(forms, seed):
    import numpy as np
    heads = random_tree(np.random.default_rng(seed), len(forms))
    toks = [Token(i, f, "X", h, "dep" if h else "root") for i, (f, h) in enumerate(zip(forms, heads), 1)]
    text = write_conllu([Sentence(toks, ["# sent_id = 1"])])
    back = read_conllu(text)
    assert back[0].tokens == toks
    assert write_conllu(back) == text


def test_descendant_definition_is_stricter_than_crossing():
    # 4 -> 2 and 3 -> 1 cross, but only the arc into 2 spans a non-descendant
    assert nonprojective_arcs([3, 4, 0, 3]) == {2}


def test_nonprojective_exhaustive_small():
    from oracles import all_trees
    for n in range(1, 6):
        for heads in all_trees(n):
            assert nonprojective_arcs(heads) == descendant_nonprojective(heads)
            assert is_projective(heads) == (not has_crossing(heads))
