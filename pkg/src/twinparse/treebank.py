"""CoNLL-U reading, writing and tree validation.

Only ID, FORM, UPOS, HEAD and DEPREL are interpreted. The remaining columns,
multiword-token ranges ("1-2") and empty nodes ("5.1") are carried along
verbatim so that a read/write cycle reproduces the input.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

ROOT = 0
# a comment of this form overrides the treebank id of its sentence
TREEBANK_COMMENT = "# treebank_id = "


class ConlluError(ValueError):
    """Malformed CoNLL-U input; ``lineno`` is 1-based."""

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class TreeError(ValueError):
    """Head array that is not a single-rooted tree."""

    def __init__(self, message: str, token_ids: Sequence[int] = ()):
        self.token_ids = tuple(token_ids)
        super().__init__(message)


@dataclass(frozen=True)
class Token:
    id: int
    form: str
    upos: str
    head: int
    deprel: str
    # lemma, xpos, feats, deps, misc -- passed through untouched
    misc: tuple[str, str, str, str, str] = ("_", "_", "_", "_", "_")

    def __post_init__(self):
        if self.id < 1:
            raise ValueError(f"token id must be >= 1, got {self.id}")
        if self.head < 0:
            raise ValueError(f"head must be >= 0, got {self.head}")
        if self.head == self.id:
            raise ValueError(f"token {self.id} is its own head")

    def to_line(self) -> str:
        lemma, xpos, feats, deps, misc = self.misc
        cols = [str(self.id), self.form, lemma, self.upos, xpos, feats,
                str(self.head), self.deprel, deps, misc]
        return "\t".join(cols)


@dataclass
class Sentence:
    tokens: list[Token]
    comments: list[str] = field(default_factory=list)
    treebank_id: str = ""
    # (number of tokens preceding the line, raw line)
    preserved: list[tuple[int, str]] = field(default_factory=list)
    # 0-based position within the source file; keys contextual vectors
    index: int | None = None

    def __post_init__(self):
        if not self.tokens:
            raise ValueError("a sentence needs at least one token")
        for i, tok in enumerate(self.tokens, 1):
            if tok.id != i:
                raise ValueError(f"token ids must be 1..N in order; found {tok.id} at position {i}")

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def forms(self) -> list[str]:
        return [t.form for t in self.tokens]

    @property
    def heads(self) -> list[int]:
        return [t.head for t in self.tokens]

    @property
    def labels(self) -> list[str]:
        return [t.deprel for t in self.tokens]

    def with_tree(self, heads: Sequence[int], labels: Sequence[str]) -> "Sentence":
        """Copy of the sentence with HEAD/DEPREL replaced."""
        if len(heads) != len(self.tokens) or len(labels) != len(self.tokens):
            raise ValueError("tree length does not match sentence length")
        toks = [replace(t, head=int(h), deprel=str(l))
                for t, h, l in zip(self.tokens, heads, labels)]
        return Sentence(toks, list(self.comments), self.treebank_id, list(self.preserved),
                        self.index)


@dataclass(frozen=True)
class DepTree:
    heads: tuple[int, ...]
    labels: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.heads)

    @property
    def root(self) -> int:
        return self.heads.index(ROOT) + 1


def _parse_token(cols: list[str], lineno: int) -> Token:
    try:
        tid = int(cols[0])
    except ValueError:
        raise ConlluError(f"non-integer token id {cols[0]!r}", lineno) from None
    try:
        head = int(cols[6])
    except ValueError:
        raise ConlluError(f"non-integer head {cols[6]!r}", lineno) from None
    try:
        return Token(tid, cols[1], cols[3], head, cols[7],
                     (cols[2], cols[4], cols[5], cols[8], cols[9]))
    except ValueError as exc:
        raise ConlluError(str(exc), lineno) from None


def _is_special_id(tid: str) -> bool:
    return "-" in tid or "." in tid


def read_conllu(text: str, treebank_id: str = "") -> list[Sentence]:
    """Parse CoNLL-U text into sentences.

    Raises ConlluError (with the offending line number) on a wrong column
    count, a non-integer head or a gap in the token id sequence.
    """
    sentences: list[Sentence] = []
    comments: list[str] = []
    preserved: list[tuple[int, str]] = []
    tokens: list[Token] = []
    start = 0

    def flush(lineno):
        nonlocal comments, preserved, tokens
        if tokens:
            tb = treebank_id
            for c in comments:
                if c.startswith(TREEBANK_COMMENT):
                    tb = c[len(TREEBANK_COMMENT):].strip()
            sentences.append(Sentence(tokens, comments, tb, preserved, len(sentences)))
        elif comments or preserved:
            raise ConlluError("sentence block without tokens", start or lineno)
        comments, preserved, tokens = [], [], []

    lineno = 0
    for lineno, line in enumerate(text.split("\n"), 1):
        line = line.rstrip("\r")
        if not line.strip():
            flush(lineno)
            continue
        if not tokens and not comments and not preserved:
            start = lineno
        if line.startswith("#"):
            comments.append(line)
            continue
        cols = line.split("\t")
        if len(cols) != 10:
            raise ConlluError(f"expected 10 tab-separated columns, found {len(cols)}", lineno)
        if _is_special_id(cols[0]):
            preserved.append((len(tokens), line))
            continue
        tok = _parse_token(cols, lineno)
        if tok.id != len(tokens) + 1:
            raise ConlluError(f"token id gap: expected {len(tokens) + 1}, found {tok.id}", lineno)
        tokens.append(tok)
    flush(lineno)
    return sentences


def read_conllu_file(path: str | Path, treebank_id: str | None = None) -> list[Sentence]:
    path = Path(path)
    if treebank_id is None:
        treebank_id = path.name.split(".")[0]
    return read_conllu(path.read_text(encoding="utf-8"), treebank_id)


def write_conllu(sentences: Iterable[Sentence]) -> str:
    out: list[str] = []
    for sent in sentences:
        out.extend(sent.comments)
        pending = sorted(sent.preserved, key=lambda p: p[0])
        k = 0
        for i, tok in enumerate(sent.tokens):
            while k < len(pending) and pending[k][0] <= i:
                out.append(pending[k][1])
                k += 1
            out.append(tok.to_line())
        out.extend(line for _, line in pending[k:])
        out.append("")
    return "".join(line + "\n" for line in out)


def write_conllu_file(path: str | Path, sentences: Iterable[Sentence]) -> None:
    Path(path).write_text(write_conllu(sentences), encoding="utf-8")


def find_cycle(heads: Sequence[int]) -> list[int]:
    """Token ids (1-based) of one cycle in ``heads``, or [] if acyclic."""
    n = len(heads)
    state = [0] * (n + 1)  # 0 unseen, 1 on current path, 2 done
    for start in range(1, n + 1):
        path = []
        node = start
        while node != ROOT and state[node] == 0:
            state[node] = 1
            path.append(node)
            node = heads[node - 1]
        if node != ROOT and state[node] == 1:
            return path[path.index(node):]
        for p in path:
            state[p] = 2
    return []


def check_heads(heads: Sequence[int]) -> None:
    """Raise TreeError unless ``heads`` encodes a single-rooted tree."""
    n = len(heads)
    if n == 0:
        raise TreeError("empty tree")
    bad = [i for i, h in enumerate(heads, 1) if not 0 <= h <= n or h == i]
    if bad:
        raise TreeError(f"head out of range or self-loop at tokens {bad}", bad)
    cycle = find_cycle(heads)
    if cycle:
        raise TreeError(f"cycle through tokens {sorted(cycle)}", sorted(cycle))
    roots = [i for i, h in enumerate(heads, 1) if h == ROOT]
    if len(roots) != 1:
        what = "no root" if not roots else "multiple roots"
        raise TreeError(f"{what}: root-attached tokens {roots}", roots)


def validate_tree(sentence: Sentence) -> DepTree:
    heads = sentence.heads
    check_heads(heads)
    return DepTree(tuple(heads), tuple(sentence.labels))


def tree_from_heads(heads: Sequence[int], labels: Sequence[str] | None = None) -> DepTree:
    check_heads(heads)
    if labels is None:
        labels = ["_"] * len(heads)
    return DepTree(tuple(int(h) for h in heads), tuple(labels))


def dependents(heads: Sequence[int]) -> list[list[int]]:
    """Children of each node 0..N, ascending."""
    kids: list[list[int]] = [[] for _ in range(len(heads) + 1)]
    for d, h in enumerate(heads, 1):
        kids[h].append(d)
    return kids


def nonprojective_arcs(tree: DepTree | Sequence[int]) -> set[int]:
    """Dependents whose incoming arc spans a word not dominated by its head."""
    heads = tree.heads if isinstance(tree, DepTree) else tuple(tree)
    n = len(heads)
    # ancestor sets via DFS from root; n is small enough for an n x n bitmap
    dominated = np.zeros((n + 1, n + 1), dtype=bool)
    kids = dependents(heads)
    order = [ROOT]
    for node in order:
        order.extend(kids[node])
    for node in order:
        dominated[node, node] = True
        if node != ROOT:
            dominated[:, node] |= dominated[:, heads[node - 1]]
    out = set()
    for d, h in enumerate(heads, 1):
        lo, hi = min(h, d), max(h, d)
        if hi - lo > 1 and not dominated[h, lo + 1:hi].all():
            out.add(d)
    return out


def is_projective(tree: DepTree | Sequence[int]) -> bool:
    return not nonprojective_arcs(tree)
