"""Synthetic treebank and synthetic contextual vectors for smoke tests.

Sentences follow a small English-like grammar. Two properties are built in:

* an extraposed relative clause ("... that slept") hangs off the subject
  noun across the main verb, giving a non-projective arc;
* a prepositional phrase after an object attaches to the verb (obl) or to
  the object (nmod) by a hidden coin flip, so surface form alone cannot
  always recover the gold tree.

The synthetic contextual vectors encode each token's gold head offset,
which resolves exactly that ambiguity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .treebank import Sentence, Token

DETS = ["the", "a", "this", "every"]
ADJS = ["old", "red", "small", "happy", "quiet", "big", "new", "lazy"]
NOUNS = ["dog", "cat", "man", "girl", "bird", "house", "car", "tree", "park", "river",
         "book", "friend", "teacher", "garden", "window", "hill"]
TVERBS = ["saw", "liked", "found", "watched", "carried", "painted", "followed", "met"]
IVERBS = ["slept", "laughed", "arrived", "waited", "sang", "ran"]
ADPS = ["in", "near", "with", "behind", "under"]
ADVS = ["quickly", "today", "again", "often"]


@dataclass
class ToyGrammar:
    p_det: float = 0.8
    p_adj: float = 0.3
    p_object: float = 0.8
    p_pp: float = 0.85
    p_adv: float = 0.3
    p_relative: float = 0.3
    min_len: int = 3
    max_len: int = 12


class _Builder:
    def __init__(self):
        self.rows: list[list] = []  # [form, upos, head(ref), deprel]

    def add(self, form, upos, deprel) -> int:
        self.rows.append([form, upos, None, deprel])
        return len(self.rows) - 1

    def attach(self, dep: int, head: int | None) -> None:
        self.rows[dep][2] = head


def _noun_phrase(b: _Builder, rng, g: ToyGrammar, deprel: str) -> int:
    det = adj = None
    if rng.random() < g.p_det:
        det = b.add(str(rng.choice(DETS)), "DET", "det")
    if rng.random() < g.p_adj:
        adj = b.add(str(rng.choice(ADJS)), "ADJ", "amod")
    noun = b.add(str(rng.choice(NOUNS)), "NOUN", deprel)
    for k in (det, adj):
        if k is not None:
            b.attach(k, noun)
    return noun


def toy_sentence(rng: np.random.Generator, g: ToyGrammar = ToyGrammar()) -> list[tuple[str, str, int, str]]:
    """One sentence as (form, upos, head, deprel) rows; heads are 1-based."""
    b = _Builder()
    subj = _noun_phrase(b, rng, g, "nsubj")
    transitive = rng.random() < g.p_object
    verb = b.add(str(rng.choice(TVERBS if transitive else IVERBS)), "VERB", "root")
    b.attach(subj, verb)
    obj = None
    if transitive:
        obj = _noun_phrase(b, rng, g, "obj")
        b.attach(obj, verb)
    if rng.random() < g.p_pp:
        adp = b.add(str(rng.choice(ADPS)), "ADP", "case")
        pobj = _noun_phrase(b, rng, g, "obl")
        b.attach(adp, pobj)
        if obj is not None and rng.random() < 0.5:
            b.rows[pobj][3] = "nmod"
            b.attach(pobj, obj)
        else:
            b.attach(pobj, verb)
    if rng.random() < g.p_adv:
        adv = b.add(str(rng.choice(ADVS)), "ADV", "advmod")
        b.attach(adv, verb)
    if rng.random() < g.p_relative:
        that = b.add("that", "PRON", "nsubj")
        rel = b.add(str(rng.choice(IVERBS)), "VERB", "acl")
        b.attach(that, rel)
        b.attach(rel, subj)
    punct = b.add(".", "PUNCT", "punct")
    b.attach(punct, verb)
    return [(f, u, 0 if h is None else h + 1, r) for f, u, h, r in b.rows]


def toy_treebank(n: int, seed: int, grammar: ToyGrammar = ToyGrammar(),
                 treebank_id: str = "toy") -> list[Sentence]:
    rng = np.random.default_rng(seed)
    out: list[Sentence] = []
    while len(out) < n:
        rows = toy_sentence(rng, grammar)
        if not grammar.min_len <= len(rows) <= grammar.max_len:
            continue
        toks = [Token(i, f, u, h, r) for i, (f, u, h, r) in enumerate(rows, 1)]
        k = len(out)
        out.append(Sentence(toks, [f"# sent_id = {treebank_id}-{k + 1}",
                                   "# text = " + " ".join(t.form for t in toks)],
                            treebank_id, index=k))
    return out


def synthetic_contextual(sentences, n_layers: int = 3, dim: int = 32, seed: int = 0,
                         strengths=(0.0, 0.5, 1.0), noise: float = 0.1):
    """{key: (forms, tensor)} where layer j carries a one-hot code of the gold
    head offset scaled by strengths[j], plus Gaussian noise. Offsets are
    clipped to +-(dim // 2 - 2); the last dimension flags root attachment."""
    if len(strengths) != n_layers:
        raise ValueError("one strength per layer is required")
    rng = np.random.default_rng(seed)
    span = dim // 2 - 2
    out = {}
    for k, s in enumerate(sentences):
        T = rng.normal(0.0, noise, size=(len(s), n_layers, dim)).astype(np.float32)
        for i, tok in enumerate(s.tokens, 1):
            if tok.head == 0:
                slot = dim - 1
            else:
                slot = int(np.clip(tok.head - i, -span, span)) + span
            for j, w in enumerate(strengths):
                T[i - 1, j, slot] += w
        key = str(s.index if s.index is not None else k)
        out[key] = (s.forms, T)
    return out
