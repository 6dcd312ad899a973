"""Evaluation and contrastive error analysis.

All tokens count, punctuation included. Precision/recall pairs keep their
integer counts so that pooled numbers can be recomputed exactly.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .treebank import ROOT, DepTree, Sentence, nonprojective_arcs

ROOT_BIN = "root"
TAIL_BIN = ">=10"
LENGTH_BINS = ("1-10", "11-20", "21-30", "31-40", "41-50", "50+")
ALL = "*"

CSV_HEADER = ("system", "treebank_id", "metric", "bin", "value", "numerator", "denominator")
CSV_NOTES = (
    "# error profile",
    "# tokens: all tokens counted, punctuation included",
    "# deprel_precision keyed by predicted relation; deprel_recall keyed by gold relation",
    "# values are fractions rounded to 4 decimals; *_f rows carry no counts",
    "# bins without gold or predicted arcs are omitted",
)


def _tree(x) -> DepTree:
    if isinstance(x, DepTree):
        return x
    if isinstance(x, Sentence):
        return DepTree(tuple(x.heads), tuple(x.labels))
    raise TypeError(f"expected a DepTree or Sentence, got {type(x).__name__}")


@dataclass(frozen=True)
class Ratio:
    numerator: int
    denominator: int

    @property
    def value(self) -> float | None:
        return self.numerator / self.denominator if self.denominator else None

    def __add__(self, other: "Ratio") -> "Ratio":
        return Ratio(self.numerator + other.numerator, self.denominator + other.denominator)


@dataclass(frozen=True)
class PR:
    """Precision counted over predicted items, recall over gold items."""

    precision_counts: Ratio
    recall_counts: Ratio

    @property
    def precision(self) -> float | None:
        return self.precision_counts.value

    @property
    def recall(self) -> float | None:
        return self.recall_counts.value

    @property
    def f(self) -> float:
        """Harmonic mean; an undefined side counts as 0."""
        p, r = self.precision or 0.0, self.recall or 0.0
        return 2 * p * r / (p + r) if p + r else 0.0


# --------------------------------------------------------------------------
# per-arc measures


def attachment_scores(gold, pred) -> tuple[float, float]:
    """(LAS, UAS) as fractions over all tokens. Accepts one tree/sentence
    or aligned lists of them."""
    las, uas = attachment_counts(gold, pred)
    return las.value, uas.value


def attachment_counts(gold, pred) -> tuple[Ratio, Ratio]:
    if not isinstance(gold, (DepTree, Sentence)):
        gold, pred = list(gold), list(pred)
        if len(gold) != len(pred):
            raise ValueError(f"{len(gold)} gold vs {len(pred)} predicted sentences")
        las, uas = Ratio(0, 0), Ratio(0, 0)
        for g, p in zip(gold, pred):
            l, u = attachment_counts(g, p)
            las, uas = las + l, uas + u
        return las, uas
    g, p = _tree(gold), _tree(pred)
    if len(g) != len(p):
        raise ValueError(f"token count mismatch: {len(g)} gold vs {len(p)} predicted")
    head_ok = [gh == ph for gh, ph in zip(g.heads, p.heads)]
    both_ok = [ok and gl == pl for ok, gl, pl in zip(head_ok, g.labels, p.labels)]
    return Ratio(sum(both_ok), len(g)), Ratio(sum(head_ok), len(g))


def dep_length(head: int, dep: int) -> str:
    if head == ROOT:
        return ROOT_BIN
    d = abs(head - dep)
    return TAIL_BIN if d >= 10 else str(d)


def depths(heads: Sequence[int]) -> list[int]:
    """Arcs on the path from the root child down to each token; the token
    attached to ROOT has depth 0."""
    out = [-1] * len(heads)

    def depth(d):
        if out[d - 1] < 0:
            h = heads[d - 1]
            out[d - 1] = 0 if h == ROOT else depth(h) + 1
        return out[d - 1]

    for d in range(1, len(heads) + 1):
        depth(d)
    return out


def _distance_bin(k: int) -> str:
    return TAIL_BIN if k >= 10 else str(k)


def root_distance(tree, token: int) -> str:
    return _distance_bin(depths(_tree(tree).heads)[token - 1])


def sentence_length_bin(n: int) -> str:
    if n > 50:
        return LENGTH_BINS[-1]
    return LENGTH_BINS[(n - 1) // 10]


def bin_order(label: str):
    if label == ROOT_BIN:
        return (0, 0)
    if label == TAIL_BIN:
        return (2, 0)
    if label in LENGTH_BINS:
        return (1, LENGTH_BINS.index(label))
    return (1, int(label))


def _binned(triples: Iterable[tuple[str, str, bool]]) -> dict[str, PR]:
    """triples: (gold bin, predicted bin, labeled-correct)."""
    pc: dict[str, list[int]] = {}
    rc: dict[str, list[int]] = {}
    for gb, pb, ok in triples:
        pc.setdefault(pb, [0, 0])
        pc[pb][0] += ok
        pc[pb][1] += 1
        rc.setdefault(gb, [0, 0])
        rc[gb][0] += ok
        rc[gb][1] += 1
    out = {}
    for b in sorted(set(pc) | set(rc), key=bin_order):
        out[b] = PR(Ratio(*pc.get(b, (0, 0))), Ratio(*rc.get(b, (0, 0))))
    return out


def binned_f(gold, pred, binner: Callable[[DepTree, int], str]) -> dict[str, PR]:
    """Per-bin labeled precision (binned by the predicted arc), recall
    (binned by the gold arc) and F. Empty bins are absent."""
    triples = []
    for g, p in zip(_as_list(gold), _as_list(pred)):
        g, p = _tree(g), _tree(p)
        for d in range(1, len(g) + 1):
            ok = g.heads[d - 1] == p.heads[d - 1] and g.labels[d - 1] == p.labels[d - 1]
            triples.append((binner(g, d), binner(p, d), ok))
    return _binned(triples)


def dep_length_binner(tree: DepTree, d: int) -> str:
    return dep_length(tree.heads[d - 1], d)


def _as_list(x) -> list:
    return [x] if isinstance(x, (DepTree, Sentence)) else list(x)


def nonproj_pr(gold, pred) -> PR:
    """Labeled precision over arcs non-projective in the prediction, recall
    over arcs non-projective in the gold tree. Undefined sides are None."""
    pc, rc = Ratio(0, 0), Ratio(0, 0)
    for g, p in zip(_as_list(gold), _as_list(pred)):
        g, p = _tree(g), _tree(p)
        ok = [gh == ph and gl == pl for gh, ph, gl, pl in zip(g.heads, p.heads, g.labels, p.labels)]
        gn, pn = nonprojective_arcs(g), nonprojective_arcs(p)
        pc += Ratio(sum(ok[d - 1] for d in pn), len(pn))
        rc += Ratio(sum(ok[d - 1] for d in gn), len(gn))
    return PR(pc, rc)


def group_metrics(gold: Sequence[Sentence], pred) -> tuple[dict[str, Ratio], dict[str, PR]]:
    """Labeled accuracy per gold UPOS, and per-relation precision (keyed by
    the predicted relation) and recall (keyed by the gold relation)."""
    upos: dict[str, Ratio] = {}
    pc: dict[str, Ratio] = {}
    rc: dict[str, Ratio] = {}
    for gs, p in zip(_as_list(gold), _as_list(pred)):
        g, p = _tree(gs), _tree(p)
        for k, tok in enumerate(gs.tokens):
            ok = int(g.heads[k] == p.heads[k] and g.labels[k] == p.labels[k])
            upos[tok.upos] = upos.get(tok.upos, Ratio(0, 0)) + Ratio(ok, 1)
            pc[p.labels[k]] = pc.get(p.labels[k], Ratio(0, 0)) + Ratio(ok, 1)
            rc[g.labels[k]] = rc.get(g.labels[k], Ratio(0, 0)) + Ratio(ok, 1)
    by_rel = {r: PR(pc.get(r, Ratio(0, 0)), rc.get(r, Ratio(0, 0))) for r in sorted(set(pc) | set(rc))}
    return dict(sorted(upos.items())), by_rel


def las_by_sentence_length_counts(gold, pred) -> dict[str, Ratio]:
    out: dict[str, Ratio] = {}
    for g, p in zip(_as_list(gold), _as_list(pred)):
        las, _ = attachment_counts(g, p)
        b = sentence_length_bin(len(_tree(g)))
        out[b] = out.get(b, Ratio(0, 0)) + las
    return {b: out[b] for b in LENGTH_BINS if b in out}


def las_by_sentence_length(gold, pred) -> dict[str, float]:
    """Token-level LAS (percent) pooled within sentence-length bins."""
    return {b: 100.0 * r.value for b, r in las_by_sentence_length_counts(gold, pred).items()}


# --------------------------------------------------------------------------
# corpus-level utilities


def sample_balanced(dev_sets: Sequence[Sequence[Sentence]], seed: int) -> list[Sentence]:
    """k = size of the smallest set; draw k sentences without replacement
    from every set (original order kept). Sets of size k pass through."""
    if not dev_sets:
        raise ValueError("no development sets given")
    sizes = [len(s) for s in dev_sets]
    if min(sizes) == 0:
        raise ValueError("cannot sample from an empty development set")
    k = min(sizes)
    rng = np.random.default_rng(seed)
    out: list[Sentence] = []
    for s in dev_sets:
        if len(s) == k:
            out.extend(s)
        else:
            idx = np.sort(rng.choice(len(s), size=k, replace=False))
            out.extend(s[i] for i in idx)
    return out


def error_reduction(base_las: float, new_las: float) -> float:
    """Share (percent) of the baseline's remaining errors removed."""
    if not 0 <= base_las < 100:
        raise ValueError(f"baseline LAS must lie in [0, 100), got {base_las}")
    return 100.0 * (new_las - base_las) / (100.0 - base_las)


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float
    p_value: float
    n: int
    method: str


def _average_ranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    sv = values[order]
    i = 0
    while i < len(sv):
        j = i
        while j + 1 < len(sv) and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def _exact_lower_tail(doubled: Sequence[int], w2: int) -> float:
    """P(T+ <= w) under random signs, ranks given doubled so they are integers."""
    total = sum(doubled)
    counts = np.zeros(total + 1)
    counts[0] = 1.0
    for r in doubled:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[:total + 1 - r]
        counts += shifted
    return float(counts[:w2 + 1].sum() / counts.sum())


def wilcoxon_signed_rank(diffs: Iterable[float], method: str = "auto") -> WilcoxonResult:
    """Two-sided Wilcoxon signed-rank test on paired differences.

    Zeros are dropped and tied magnitudes share their average rank. The
    exact null distribution is used for n <= 25 ("auto") and the normal
    approximation with continuity and tie corrections above that.
    """
    d = np.asarray([x for x in diffs if x != 0], dtype=float)
    n = len(d)
    if n == 0:
        raise ValueError("all differences are zero")
    ranks = _average_ranks(np.abs(d))
    w_pos = float(ranks[d > 0].sum())
    w = min(w_pos, float(ranks.sum()) - w_pos)
    if method == "auto":
        method = "exact" if n <= 25 else "normal"
    if method == "exact":
        doubled = [int(round(2 * r)) for r in ranks]
        p = min(1.0, 2.0 * _exact_lower_tail(doubled, int(round(2 * w))))
    elif method == "normal":
        mean = n * (n + 1) / 4.0
        _, tie_counts = np.unique(np.abs(d), return_counts=True)
        var = n * (n + 1) * (2 * n + 1) / 24.0 - float(np.sum(tie_counts ** 3 - tie_counts)) / 48.0
        z = (w - mean + 0.5) / math.sqrt(var) if var > 0 else 0.0
        p = min(1.0, math.erfc(-z / math.sqrt(2.0)))
    else:
        raise ValueError(f"unknown method {method!r}")
    return WilcoxonResult(w, p, n, method)


# --------------------------------------------------------------------------
# profiles


@dataclass(frozen=True)
class ArcJudgment:
    dep: int
    gold_head: int
    gold_label: str
    pred_head: int
    pred_label: str
    upos: str
    correct_unlabeled: bool
    correct_labeled: bool
    gold_dep_length: str
    pred_dep_length: str
    gold_root_distance: str
    pred_root_distance: str
    gold_nonprojective: bool
    pred_nonprojective: bool


def judge(gold: Sentence, pred) -> list[ArcJudgment]:
    g, p = _tree(gold), _tree(pred)
    if len(g) != len(p):
        raise ValueError(f"token count mismatch: {len(g)} gold vs {len(p)} predicted")
    gd, pd = depths(g.heads), depths(p.heads)
    gn, pn = nonprojective_arcs(g), nonprojective_arcs(p)
    out = []
    for d in range(1, len(g) + 1):
        gh, ph, gl, pl = g.heads[d - 1], p.heads[d - 1], g.labels[d - 1], p.labels[d - 1]
        out.append(ArcJudgment(d, gh, gl, ph, pl, gold.tokens[d - 1].upos, gh == ph,
                               gh == ph and gl == pl, dep_length(gh, d), dep_length(ph, d),
                               _distance_bin(gd[d - 1]), _distance_bin(pd[d - 1]),
                               d in gn, d in pn))
    return out


@dataclass
class ErrorProfile:
    las: Ratio
    uas: Ratio
    by_dep_length: dict[str, PR]
    by_root_distance: dict[str, PR]
    nonproj: PR
    by_upos: dict[str, Ratio]
    by_deprel: dict[str, PR]
    by_sentence_length: dict[str, Ratio]
    n_sentences: int = 0
    meta: dict = field(default_factory=dict)


def _profile(gold: Sequence[Sentence], pred: Sequence) -> ErrorProfile:
    judgments = [judge(g, p) for g, p in zip(gold, pred)]
    flat = [j for js in judgments for j in js]
    las = Ratio(sum(j.correct_labeled for j in flat), len(flat))
    uas = Ratio(sum(j.correct_unlabeled for j in flat), len(flat))
    by_len = _binned((j.gold_dep_length, j.pred_dep_length, j.correct_labeled) for j in flat)
    by_dist = _binned((j.gold_root_distance, j.pred_root_distance, j.correct_labeled) for j in flat)
    nonproj = PR(Ratio(sum(j.correct_labeled for j in flat if j.pred_nonprojective),
                       sum(j.pred_nonprojective for j in flat)),
                 Ratio(sum(j.correct_labeled for j in flat if j.gold_nonprojective),
                       sum(j.gold_nonprojective for j in flat)))
    by_upos, by_rel = group_metrics(list(gold), list(pred))
    by_sent = las_by_sentence_length_counts(list(gold), list(pred))
    return ErrorProfile(las, uas, by_len, by_dist, nonproj, by_upos, by_rel, by_sent, len(gold))


def _check_aligned(gold: Sequence[Sentence], pred: Sequence, name: str) -> None:
    if len(gold) != len(pred):
        raise ValueError(f"system {name}: {len(pred)} sentences, gold has {len(gold)}")
    for k, (g, p) in enumerate(zip(gold, pred)):
        if len(g) != len(_tree(p)):
            raise ValueError(f"system {name}: sentence {k} has {len(_tree(p))} tokens, gold has {len(g)}")
        if isinstance(p, Sentence) and p.forms != g.forms:
            raise ValueError(f"system {name}: sentence {k} forms differ from gold")


def compute_profile(gold: Sequence[Sentence], pred_per_system: Mapping[str, Sequence],
                    group_by_language: bool = False) -> dict[tuple[str, str], ErrorProfile]:
    """Profiles keyed by (system, treebank_id); treebank_id is ALL for the
    pooled profile, and per-treebank profiles follow when requested."""
    gold = list(gold)
    out: dict[tuple[str, str], ErrorProfile] = {}
    for name, pred in pred_per_system.items():
        pred = list(pred)
        _check_aligned(gold, pred, name)
        out[(name, ALL)] = _profile(gold, pred)
        if group_by_language:
            for tb in sorted({g.treebank_id for g in gold}):
                idx = [k for k, g in enumerate(gold) if g.treebank_id == tb]
                out[(name, tb)] = _profile([gold[k] for k in idx], [pred[k] for k in idx])
    return out


def _fmt(x: float | None) -> str:
    return "" if x is None else f"{x:.4f}"


def _ratio_row(system, tb, metric, b, r: Ratio):
    return [system, tb, metric, b, _fmt(r.value), str(r.numerator), str(r.denominator)]


def _pr_rows(system, tb, prefix, b, pr: PR, with_f: bool = True):
    rows = []
    if pr.precision_counts.denominator:
        rows.append(_ratio_row(system, tb, f"{prefix}_precision", b, pr.precision_counts))
    if pr.recall_counts.denominator:
        rows.append(_ratio_row(system, tb, f"{prefix}_recall", b, pr.recall_counts))
    if with_f:
        rows.append([system, tb, f"{prefix}_f", b, _fmt(pr.f), "", ""])
    return rows


def profile_rows(profiles: Mapping[tuple[str, str], ErrorProfile]) -> list[list[str]]:
    rows = []
    for (system, tb), prof in profiles.items():
        rows.append(_ratio_row(system, tb, "las", ALL, prof.las))
        rows.append(_ratio_row(system, tb, "uas", ALL, prof.uas))
        for b, pr in prof.by_dep_length.items():
            rows.extend(_pr_rows(system, tb, "dep_length", b, pr))
        for b, pr in prof.by_root_distance.items():
            rows.extend(_pr_rows(system, tb, "root_distance", b, pr))
        rows.extend(_pr_rows(system, tb, "nonproj", ALL, prof.nonproj, with_f=False))
        for tag, r in prof.by_upos.items():
            rows.append(_ratio_row(system, tb, "upos_las", tag, r))
        for rel, pr in prof.by_deprel.items():
            rows.extend(_pr_rows(system, tb, "deprel", rel, pr, with_f=False))
        for b, r in prof.by_sentence_length.items():
            rows.append(_ratio_row(system, tb, "sentence_length_las", b, r))
    return rows


def profile_csv(profiles: Mapping[tuple[str, str], ErrorProfile]) -> str:
    buf = io.StringIO()
    for line in CSV_NOTES:
        buf.write(line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    w.writerows(profile_rows(profiles))
    return buf.getvalue()
