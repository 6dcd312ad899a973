"""Losses, the per-epoch training loop, model selection and multi-seed runs."""

from __future__ import annotations

import hashlib
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .analysis import attachment_counts
from .graph import legal_cells, single_root_cle, tree_score
from .model import ModelConfig, Parser, build_parser
from .nn import adam_step, softmax
from .representations import ContextualStore, parse_layer_range, vocabulary
from .transition import (
    LEFT_ARC, RIGHT_ARC, apply, decode_output, dynamic_costs, feature_slots, initial_config,
    masked_argmax, output_index, slot_input,
)
from .treebank import DepTree, Sentence, is_projective, validate_tree

log = logging.getLogger(__name__)

MANIFEST_FILE = "manifest.txt"


@dataclass
class TrainConfig:
    mode: str = "transition"
    epochs: int = 30
    seed: int = 1
    p_agg: float = 0.1
    explore_from_epoch: int = 2
    margin: float = 1.0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    ctx_vectors: str | None = None
    ctx_layers: str | None = None
    embeddings: str | None = None
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if self.mode not in ("transition", "graph"):
            raise ValueError(f"mode must be transition or graph, got {self.mode!r}")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0.0 <= self.p_agg <= 1.0:
            raise ValueError("p_agg must lie in [0, 1]")


# --------------------------------------------------------------------------
# losses


def transition_loss(scores: np.ndarray, costs: np.ndarray, margin: float = 1.0):
    """Hinge between the best zero-cost and the best costly legal output.

    ``costs`` holds one entry per output, ``inf`` for illegal ones. Returns
    (loss, d loss / d scores).
    """
    scores = np.asarray(scores, dtype=float)
    costs = np.asarray(costs, dtype=float)
    zero = costs == 0
    costly = np.isfinite(costs) & (costs > 0)
    if not zero.any():
        raise ValueError("no zero-cost transition among the legal ones")
    grad = np.zeros_like(scores)
    if not costly.any():
        return 0.0, grad
    good = int(np.argmax(np.where(zero, scores, -np.inf)))
    bad = int(np.argmax(np.where(costly, scores, -np.inf)))
    loss = margin - scores[good] + scores[bad]
    if loss <= 0:
        return 0.0, grad
    grad[good] -= 1.0
    grad[bad] += 1.0
    return float(loss), grad


def explore_choice(scores: np.ndarray, costs: np.ndarray, p_agg: float,
                   rng: np.random.Generator) -> int:
    """Output index to follow. With probability p_agg the overall best legal
    output (unless it is a costly SWAP), otherwise the best zero-cost one."""
    costs = np.asarray(costs, dtype=float)
    legal = np.isfinite(costs)
    explore = rng.random() < p_agg
    if explore:
        best = masked_argmax(scores, legal)
        if not (best == 1 and costs[1] > 0):
            return best
    return masked_argmax(scores, costs == 0)


def output_costs(config, tree: DepTree, labels: Sequence[str], projective: bool) -> np.ndarray:
    """Per-output cost: the kind's dynamic cost, plus one for an arc whose
    head is right but whose label is wrong."""
    L = len(labels)
    costs = np.full(2 + 2 * L, np.inf)
    kinds = dynamic_costs(config, tree, projective)
    for kind, c in kinds.items():
        if kind in (LEFT_ARC, RIGHT_ARC):
            d = config.stack[-1]
            h = config.buffer[0] if kind == LEFT_ARC else config.stack[-2]
            gold_ok = tree.heads[d - 1] == h
            for li, lab in enumerate(labels):
                costs[output_index(kind, li, L)] = c + (gold_ok and lab != tree.labels[d - 1])
        else:
            costs[output_index(kind, 0, L)] = c
    return costs


def graph_loss(matrix: np.ndarray, gold: DepTree, margin: float = 1.0):
    """Structured hinge with cost-augmented single-root decoding.

    Returns (loss, d loss / d matrix, decoded heads)."""
    S = np.asarray(matrix, dtype=float)
    n = S.shape[0] - 1
    gold_cells = np.zeros_like(S, dtype=bool)
    gold_cells[list(gold.heads), np.arange(1, n + 1)] = True
    legal = legal_cells(n)
    aug = np.where(legal & ~gold_cells, S + margin, S)
    pred = single_root_cle(aug)
    loss = tree_score(aug, pred) - tree_score(S, gold.heads)
    grad = np.zeros_like(S)
    if loss <= 0:
        return 0.0, grad, pred
    grad[pred, np.arange(1, n + 1)] += 1.0
    grad[list(gold.heads), np.arange(1, n + 1)] -= 1.0
    return float(loss), grad, pred


def label_loss(logits: np.ndarray, gold_idx: np.ndarray):
    """Summed cross-entropy; returns (loss, d loss / d logits)."""
    p = softmax(logits, axis=1)
    rows = np.arange(len(gold_idx))
    loss = -np.log(np.maximum(p[rows, gold_idx], 1e-300)).sum()
    grad = p.copy()
    grad[rows, gold_idx] -= 1.0
    return float(loss), grad


# --------------------------------------------------------------------------
# per-sentence updates


def _slots_backward(enc, slot_rows, dX):
    """Route gradients of stacked slot inputs back to token vectors and pad."""
    dvec = np.zeros_like(enc.vectors)
    dpad = np.zeros_like(enc.pad)
    d = enc.dim
    for slots, row in zip(slot_rows, dX):
        for k, s in enumerate(slots):
            piece = row[k * d:(k + 1) * d]
            if s < 0:
                dpad += piece
            else:
                dvec[s] += piece
    return dvec, dpad


def transition_update(parser, sentence: Sentence, tree: DepTree, ctx, cfg: TrainConfig,
                      explore: bool, rng_drop, rng_explore) -> float:
    enc, cache = parser.encode(sentence, ctx, train=True, rng=rng_drop)
    projective = is_projective(tree)
    p_agg = cfg.p_agg if explore and projective else 0.0
    config = initial_config(len(sentence))
    total = 0.0
    slot_rows, xs, hids, dys = [], [], [], []
    while not config.terminal:
        slots = feature_slots(config)
        x = slot_input(slots, enc.vectors, enc.pad)
        scores, (_, hid) = parser.scorer.forward(x)
        costs = output_costs(config, tree, parser.labels, projective)
        loss, dy = transition_loss(scores, costs, cfg.margin)
        if loss > 0:
            total += loss
            slot_rows.append(slots)
            xs.append(x)
            hids.append(hid)
            dys.append(dy)
        choice = explore_choice(scores, costs, p_agg, rng_explore)
        config = apply(config, decode_output(choice, parser.labels))
    if dys:
        dX = parser.scorer.backward(np.stack(dys), (np.stack(xs), np.stack(hids)))
        dvec, dpad = _slots_backward(enc, slot_rows, dX)
        parser.encode_backward(dvec, dpad, cache)
    return total


def graph_update(parser, sentence: Sentence, tree: DepTree, ctx, cfg: TrainConfig,
                 rng_drop) -> float:
    enc, cache = parser.encode(sentence, ctx, train=True, rng=rng_drop)
    V = enc.vectors
    S, acache = parser.arc.forward(V)
    loss, dS, _ = graph_loss(S, tree, cfg.margin)
    heads = np.asarray(tree.heads)
    X = np.concatenate([V[heads], V[1:]], axis=1)
    logits, lcache = parser.label_mlp.forward(X)
    gold_idx = np.array([parser.label_index[l] for l in tree.labels])
    lloss, dlogits = label_loss(logits, gold_idx)
    dV = parser.arc.backward(dS, acache) if loss > 0 else np.zeros_like(V)
    dXl = parser.label_mlp.backward(dlogits, lcache)
    d = enc.dim
    np.add.at(dV, heads, dXl[:, :d])
    dV[1:] += dXl[:, d:]
    parser.encode_backward(dV, None, cache)
    return loss + lloss


# --------------------------------------------------------------------------
# the loop


@dataclass
class RunManifest:
    config: dict
    seed: int
    dev_las: list[float]
    selected_epoch: int
    data: dict[str, str]
    extra: dict[str, str] = field(default_factory=dict)

    def to_text(self) -> str:
        lines = [f"seed = {self.seed}"]
        for k, v in _flatten(self.config):
            lines.append(f"config.{k} = {v}")
        for k in sorted(self.data):
            lines.append(f"data.{k} = {self.data[k]}")
        for k in sorted(self.extra):
            lines.append(f"{k} = {self.extra[k]}")
        for i, las in enumerate(self.dev_las, 1):
            lines.append(f"epoch.{i}.dev_las = {las:.4f}")
        lines.append(f"selected_epoch = {self.selected_epoch}")
        return "\n".join(lines) + "\n"


def _flatten(d: Mapping, prefix: str = ""):
    for k in sorted(d):
        v = d[k]
        if isinstance(v, Mapping):
            yield from _flatten(v, f"{prefix}{k}.")
        else:
            yield f"{prefix}{k}", v


def select_epoch(dev_las: Sequence[float]) -> int:
    """1-based epoch with the highest dev LAS; earliest on ties."""
    if not dev_las:
        raise ValueError("no epochs to select from")
    return int(np.argmax(np.asarray(dev_las))) + 1


def file_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def sentences_digest(sentences: Sequence[Sentence]) -> str:
    h = hashlib.sha256()
    for s in sentences:
        for t in s.tokens:
            h.update(f"{t.form}\t{t.upos}\t{t.head}\t{t.deprel}\n".encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()


def ctx_lookup(store: ContextualStore | None) -> Callable[[Sentence], np.ndarray | None]:
    if store is None:
        return lambda s: None
    return lambda s: store.get(str(s.index), s.forms)


def evaluate(parser: Parser, sentences: Sequence[Sentence],
             ctx: Callable[[Sentence], np.ndarray | None] = lambda s: None) -> tuple[float, float]:
    """(LAS, UAS) in percent."""
    preds = [parser.parse(s, ctx(s)) for s in sentences]
    las, uas = attachment_counts([validate_tree(s) for s in sentences], preds)
    return 100.0 * las.value, 100.0 * uas.value


def make_parser(cfg: TrainConfig, train_set: Sequence[Sentence], ctx_store: ContextualStore | None = None,
                pretrained: Mapping[str, np.ndarray] | None = None, extra_words: Sequence[str] = ()) -> Parser:
    words, chars = vocabulary(train_set)
    if pretrained:
        seen = set(words)
        words += [w for w in extra_words if w not in seen and (w in pretrained or w.lower() in pretrained)]
        table = dict(pretrained)
        for w in extra_words:
            if w not in table and w.lower() in pretrained:
                table[w] = pretrained[w.lower()]
        pretrained = table
    labels = sorted({t.deprel for s in train_set for t in s.tokens})
    mc = ModelConfig(**asdict(cfg.model))
    if pretrained:
        mc.word_dim = len(next(iter(pretrained.values())))
    if ctx_store is not None:
        mc.ctx_layers, mc.ctx_dim = ctx_store.n_layers, ctx_store.dim
        mc.ctx_range = parse_layer_range(cfg.ctx_layers, ctx_store.n_layers)
    ss = np.random.SeedSequence(cfg.seed)
    init_seed = int(ss.spawn(1)[0].generate_state(1)[0])
    return build_parser(cfg.mode, mc, words, chars, labels, init_seed, pretrained)


def train(cfg: TrainConfig, train_set: Sequence[Sentence], dev_set: Sequence[Sentence],
          out_dir: str | Path | None = None, ctx_store: ContextualStore | None = None,
          dev_ctx_store: ContextualStore | None = None,
          pretrained: Mapping[str, np.ndarray] | None = None,
          data_ids: Mapping[str, str] | None = None,
          progress: Callable[[int, float, float], None] | None = None) -> tuple[Parser, RunManifest]:
    """Train for cfg.epochs, keep the parameters of the best dev epoch and,
    if ``out_dir`` is given, write checkpoint, metadata and manifest there."""
    if not train_set:
        raise ValueError("training set is empty")
    if not dev_set:
        raise ValueError("development set is empty; model selection needs it")
    if (ctx_store is None) != (dev_ctx_store is None):
        raise ValueError("contextual vectors must be given for both training and development data")
    trees = [validate_tree(s) for s in train_set]
    extra = [w for s in dev_set for w in s.forms]
    parser = make_parser(cfg, train_set, ctx_store, pretrained, extra)
    seeds = np.random.SeedSequence(cfg.seed).spawn(4)
    rng_shuffle, rng_drop, rng_explore = (np.random.default_rng(s) for s in seeds[1:])
    train_ctx = ctx_lookup(ctx_store)
    dev_ctx = ctx_lookup(dev_ctx_store)
    store = parser.store

    dev_las: list[float] = []
    best_values = None
    for epoch in range(1, cfg.epochs + 1):
        order = rng_shuffle.permutation(len(train_set))
        explore = epoch >= cfg.explore_from_epoch
        epoch_loss = 0.0
        for i in order:
            s, tree = train_set[i], trees[i]
            store.zero_grad()
            if cfg.mode == "transition":
                loss = transition_update(parser, s, tree, train_ctx(s), cfg, explore, rng_drop, rng_explore)
            else:
                loss = graph_update(parser, s, tree, train_ctx(s), cfg, rng_drop)
            epoch_loss += loss
            adam_step(store, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
        las, _ = evaluate(parser, dev_set, dev_ctx)
        dev_las.append(las)
        if las > max(dev_las[:-1], default=-1.0):
            best_values = {k: v.copy() for k, v in store.params.items()}
        log.info("epoch %d loss %.3f dev LAS %.2f", epoch, epoch_loss, las)
        if progress is not None:
            progress(epoch, epoch_loss, las)
    store.load_values(best_values)

    snapshot = asdict(cfg)
    snapshot["model"] = asdict(parser.config)
    data = dict(data_ids or {})
    data.setdefault("train_sentences", sentences_digest(train_set))
    data.setdefault("dev_sentences", sentences_digest(dev_set))
    manifest = RunManifest(snapshot, cfg.seed, dev_las, select_epoch(dev_las), data,
                           {"n_params": str(store.n_params()),
                            "labels": " ".join(parser.labels)})
    if out_dir is not None:
        out_dir = Path(out_dir)
        parser.save(out_dir)
        (out_dir / MANIFEST_FILE).write_text(manifest.to_text(), encoding="utf-8")
    return parser, manifest


@dataclass
class SeedResult:
    seed: int
    las: float
    uas: float


@dataclass
class MultiSeedResult:
    runs: list[SeedResult]

    @property
    def las(self) -> float:
        return float(np.mean([r.las for r in self.runs]))

    @property
    def uas(self) -> float:
        return float(np.mean([r.uas for r in self.runs]))


def multi_seed(cfg: TrainConfig, train_set, dev_set, test_set, seeds: Sequence[int] = (1, 2, 3),
               ctx_stores: tuple | None = None, out_dir: str | Path | None = None) -> MultiSeedResult:
    """Train once per seed and report each seed's test scores plus their mean."""
    if not seeds:
        raise ValueError("at least one seed is required")
    train_ctx, dev_ctx, test_ctx = ctx_stores or (None, None, None)
    runs = []
    for seed in seeds:
        run_cfg = TrainConfig(**{**asdict(cfg), "seed": seed, "model": ModelConfig(**asdict(cfg.model))})
        sub = None if out_dir is None else Path(out_dir) / f"seed{seed}"
        parser, _ = train(run_cfg, train_set, dev_set, sub, train_ctx, dev_ctx)
        las, uas = evaluate(parser, test_set, ctx_lookup(test_ctx))
        runs.append(SeedResult(seed, las, uas))
    return MultiSeedResult(runs)
