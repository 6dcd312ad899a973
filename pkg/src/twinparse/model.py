"""The two parsers: shared input/encoder plumbing plus decoder heads."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .encoder import EncodedSentence, SentenceEncoder
from .graph import ArcScorer, assign_labels, single_root_cle
from .nn import Mlp, ParamStore, load_checkpoint, save_checkpoint
from .representations import CharEmbedder, EmbeddingTable, Featurizer, ScalarMix
from .transition import N_SLOTS, feature_slots, greedy_decode, slot_input
from .treebank import DepTree, Sentence

CHECKPOINT_FILE = "model.twnp"
META_FILE = "model.json"
MODES = ("transition", "graph")


@dataclass
class ModelConfig:
    word_dim: int = 300
    char_dim: int = 50
    char_hidden: int = 100
    enc_hidden: int = 125      # per direction
    enc_layers: int = 2
    mlp_hidden: int = 100
    dropout: float = 0.33
    # contextual vectors: layers/dim of the store and the mixed slice
    ctx_layers: int = 0
    ctx_dim: int = 0
    ctx_range: tuple[int, int] | None = None

    @property
    def uses_ctx(self) -> bool:
        return self.ctx_layers > 0


class Parser:
    mode = ""

    def __init__(self, config: ModelConfig, words: Sequence[str], chars: Sequence[str],
                 labels: Sequence[str], seed: int = 0,
                 pretrained: Mapping[str, np.ndarray] | None = None):
        self.config = config
        self.labels = list(labels)
        self.label_index = {l: i for i, l in enumerate(self.labels)}
        self.store = store = ParamStore(seed)
        self.words = EmbeddingTable(store, words, config.word_dim, pretrained)
        self.chars = CharEmbedder(store, chars, config.char_dim, config.char_hidden)
        mix = None
        if config.uses_ctx:
            lo, hi = config.ctx_range or (0, config.ctx_layers - 1)
            config.ctx_range = (lo, hi)
            mix = ScalarMix(store, hi - lo + 1)
        self.featurizer = Featurizer(self.words, self.chars, mix, config.ctx_dim, config.ctx_range)
        self.encoder = SentenceEncoder(store, self.featurizer.dim, config.enc_hidden,
                                       config.enc_layers, config.dropout)
        self._build_heads()

    def _build_heads(self) -> None:
        raise NotImplementedError

    @property
    def n_labels(self) -> int:
        return len(self.labels)

    def encode(self, sentence: Sentence, ctx: np.ndarray | None = None, train: bool = False,
               rng: np.random.Generator | None = None) -> tuple[EncodedSentence, tuple]:
        X, fcache = self.featurizer.forward(sentence, ctx)
        enc, ecache = self.encoder.forward(X, train, rng)
        return enc, (fcache, ecache)

    def encode_backward(self, dvectors: np.ndarray, dpad: np.ndarray | None, cache) -> None:
        fcache, ecache = cache
        dX = self.encoder.backward(dvectors, dpad, ecache)
        self.featurizer.backward(dX, fcache)

    def parse(self, sentence: Sentence, ctx: np.ndarray | None = None) -> DepTree:
        raise NotImplementedError

    # -- persistence

    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        save_checkpoint(directory / CHECKPOINT_FILE, self.store.params)
        meta = {
            "mode": self.mode,
            "config": asdict(self.config),
            "labels": self.labels,
            "words": self.words.words,
            "chars": self.chars.chars,
        }
        (directory / META_FILE).write_text(json.dumps(meta, indent=1, ensure_ascii=False) + "\n",
                                           encoding="utf-8")


class TransitionParser(Parser):
    """Greedy arc-hybrid + Swap parser; an MLP over the 12 feature slots
    scores every (kind, label) output."""

    mode = "transition"

    def _build_heads(self) -> None:
        d = self.encoder.dim
        self.scorer = Mlp(self.store, "trans", N_SLOTS * d, self.config.mlp_hidden,
                          2 + 2 * self.n_labels)

    def score(self, config, encoded: EncodedSentence) -> np.ndarray:
        return self.scorer.forward(slot_input(feature_slots(config), encoded.vectors, encoded.pad))[0]

    def parse(self, sentence: Sentence, ctx: np.ndarray | None = None) -> DepTree:
        enc, _ = self.encode(sentence, ctx)
        tree, _ = greedy_decode(len(sentence), lambda c: self.score(c, enc), self.labels)
        return tree


class GraphParser(Parser):
    """Arc-factored parser: pairwise MLP arc scores, single-root CLE, then
    a label MLP over each chosen (head, dependent) pair."""

    mode = "graph"

    def _build_heads(self) -> None:
        d = self.encoder.dim
        h = self.config.mlp_hidden
        self.arc = ArcScorer(self.store, d, h)
        self.label_mlp = Mlp(self.store, "label", 2 * d, h, self.n_labels)

    def parse(self, sentence: Sentence, ctx: np.ndarray | None = None) -> DepTree:
        enc, _ = self.encode(sentence, ctx)
        S, _ = self.arc.forward(enc.vectors)
        heads = single_root_cle(S)
        labels = assign_labels(enc.vectors, heads, self.label_mlp, self.labels)
        return DepTree(tuple(heads), tuple(labels))


PARSERS = {"transition": TransitionParser, "graph": GraphParser}


def build_parser(mode: str, config: ModelConfig, words, chars, labels, seed: int = 0,
                 pretrained=None) -> Parser:
    if mode not in PARSERS:
        raise ValueError(f"unknown parser mode {mode!r}; expected one of {MODES}")
    return PARSERS[mode](config, words, chars, labels, seed, pretrained)


def load_parser(directory: str | Path) -> Parser:
    directory = Path(directory)
    meta = json.loads((directory / META_FILE).read_text(encoding="utf-8"))
    cfg = dict(meta["config"])
    if cfg.get("ctx_range") is not None:
        cfg["ctx_range"] = tuple(cfg["ctx_range"])
    parser = build_parser(meta["mode"], ModelConfig(**cfg), meta["words"], meta["chars"],
                          meta["labels"])
    parser.store.load_values(load_checkpoint(directory / CHECKPOINT_FILE))
    return parser

