"""Command-line entry points.

Exit codes: 0 success, 1 usage error, 2 data or format error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence

from .analysis import attachment_counts, compute_profile, profile_csv, sample_balanced
from .model import load_parser
from .representations import ContextualStoreError, load_contextual_store, load_embeddings_text
from .training import MANIFEST_FILE, TrainConfig, ctx_lookup, evaluate, file_digest, train
from .treebank import (
    TREEBANK_COMMENT, ConlluError, TreeError, read_conllu_file, validate_tree, write_conllu,
    write_conllu_file,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _existing(path: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"no such file: {path}")
    return p


def build_argparser() -> argparse.ArgumentParser:
    ap = _Parser(prog="twinparse", description="Transition and graph dependency parsers "
                                               "with contextual-vector input and error profiling.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train a parser and keep the best dev epoch")
    t.add_argument("--mode", choices=["transition", "graph"], required=True)
    t.add_argument("--train", required=True)
    t.add_argument("--dev", required=True)
    t.add_argument("--test")
    t.add_argument("--out", required=True, help="model directory to write")
    t.add_argument("--epochs", type=int, default=30)
    t.add_argument("--seed", type=int, default=1)
    t.add_argument("--embeddings", help="word vectors, text format with a 'count dim' header")
    t.add_argument("--ctx-vectors", help="contextual vectors (CTXV) for --train")
    t.add_argument("--dev-ctx-vectors", help="contextual vectors for --dev")
    t.add_argument("--test-ctx-vectors", help="contextual vectors for --test")
    t.add_argument("--ctx-layers", help="inclusive 0-based layer range A-B to mix (default: all)")
    t.add_argument("--p-agg", type=float, default=0.1, help="exploration probability")

    p = sub.add_parser("parse", help="parse a CoNLL-U file with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--ctx-vectors")

    e = sub.add_parser("eval", help="print LAS and UAS")
    e.add_argument("--gold", required=True)
    e.add_argument("--pred", required=True)

    pr = sub.add_parser("profile", help="write the error-profile CSV")
    pr.add_argument("--gold", required=True)
    pr.add_argument("--pred", required=True, action="append",
                    help="predictions; repeat for several systems (named by file stem)")
    pr.add_argument("--per-language", action="store_true")
    pr.add_argument("--out", required=True)

    s = sub.add_parser("sample-dev", help="balanced sample across development sets")
    s.add_argument("--inputs", required=True, nargs="+")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)

    i = sub.add_parser("inspect-vectors", help="summarize a contextual-vector store")
    i.add_argument("--ctx-vectors", required=True)
    i.add_argument("--conllu", help="companion treebank to verify checksums against")
    return ap


# --------------------------------------------------------------------------
# subcommands


def cmd_train(args) -> int:
    train_path, dev_path = _existing(args.train), _existing(args.dev)
    test_path = _existing(args.test) if args.test else None
    ctx_paths = [args.ctx_vectors, args.dev_ctx_vectors]
    if any(ctx_paths) and not all(ctx_paths):
        raise UsageError("--ctx-vectors and --dev-ctx-vectors must be given together")
    if args.test and args.ctx_vectors and not args.test_ctx_vectors:
        raise UsageError("--test with contextual vectors also needs --test-ctx-vectors")
    if args.ctx_layers and not args.ctx_vectors:
        raise UsageError("--ctx-layers needs --ctx-vectors")
    if args.epochs < 1:
        raise UsageError("--epochs must be >= 1")

    train_set, dev_set = read_conllu_file(train_path), read_conllu_file(dev_path)
    stores = [load_contextual_store(_existing(p)) if p else None for p in ctx_paths]
    for store, sents, path in zip(stores, (train_set, dev_set), ctx_paths):
        bad = store.verify(sents) if store is not None else []
        if bad:
            raise ContextualStoreError(f"{path}: {len(bad)} sentence(s) missing or misaligned, "
                                       f"first key {bad[0]}")
    pretrained = load_embeddings_text(_existing(args.embeddings)) if args.embeddings else None

    cfg = TrainConfig(mode=args.mode, epochs=args.epochs, seed=args.seed, p_agg=args.p_agg,
                      ctx_vectors=args.ctx_vectors, ctx_layers=args.ctx_layers,
                      embeddings=args.embeddings)
    data = {"train": f"{train_path.name} sha256:{file_digest(train_path)}",
            "dev": f"{dev_path.name} sha256:{file_digest(dev_path)}"}
    for key, path in (("train_ctx", args.ctx_vectors), ("dev_ctx", args.dev_ctx_vectors),
                      ("embeddings", args.embeddings)):
        if path:
            data[key] = f"{Path(path).name} sha256:{file_digest(path)}"
    out = Path(args.out)
    parser, manifest = train(cfg, train_set, dev_set, None, stores[0], stores[1], pretrained, data)
    if test_path is not None:
        test_set = read_conllu_file(test_path)
        test_store = load_contextual_store(_existing(args.test_ctx_vectors)) if args.test_ctx_vectors else None
        las, uas = evaluate(parser, test_set, ctx_lookup(test_store))
        manifest.data["test"] = f"{test_path.name} sha256:{file_digest(test_path)}"
        manifest.extra["test_las"] = f"{las:.4f}"
        manifest.extra["test_uas"] = f"{uas:.4f}"
    parser.save(out)
    (out / MANIFEST_FILE).write_text(manifest.to_text(), encoding="utf-8")
    best = manifest.dev_las[manifest.selected_epoch - 1]
    print(f"selected epoch {manifest.selected_epoch} dev LAS {best:.2f}")
    return EXIT_OK


def cmd_parse(args) -> int:
    model_dir, in_path = _existing(args.model), _existing(args.input)
    parser = load_parser(model_dir)
    if parser.config.uses_ctx and not args.ctx_vectors:
        raise UsageError("this model was trained with contextual vectors; pass --ctx-vectors")
    sentences = read_conllu_file(in_path)
    store = load_contextual_store(_existing(args.ctx_vectors)) if args.ctx_vectors else None
    lookup = ctx_lookup(store if parser.config.uses_ctx else None)
    out = []
    for s in sentences:
        tree = parser.parse(s, lookup(s))
        out.append(s.with_tree(tree.heads, tree.labels))
    write_conllu_file(args.output, out)
    return EXIT_OK


def _aligned_gold_pred(gold_path, pred_path):
    gold = read_conllu_file(_existing(gold_path))
    pred = read_conllu_file(_existing(pred_path))
    if len(gold) != len(pred):
        raise ValueError(f"{pred_path}: {len(pred)} sentences, gold has {len(gold)}")
    for k, (g, p) in enumerate(zip(gold, pred)):
        if g.forms != p.forms:
            raise ValueError(f"{pred_path}: sentence {k + 1} tokens differ from gold")
    return gold, pred


def cmd_eval(args) -> int:
    gold, pred = _aligned_gold_pred(args.gold, args.pred)
    for g in gold:
        validate_tree(g)
    las, uas = attachment_counts(gold, pred)
    print(f"LAS {100 * las.value:.2f} UAS {100 * uas.value:.2f}")
    return EXIT_OK


def cmd_profile(args) -> int:
    systems = {}
    gold = None
    for path in args.pred:
        gold, pred = _aligned_gold_pred(args.gold, path)
        name = Path(path).name.split(".")[0]
        base, k = name, 2
        while name in systems:
            name, k = f"{base}_{k}", k + 1
        systems[name] = pred
    for g in gold:
        validate_tree(g)
    profiles = compute_profile(gold, systems, group_by_language=args.per_language)
    Path(args.out).write_text(profile_csv(profiles), encoding="utf-8")
    return EXIT_OK


def cmd_sample_dev(args) -> int:
    sets = [read_conllu_file(_existing(p)) for p in args.inputs]
    for path, s in zip(args.inputs, sets):
        if not s:
            raise ValueError(f"{path}: no sentences")
    sample = sample_balanced(sets, args.seed)
    for s in sample:
        if not any(c.startswith(TREEBANK_COMMENT) for c in s.comments):
            s.comments.append(TREEBANK_COMMENT + s.treebank_id)
    Path(args.out).write_text(write_conllu(sample), encoding="utf-8")
    print(f"{len(sample)} sentences ({len(sample) // len(sets)} per set)")
    return EXIT_OK


def cmd_inspect_vectors(args) -> int:
    store = load_contextual_store(_existing(args.ctx_vectors))
    print(f"layers {store.n_layers}")
    print(f"dim {store.dim}")
    print(f"sentences {len(store)}")
    if args.conllu:
        bad = store.verify(read_conllu_file(_existing(args.conllu)))
        if bad:
            print(f"checksums MISMATCH for {len(bad)} sentence(s): {' '.join(bad[:10])}")
            return EXIT_DATA
        print("checksums ok")
    else:
        print("checksums not verified (no --conllu given)")
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "parse": cmd_parse,
    "eval": cmd_eval,
    "profile": cmd_profile,
    "sample-dev": cmd_sample_dev,
    "inspect-vectors": cmd_inspect_vectors,
}


def run(argv: Sequence[str] | None = None) -> int:
    ap = build_argparser()
    try:
        args = ap.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(message)s", stream=sys.stderr)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConlluError, TreeError, ContextualStoreError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
