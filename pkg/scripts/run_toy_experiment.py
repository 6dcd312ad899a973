"""Train a parser on the toy treebank with and without synthetic contextual
vectors and report dev LAS, non-projective recall and the error reduction.

    python scripts/run_toy_experiment.py --mode graph [--epochs 30] [--seed 1]
"""

import argparse
import logging
import time
from pathlib import Path

from twinparse.analysis import error_reduction, nonproj_pr
from twinparse.representations import ContextualStore, forms_checksum
from twinparse.toy import synthetic_contextual
from twinparse.training import TrainConfig, ctx_lookup, evaluate, train
from twinparse.treebank import read_conllu_file

DATA = Path(__file__).resolve().parent.parent / "data" / "toy"


def in_memory_store(sentences, seed):
    items = synthetic_contextual(sentences, seed=seed)
    L, D = next(iter(items.values()))[1].shape[1:]
    entries = {k: (forms_checksum(f), t) for k, (f, t) in items.items()}
    return ContextualStore(L, D, entries)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--mode", choices=["transition", "graph"], required=True)
    ap.add_argument("--epochs", type=int, default=30)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--runs", nargs="+", choices=["baseline", "contextual"],
                    default=["baseline", "contextual"])
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    train_set = read_conllu_file(DATA / "train.conllu")
    dev_set = read_conllu_file(DATA / "dev.conllu")
    runs = []
    if "baseline" in args.runs:
        runs.append(("baseline", None, None))
    if "contextual" in args.runs:
        runs.append(("contextual", in_memory_store(train_set, 11), in_memory_store(dev_set, 12)))
    scores = {}
    for name, tr_ctx, dv_ctx in runs:
        start = time.time()
        cfg = TrainConfig(mode=args.mode, epochs=args.epochs, seed=args.seed)
        parser, manifest = train(cfg, train_set, dev_set, ctx_store=tr_ctx, dev_ctx_store=dv_ctx)
        lookup = ctx_lookup(dv_ctx)
        preds = [parser.parse(s, lookup(s)) for s in dev_set]
        las, uas = evaluate(parser, dev_set, lookup)
        pr = nonproj_pr(dev_set, preds)
        scores[name] = las
        print(f"{args.mode} {name}: dev LAS {las:.2f} UAS {uas:.2f} "
              f"(epoch {manifest.selected_epoch}); non-projective precision "
              f"{pr.precision} recall {pr.recall}; {time.time() - start:.0f}s", flush=True)
    if len(scores) == 2:
        gain = scores["contextual"] - scores["baseline"]
        print(f"{args.mode}: gain {gain:+.2f} LAS, error reduction "
              f"{error_reduction(scores['baseline'], scores['contextual']):.1f}%")


if __name__ == "__main__":
    main()
