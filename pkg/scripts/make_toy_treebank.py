"""Regenerate the committed toy treebank (and optionally its synthetic
contextual vectors).

    python scripts/make_toy_treebank.py --out data/toy [--ctx]
"""

import argparse
from pathlib import Path

from twinparse.representations import write_contextual_store
from twinparse.toy import synthetic_contextual, toy_treebank
from twinparse.treebank import is_projective, write_conllu_file

SPLITS = {"train": (200, 11), "dev": (50, 12)}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="data/toy")
    ap.add_argument("--ctx", action="store_true", help="also write synthetic .ctxv stores")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for split, (n, seed) in SPLITS.items():
        sents = toy_treebank(n, seed)
        write_conllu_file(out / f"{split}.conllu", sents)
        nonproj = sum(not is_projective(s.heads) for s in sents)
        print(f"{split}: {len(sents)} sentences, {sum(map(len, sents))} tokens, "
              f"{nonproj} non-projective")
        if args.ctx:
            write_contextual_store(out / f"{split}.ctxv", synthetic_contextual(sents, seed=seed))


if __name__ == "__main__":
    main()
