"""Regenerate the bundled 100-sentence fixture corpus under data/fixture/."""

import argparse
from pathlib import Path

from drgtfa.templates import template_corpus, write_corpus

ROOT = Path(__file__).resolve().parent.parent


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default=str(ROOT / "data" / "fixture"))
    args = ap.parse_args()
    manifest = write_corpus(template_corpus(args.n, args.seed, prefix="fx"), args.out)
    print(f"wrote {args.n} items, manifest {manifest}")


if __name__ == "__main__":
    main()
