#!/usr/bin/env python3
"""Generate the synthetic disambiguation bundle.

A ways-way ambiguous grammar (every sentence has one proof per pick
clause), a corpus of distinct single-count sentences annotated with a
globally fixed gold reading, and one candidate property per pick
clause.  Conditional estimation should drive the gold clause's weight
to the box bound and disambiguate every sentence; the untrained model
ties all readings and scores exactly the tie-credit baseline.

Deterministic for a fixed seed; the committed bundle used --seed 7.
"""

from __future__ import annotations

import argparse
import random
from pathlib import Path


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--out", default="grammars/synthetic")
    ap.add_argument("--sentences", type=int, default=50)
    ap.add_argument("--ways", type=int, default=10)
    args = ap.parse_args()

    rng = random.Random(args.seed)
    gold_clause = rng.randrange(args.ways) + 1
    types = [f"t{i}" for i in range(1, args.sentences + 1)]
    rng.shuffle(types)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    sig_lines = [
        "# token types for the synthetic disambiguation corpus",
        "type " + " ".join(f"t{i}" for i in range(1, args.sentences + 1)) + " < tok",
    ]
    (out / "signature.sig").write_text("\n".join(sig_lines) + "\n")

    grammar = [f"{j} s(Z) :- pick{j}(Z)." for j in range(1, args.ways + 1)]
    grammar += [f"{args.ways + j} pick{j}(Z)." for j in range(1, args.ways + 1)]
    (out / "grammar.clg").write_text("\n".join(grammar) + "\n")

    corpus = [f"1 s(Z) & {{Z={t}}}. @ {gold_clause - 1}" for t in types]
    (out / "corpus.txt").write_text("\n".join(corpus) + "\n")

    candidates = [f"pick{j} clause {j}" for j in range(1, args.ways + 1)]
    (out / "candidates.txt").write_text("\n".join(candidates) + "\n")

    print(
        f"wrote {out}/: {args.sentences} sentences, {args.ways}-way ambiguous, "
        f"gold clause {gold_clause} (gold index {gold_clause - 1})"
    )


if __name__ == "__main__":
    main()
