#!/usr/bin/env python3
"""Print the incomplete-data estimation table for the five-sentence
example bundle: per-iteration log-likelihood, update vector, and the
resulting weights, next to the closed-form fixpoint."""

from __future__ import annotations

import math
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from qclp.estimation import (
    Corpus,
    build_state,
    count_tables,
    im_closed_form_step,
    im_estimate,
    log_likelihood,
)
from qclp.loglinear import LogLinearModel, load_properties
from qclp.program import load_corpus, load_program
from qclp.signature import load_signature

ROOT = Path(__file__).resolve().parent.parent / "grammars" / "im"


def main() -> None:
    sig = load_signature(str(ROOT / "signature.sig"))
    prog = load_program(sig, str(ROOT / "program.clg"))
    corpus = Corpus(tuple(load_corpus(sig, str(ROOT / "corpus.txt"))))
    props = tuple(load_properties(sig, str(ROOT / "properties.txt")))
    model = LogLinearModel(sig, props, tuple(0.0 for _ in props))
    state = build_state(prog, corpus, model)

    print(f"{'iter':>4}  {'L':>12}  {'lambda1':>10}  {'lambda2':>10}  {'e^l1':>8}  {'e^l2':>8}")
    st = state
    for it in range(4):
        lam = st.model.weights
        print(
            f"{it:>4}  {log_likelihood(st):>12.6f}  {lam[0]:>10.6f}  {lam[1]:>10.6f}"
            f"  {math.exp(lam[0]):>8.4f}  {math.exp(lam[1]):>8.4f}"
        )
        gamma = im_closed_form_step(st, count_tables(st))
        st = st.with_model(st.model.with_weights([l + g for l, g in zip(lam, gamma)]))

    trained = im_estimate(state)
    lam = trained.model.weights
    print(
        f"\nconverged after {len(trained.log)} iteration(s): "
        f"L = {log_likelihood(trained):.6f}, e^lambda = ({math.exp(lam[0]):.4f}, {math.exp(lam[1]):.4f})"
    )


if __name__ == "__main__":
    main()
