#!/usr/bin/env python3
"""Walk the two shipped chart examples: dump each closure, reconstruct
the final parses, and run the three best-parse modes on the ambiguous
one, showing where the class-pruning heuristic loses the optimum and
how dropping the compatibility filter makes it fail outright."""

from __future__ import annotations

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from qclp.chart import earley_close, heuristic_best, reconstruct, viterbi_best
from qclp.loglinear import LogLinearModel, load_properties
from qclp.program import load_program, load_query, load_weights
from qclp.signature import load_signature

GRAMMARS = Path(__file__).resolve().parent.parent / "grammars"


def dump(title: str, chart) -> None:
    print(f"== {title} ==")
    print(chart.render())
    print("finals:", ", ".join(str(c.id) for c in chart.finals()))
    for f in chart.finals():
        t = reconstruct(chart, f)
        spine = " -> ".join(
            "[" + " ".join(a.relation for a in n.atoms) + "]" for n in t.nodes
        )
        print(f"  parse of {f.id}: clauses {','.join(t.clause_trace)}  {spine}")
    print()


def main() -> None:
    sig = load_signature(str(GRAMMARS / "clinton" / "signature.sig"))
    prog = load_program(sig, str(GRAMMARS / "clinton" / "grammar.clg"))
    query = load_query(sig, str(GRAMMARS / "clinton" / "query.q"))
    dump("two-word sentence, indexed grammar", earley_close(prog, query, first_id=9))

    sig = load_signature(str(GRAMMARS / "context" / "signature.sig"))
    prog = load_program(sig, str(GRAMMARS / "context" / "program.clg"))
    query = load_query(sig, str(GRAMMARS / "context" / "query.q"))
    chart = earley_close(prog, query)
    dump("three-way ambiguous example", chart)

    props = tuple(load_properties(sig, str(GRAMMARS / "context" / "properties.txt")))
    weights = load_weights(str(GRAMMARS / "context" / "weights.txt"))
    model = LogLinearModel(sig, props, tuple(weights[p.name] for p in props))

    tree, w = viterbi_best(chart, model)
    print(f"exact best parse: weight {w:.1f}, clauses {','.join(tree.clause_trace)}")

    hb = heuristic_best(chart, model)
    print(
        f"heuristic best parse: weight {hb.weight:.1f} at final {hb.final_id}, "
        f"optimal={hb.optimal}"
    )

    db = heuristic_best(chart, model, diagnostic=True)
    print("diagnostic mode (no compatibility filter):", "failed" if db.tree is None else "found a parse")
    for e in db.events:
        note = f" ({e.note})" if e.note else ""
        print(f"  clause {e.clause_id}: {e.action}{note}")


if __name__ == "__main__":
    main()
