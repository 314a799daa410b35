"""Earley-style chart construction, packed reconstruction, and best-parse search."""

import math

import pytest

from qclp.chart import (
    ChartError,
    earley_close,
    heuristic_best,
    reconstruct,
    reconstruct_all,
    viterbi_best,
)
from qclp.constraints import alpha_equivalent
from qclp.loglinear import LogLinearModel, load_properties, parse_properties
from qclp.program import load_weights, parse_program, parse_query
from qclp.resolution import enumerate_proofs
from qclp.signature import parse_signature

from helpers import GRAMMARS, bundle_query, load_bundle, random_program_instance

AB = parse_signature("type a b < e")


def context_setup():
    sig, prog = load_bundle("context")
    query = bundle_query("context", sig)
    props = load_properties(sig, str(GRAMMARS / "context" / "properties.txt"))
    table = load_weights(str(GRAMMARS / "context" / "weights.txt"))
    model = LogLinearModel(sig, tuple(props), tuple(table[p.name] for p in props))
    return prog, query, model


def packed_setup():
    # two top clauses with identical bodies pack into one chart clause
    prog = parse_program(AB, "1 s(Z) :- p(Z).\n2 s(Z) :- p(Z).\n3 p(Z).")
    query = parse_query(AB, "s(Z)")
    return prog, query


def test_context_chart_structure():
    prog, query, _ = context_setup()
    chart = earley_close(prog, query)
    assert not chart.overflowed
    assert chart.init_id == len(prog.clauses) + 1 == 7
    assert [c.id for c in chart.clauses] == list(range(7, 19))
    assert [c.id for c in chart.derived()] == list(range(8, 19))
    assert [c.id for c in chart.finals()] == [17, 18]

    init = chart[7]
    assert init is chart.init
    assert [d.render() for d in init.derivations] == ["I"]
    # the seed clause is the query atom resolved against itself
    assert init.head.relation == query.atoms[0].relation
    assert init.body[0] == init.head

    provenance = {c.id: [d.render() for d in c.derivations] for c in chart.derived()}
    assert provenance == {
        8: ["P 7,1"],
        9: ["P 8,2"],
        10: ["P 8,3"],
        11: ["P 8,4"],
        12: ["C 8,9"],
        13: ["C 8,10"],
        14: ["C 8,11"],
        15: ["P 12,5"],
        16: ["P 13,6"],
        17: ["C 12,15"],
        18: ["C 13,16"],
    }
    assert len(chart.render().splitlines()) == len(chart.clauses)


def test_context_reconstruction_and_viterbi():
    prog, query, model = context_setup()
    chart = earley_close(prog, query)
    t17 = reconstruct(chart, 17)
    t18 = reconstruct(chart, 18)
    assert t17.clause_trace == ("1", "2", "5")
    assert t18.clause_trace == ("1", "3", "6")
    assert model.weight(t17) == pytest.approx(10.0, rel=1e-12)
    assert model.weight(t18) == pytest.approx(9.0, rel=1e-12)

    best, weight = viterbi_best(chart, model)
    assert best.clause_trace == ("1", "2", "5")
    assert weight == pytest.approx(10.0, rel=1e-12)

    # the chart reproduces the resolution engine's proofs exactly
    result = enumerate_proofs(prog, query)
    assert not result.truncated
    chart_trees = [t for f in chart.finals() for t in reconstruct_all(chart, f.id)]
    assert sorted(t.clause_trace for t in chart_trees) == sorted(
        p.clause_trace for p in result.proofs
    )


def test_context_heuristic_best():
    prog, query, model = context_setup()
    chart = earley_close(prog, query)
    r = heuristic_best(chart, model)
    assert r.mode == "heuristic"
    assert r.final_id == 18
    assert r.weight == pytest.approx(9.0, rel=1e-12)
    assert r.optimal is False
    assert r.tree.clause_trace == ("1", "3", "6")

    events = [(e.clause_id, e.action, e.note) for e in r.events]
    assert events == [
        (12, "kept", ""),
        (12, "pruned", "outweighed by 13"),
        (13, "kept", ""),
        (14, "filtered", "incompatible with every final"),
        (15, "void", "parent pruned"),
        (17, "void", "no live derivation"),
        (18, "kept", ""),
    ]
    weights = {(e.clause_id, e.action): e.log_weight for e in r.events}
    assert weights[(12, "kept")] == pytest.approx(math.log(2))
    assert weights[(13, "kept")] == pytest.approx(math.log(3))
    assert weights[(14, "filtered")] == pytest.approx(math.log(5))
    assert weights[(15, "void")] is None


def test_context_diagnostic_mode_exhibits_dead_end():
    prog, query, model = context_setup()
    chart = earley_close(prog, query)
    r = heuristic_best(chart, model, diagnostic=True)
    assert r.mode == "diagnostic"
    assert r.tree is None
    assert r.weight == 0.0
    assert r.final_id is None
    assert r.optimal is None

    events = [(e.clause_id, e.action, e.note) for e in r.events]
    assert events == [
        (12, "kept", ""),
        (12, "pruned", "outweighed by 13"),
        (13, "kept", ""),
        (13, "pruned", "outweighed by 14"),
        (14, "kept", ""),
        (15, "void", "parent pruned"),
        (16, "void", "parent pruned"),
        (17, "void", "no live derivation"),
        (18, "void", "no live derivation"),
    ]
    # the greedy class winner is the weight-5 clause that reaches no final
    weights = {(e.clause_id, e.action): e.log_weight for e in r.events}
    assert weights[(14, "kept")] == pytest.approx(math.log(5))


def test_inflected_chart_matches_published_numbering():
    sig, prog = load_bundle("clinton", grammar="grammar.clg")
    query = bundle_query("clinton", sig)
    chart = earley_close(prog, query, first_id=9)
    assert not chart.overflowed
    assert [c.id for c in chart.clauses] == list(range(9, 31))
    assert [c.id for c in chart.finals()] == [27, 30]

    provenance = [(c.id, [d.render() for d in c.derivations]) for c in chart.derived()]
    assert provenance == [
        (10, ["P 9,6"]),
        (11, ["P 10,1"]),
        (12, ["P 11,7"]),
        (13, ["P 12,3"]),
        (14, ["P 10,2"]),
        (15, ["P 14,7"]),
        (16, ["P 15,3"]),
        (17, ["C 12,13"]),
        (18, ["C 11,17"]),
        (19, ["C 15,16"]),
        (20, ["C 14,19"]),
        (21, ["P 18,7"]),
        (22, ["P 21,4"]),
        (23, ["P 20,7"]),
        (24, ["P 23,5"]),
        (25, ["C 21,22"]),
        (26, ["C 18,25"]),
        (27, ["C 10,26"]),
        (28, ["C 23,24"]),
        (29, ["C 20,28"]),
        (30, ["C 10,29"]),
    ]

    traces = {reconstruct(chart, f.id).clause_trace for f in chart.finals()}
    assert traces == {
        ("6", "1", "7", "3", "7", "4"),
        ("6", "2", "7", "3", "7", "5"),
    }

    result = enumerate_proofs(prog, query)
    assert not result.truncated
    by_trace = {p.clause_trace: p for p in result.proofs}
    for f in chart.finals():
        tree = reconstruct(chart, f.id)
        twin = by_trace[tree.clause_trace]
        assert alpha_equivalent(tree.answer, twin.answer)


def test_packed_derivations_and_tie_breaking():
    prog, query = packed_setup()
    chart = earley_close(prog, query)
    packed = [c for c in chart.derived() if len(c.derivations) > 1]
    assert len(packed) == 1
    assert [d.render() for d in packed[0].derivations] == ["P 4,1", "P 4,2"]

    finals = chart.finals()
    assert len(finals) == 1
    trees = reconstruct_all(chart, finals[0].id)
    assert sorted(t.clause_trace for t in trees) == [("1", "3"), ("2", "3")]

    props = parse_properties(AB, "u1 clause 1\nu2 clause 2\n")
    for picked, weights in ((("1", "3"), (1.0, 0.0)), (("2", "3"), (0.0, 1.0))):
        model = LogLinearModel(AB, tuple(props), weights)
        best, w = viterbi_best(chart, model)
        assert best.clause_trace == picked
        assert w == pytest.approx(math.e)

    # the greedy replay reads packed clauses through their first
    # derivation, so it misses an optimum hidden behind packing and
    # must say so
    up1 = LogLinearModel(AB, tuple(props), (1.0, 0.0))
    r = heuristic_best(chart, up1)
    assert r.optimal is True
    assert r.tree.clause_trace == ("1", "3")
    up2 = LogLinearModel(AB, tuple(props), (0.0, 1.0))
    r = heuristic_best(chart, up2)
    assert r.optimal is False
    assert r.tree.clause_trace == ("1", "3")
    assert r.weight == pytest.approx(1.0)


def test_viterbi_falls_back_when_packing_meets_wide_node_properties():
    prog, query = packed_setup()
    chart = earley_close(prog, query)
    # a two-atom node pattern defeats the clause-local decomposition,
    # so the search must enumerate packed alternatives instead
    props = parse_properties(AB, "w node s(V) & p(V)\nu1 clause 1\n")
    model = LogLinearModel(AB, tuple(props), (0.3, 0.7))
    best, w = viterbi_best(chart, model)
    trees = [t for f in chart.finals() for t in reconstruct_all(chart, f.id)]
    exact = max(model.weight(t) for t in trees)
    assert w == pytest.approx(exact, rel=1e-12)
    assert model.weight(best) == pytest.approx(exact, rel=1e-12)


def test_chart_cap_overflow():
    sig, prog = load_bundle("clinton", grammar="grammar.clg")
    query = bundle_query("clinton", sig)
    with pytest.raises(ChartError, match="exceeded 10 clauses"):
        earley_close(prog, query, cap=10)


def test_unsatisfiable_query_yields_empty_chart():
    prog = parse_program(AB, "1 p(X).")
    query = parse_query(AB, "p(X) & {X=a & X=b}")
    chart = earley_close(prog, query)
    assert chart.clauses == []
    assert chart.finals() == []
    assert not chart.overflowed

    props = parse_properties(AB, "u1 clause 1\n")
    model = LogLinearModel(AB, tuple(props), (0.0,))
    with pytest.raises(ChartError, match="no final clauses"):
        viterbi_best(chart, model)
    r = heuristic_best(chart, model)
    assert (r.tree, r.weight, r.final_id, r.optimal) == (None, 0.0, None, None)
    assert r.events == ()


def test_multi_atom_query_is_wrapped():
    prog = parse_program(AB, "1 p(X) :- q(X).\n2 q(X).")
    query = parse_query(AB, "p(X) & q(X)")
    chart = earley_close(prog, query)
    wrapper = chart.program.clauses[-1]
    assert len(wrapper.body) == 2
    finals = chart.finals()
    assert len(finals) == 1
    tree = reconstruct(chart, finals[0].id)
    assert tree.clause_trace[0] == wrapper.id
    result = enumerate_proofs(chart.program, chart.query)
    assert sorted(t.clause_trace for t in (tree,)) == sorted(
        p.clause_trace for p in result.proofs
    )


@pytest.mark.parametrize("seed", range(12))
def test_chart_agrees_with_enumeration_on_random_programs(seed):
    prog, state = random_program_instance(seed)
    for entry in state.corpus.entries:
        chart = earley_close(prog, entry.goal)
        result = enumerate_proofs(prog, entry.goal, depth_bound=32)
        assert not result.truncated
        chart_trees = [
            t for f in chart.finals() for t in reconstruct_all(chart, f.id)
        ]
        assert sorted(t.clause_trace for t in chart_trees) == sorted(
            p.clause_trace for p in result.proofs
        )

        best, w = viterbi_best(chart, state.model)
        exact = max(state.model.weight(p) for p in result.proofs)
        assert w == pytest.approx(exact, rel=1e-9)
        assert state.model.weight(best) == pytest.approx(exact, rel=1e-9)

        r = heuristic_best(chart, state.model)
        if r.tree is not None:
            assert r.weight <= w * (1 + 1e-9) + 1e-12
            if r.optimal is True:
                assert r.weight == pytest.approx(w, rel=1e-9)
