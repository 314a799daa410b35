import dataclasses
import math

import pytest

from qclp.program import parse_program, parse_query
from qclp.quantitative import (
    DepthExhausted,
    GroundingError,
    alphabeta_search,
    chain_query_value,
    minmax_search,
    pf_chain,
    proof_value,
)
from qclp.resolution import enumerate_proofs
from qclp.signature import parse_signature

from helpers import bundle_query, load_bundle

AB = parse_signature("type a b < e")


@pytest.fixture(scope="module")
def quantitative():
    sig, prog = load_bundle("abe", "quantitative.clg")
    return sig, prog, bundle_query("abe", sig)


def test_proof_values(quantitative):
    sig, prog, query = quantitative
    values = [proof_value(prog, p) for p in enumerate_proofs(prog, query)]
    assert values == [pytest.approx(0.7), pytest.approx(0.5)]


def test_minmax_value_is_the_best_proof(quantitative):
    sig, prog, query = quantitative
    res = minmax_search(prog, query)
    assert res.value == pytest.approx(0.7, abs=1e-12)
    assert res.best_trace() == ("1", "2")
    values = [proof_value(prog, p) for p in enumerate_proofs(prog, query)]
    assert res.value == max(values)


def test_alphabeta_matches_exhaustive_with_fewer_visits():
    sig, prog = load_bundle("pruning")
    query = bundle_query("pruning", sig)
    full = minmax_search(prog, query)
    pruned = alphabeta_search(prog, query)
    assert math.isclose(pruned.value, 0.56, rel_tol=0, abs_tol=1e-12)
    assert math.isclose(full.value, pruned.value, rel_tol=0, abs_tol=1e-12)
    assert pruned.visited_nodes < full.visited_nodes
    assert len(pruned.cutoffs) == 2
    assert not pruned.heuristic

    values = [proof_value(prog, p) for p in enumerate_proofs(prog, query)]
    assert max(values) == full.value
    assert all(v <= full.value + 1e-15 for v in values)


def test_initial_alpha_marks_the_search_heuristic():
    sig, prog = load_bundle("pruning")
    query = bundle_query("pruning", sig)
    below = alphabeta_search(prog, query, initial_alpha=0.3)
    assert below.heuristic
    # proofs above the bound cannot be pruned away
    assert below.value == pytest.approx(0.56, abs=1e-12)
    above = alphabeta_search(prog, query, initial_alpha=0.9)
    assert above.heuristic
    # nothing beats the bound, which is returned unchanged
    assert above.value == 0.9


def test_depth_exhaustion_raises():
    prog = parse_program(AB, "1 0.9 p(X) :- p(X).\n2 0.5 p(X).\n")
    query = parse_query(AB, "p(X).")
    with pytest.raises(DepthExhausted):
        minmax_search(prog, query, depth_bound=3)
    with pytest.raises(DepthExhausted):
        alphabeta_search(prog, query, depth_bound=3)


def test_unsatisfiable_query_scores_zero(quantitative):
    sig, prog, _ = quantitative
    res = minmax_search(prog, parse_query(sig, "q(X) & {X=a & X=b}."))
    assert res.value == 0.0 and res.best_trace() == ()


def test_proof_value_rejects_overlong_traces(quantitative):
    sig, prog, query = quantitative
    proof = enumerate_proofs(prog, query).proofs[0]
    broken = dataclasses.replace(proof, clause_trace=proof.clause_trace + ("2",))
    with pytest.raises(ValueError):
        proof_value(prog, broken)


def test_fixpoint_chain_values(quantitative):
    sig, prog, query = quantitative
    chain = pf_chain(prog)
    assert chain.value("q", ("a",)) == pytest.approx(0.7, abs=1e-12)
    assert chain.value("q", ("b",)) == pytest.approx(0.5, abs=1e-12)
    assert chain.value("p", ("a",)) == pytest.approx(0.7, abs=1e-12)
    assert chain.value("q", ("zzz",)) == 0.0


def test_fixpoint_chain_is_monotone(quantitative):
    sig, prog, _ = quantitative
    chain = pf_chain(prog)
    for earlier, later in zip(chain.steps, chain.steps[1:]):
        for key, v in earlier.items():
            assert later[key] >= v - 1e-15
    assert chain.iterations == len(chain.steps) - 1


def test_chain_agrees_with_search_on_ground_queries():
    for name, grammar in (("abe", "quantitative.clg"), ("pruning", "program.clg")):
        sig, prog = load_bundle(name, grammar)
        rel = prog.clauses[0].head.relation
        for t in sorted(sig.minimal_types):
            query = parse_query(sig, f"{rel}(X) & {{X={t}}}.")
            assert chain_query_value(prog, query) == pytest.approx(
                minmax_search(prog, query).value, abs=1e-12
            )


def test_chain_query_value_on_general_query(quantitative):
    sig, prog, query = quantitative
    assert chain_query_value(prog, query) == pytest.approx(0.7, abs=1e-12)


def test_grounding_oracle_rejects_feature_arcs():
    sig = parse_signature(
        "type sg pl < agr\ntype agr word < top\napprop word AGR agr\n"
    )
    prog = parse_program(sig, "1 w(X) :- {X=AGR:Y}.\n")
    with pytest.raises(GroundingError):
        pf_chain(prog)
