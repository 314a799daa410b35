import pytest

from qclp.constraints import solve
from qclp.program import VarSource, parse_program, parse_query
from qclp.resolution import (
    NOT_APPLICABLE,
    build_derivation_tree,
    enumerate_proofs,
    reduce,
)
from qclp.signature import parse_signature

from helpers import bundle_query, load_bundle

AB = parse_signature("type a b < e")


def test_two_answer_enumeration():
    sig, prog = load_bundle("abe")
    result = enumerate_proofs(prog, bundle_query("abe", sig))
    assert not result.truncated
    assert [p.clause_trace for p in result] == [("1", "2"), ("1", "3")]
    assert [ans.type_of("X") for ans in result.answers()] == ["a", "b"]
    for proof in result:
        assert len(proof.nodes) == 3
        assert proof.leaf.is_leaf()
        assert proof.answer.variables() == ["X"]


def test_depth_bound_marks_truncation():
    prog = parse_program(AB, "1 p(X) :- p(X).\n2 p(X).\n")
    result = enumerate_proofs(prog, parse_query(AB, "p(X)."), depth_bound=5)
    assert result.truncated
    assert len(result) == 5
    assert result.proofs[0].clause_trace == ("1", "1", "1", "1", "2")
    assert result.proofs[-1].clause_trace == ("2",)


def test_depth_bound_must_be_positive():
    prog = parse_program(AB, "1 p(X).\n")
    with pytest.raises(ValueError):
        enumerate_proofs(prog, parse_query(AB, "p(X)."), depth_bound=0)


def test_unsatisfiable_query_has_no_proofs():
    sig, prog = load_bundle("abe")
    result = enumerate_proofs(prog, parse_query(sig, "q(X) & {X=a & X=b}."))
    assert result.proofs == () and not result.truncated


def test_eager_constraint_solving_prunes_mid_derivation():
    prog = parse_program(
        AB,
        "1 s(X) :- p(X) & q(X).\n2 p(X) :- {X=a}.\n3 q(X) :- {X=b}.\n",
    )
    result = enumerate_proofs(prog, parse_query(AB, "s(X)."))
    assert len(result) == 0

    tree = build_derivation_tree(prog, parse_query(AB, "s(X)."))
    p_node = tree.children[0].child.children[0].child
    assert [r.clause_id for r in p_node.children] == ["3"]
    assert p_node.children[0].child is None  # failed c-step kept as a leaf
    assert tree.count_success_leaves() == 0


def test_derivation_tree_keeps_failed_alternatives():
    sig, prog = load_bundle("abe")
    tree = build_derivation_tree(prog, parse_query(sig, "q(X) & {X=a}."))
    [q_step] = tree.children
    assert q_step.clause_id == "1"
    ids = [r.clause_id for r in q_step.child.children]
    assert ids == ["2", "3"]
    assert q_step.child.children[0].child is not None
    assert q_step.child.children[1].child is None
    assert tree.count_success_leaves() == 1


def test_reduce_distinguishes_mismatch_from_failure():
    sig, prog = load_bundle("abe")
    goal = parse_query(sig, "q(X) & {X=a & X=b}.")
    solved = solve(sig, (), extra_vars=["X"])
    names = VarSource({"X"})
    assert reduce(prog, goal.atoms, solved, prog.clause("2"), names) is NOT_APPLICABLE

    goal2 = parse_query(sig, "p(X) & {X=a}.")
    solved2 = solve(sig, goal2.constraint, extra_vars=["X"])
    assert reduce(prog, goal2.atoms, solved2, prog.clause("3"), names) is None
    step = reduce(prog, goal2.atoms, solved2, prog.clause("2"), names)
    new_atoms, _raw, new_solved = step
    assert new_atoms == () and new_solved.type_of("X") == "a"


def test_clinton_query_has_two_readings():
    sig, prog = load_bundle("clinton", "grammar.clg")
    result = enumerate_proofs(prog, bundle_query("clinton", sig))
    assert len(result) == 2
    assert {p.clause_trace for p in result} == {
        ("6", "1", "7", "3", "7", "4"),
        ("6", "2", "7", "3", "7", "5"),
    }
