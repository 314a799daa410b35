import pytest

from qclp.constraints import EqC, TypeC, alpha_equivalent, solve
from qclp.program import (
    Atom,
    ProgramError,
    VarSource,
    fresh_variant,
    head_variant,
    parse_clause_line,
    parse_corpus,
    parse_program,
    parse_query,
    parse_weights,
    wrap_query,
)
from qclp.signature import parse_signature

from helpers import load_bundle

SIG = parse_signature(
    """
    type sg pl < agr
    type agr word < top
    approp word AGR agr
    approp word HEAD word
    """
)


def clause(line: str, default_id: str = "1"):
    return parse_clause_line(SIG, line, None, default_id)


def test_clause_line_with_id_factor_body_and_block():
    c = clause("7 0.5 s(X) :- p(X) & q(Y) & {X=Y}.")
    assert c.id == "7"
    assert c.factor == 0.5
    assert c.head == Atom("s", ("X",))
    assert c.body == (Atom("p", ("X",)), Atom("q", ("Y",)))
    assert EqC("X", "Y") in c.constraint


def test_missing_id_falls_back_to_listing_position():
    c = parse_clause_line(SIG, "0.5 p(X).", None, default_id="3")
    assert c.id == "3" and c.factor == 0.5


def test_declared_type_in_argument_position_becomes_a_constrained_variable():
    c = clause("1 p(agr).")
    arg = c.head.args[0]
    assert arg != "agr"
    assert TypeC(arg, "agr") in c.constraint


def test_unknown_lowercase_token_is_an_error():
    with pytest.raises(ProgramError):
        clause("1 p(foo).")


def test_repeated_argument_is_split_with_an_equation():
    c = clause("1 r(X,X).")
    a, b = c.head.args
    assert a != b
    sf = solve(SIG, c.constraint, extra_vars=[a, b])
    assert sf.rep(a) == sf.rep(b)


def test_path_sugar_expands_to_arc_chains():
    c = clause("1 w(X) :- {X=HEAD:AGR:sg}.")
    sf = solve(SIG, c.constraint)
    mid = sf.arcs_of("X")["HEAD"]
    leaf = sf.arcs_of(mid)["AGR"]
    assert sf.type_of(leaf) == "sg"
    assert sf.type_of("X") == "word"


def test_path_ending_in_a_variable_reuses_it():
    c = clause("1 w(X) :- {X=HEAD:Y}.")
    sf = solve(SIG, c.constraint)
    assert sf.arcs_of("X")["HEAD"] == sf.rep("Y")


def test_symbolic_factor_resolution():
    prog = parse_program(SIG, "1 beta p(X).\n")
    assert prog.clause("1").factor_name == "beta"
    resolved = prog.with_factors({"beta": 0.25})
    assert resolved.clause("1").factor == 0.25
    with pytest.raises(ProgramError):
        prog.with_factors({})


def test_integer_factor_requires_a_dot():
    with pytest.raises(ProgramError):
        clause("1 2 p(X).")


def test_factor_outside_unit_interval_rejected():
    with pytest.raises(ProgramError):
        parse_program(SIG, "1 1.5 p(X).\n")


def test_undefined_body_relation_rejected():
    with pytest.raises(ProgramError):
        parse_program(SIG, "1 s(X) :- ghost(X).\n")


def test_duplicate_clause_id_rejected():
    with pytest.raises(ProgramError):
        parse_program(SIG, "1 p(X).\n1 q(X).\n")


def test_arity_must_be_consistent():
    with pytest.raises(ProgramError):
        parse_program(SIG, "1 p(X).\n2 p(X,Y).\n")


def test_program_render_round_trips_all_bundles():
    for name, grammar in (
        ("abe", "program.clg"),
        ("abe", "quantitative.clg"),
        ("pruning", "program.clg"),
        ("baum", "program.clg"),
        ("im", "program.clg"),
        ("context", "program.clg"),
        ("clinton", "grammar.clg"),
        ("clinton", "unindexed.clg"),
        ("synthetic", "grammar.clg"),
    ):
        sig, prog = load_bundle(name, grammar)
        text = prog.render()
        assert parse_program(sig, text).render() == text


def test_corpus_counts_and_gold_indices():
    entries = parse_corpus(SIG, "2 p(X) & {X=sg}. @ 1\np(Y).\n")
    assert entries[0].count == 2 and entries[0].gold == 1
    assert entries[1].count == 1 and entries[1].gold is None
    assert entries[0].render() == "2 p(X) & {X=sg}. @ 1"


def test_corpus_rejects_bad_gold_and_zero_count():
    with pytest.raises(ProgramError):
        parse_corpus(SIG, "p(X). @ first\n")
    with pytest.raises(ProgramError):
        parse_corpus(SIG, "0 p(X).\n")


def test_weights_file():
    assert parse_weights("beta 0.25  # comment\n\ngamma 1.0\n") == {"beta": 0.25, "gamma": 1.0}
    with pytest.raises(ProgramError):
        parse_weights("beta zero\n")
    with pytest.raises(ProgramError):
        parse_weights("beta\n")


def test_fresh_variant_avoids_names_and_preserves_structure():
    c = clause("1 s(X) :- p(Y) & {X=Y & X=sg}.")
    v = fresh_variant(c, avoid={"X", "Y", "Z"})
    assert not set(v.variables()) & {"X", "Y", "Z"}
    assert v.head.relation == "s" and len(v.body) == 1
    assert alpha_equivalent(solve(SIG, c.constraint), solve(SIG, v.constraint))


def test_head_variant_pins_head_arguments():
    c = clause("1 s(X) :- p(Y) & {X=Y}.")
    v = head_variant(c, Atom("s", ("Q",)), avoid={"Q"})
    assert v.head == Atom("s", ("Q",))
    assert v.body[0].args[0] not in {"Q", "Y"} or v.body[0].args[0] != "Y"
    sf = solve(SIG, v.constraint, extra_vars=["Q", v.body[0].args[0]])
    assert sf.rep("Q") == sf.rep(v.body[0].args[0])


def test_var_source_skips_taken_names():
    names = VarSource(avoid={"V1", "V3"})
    assert names.fresh() == "V2"
    assert names.fresh() == "V4"
    assert names.fresh("X2") == "X1"


def test_wrap_query_completes_the_program():
    prog = parse_program(SIG, "1 p(X).\n2 q(X).\n")
    goal = parse_query(SIG, "p(A) & q(B) & {A=sg}.")
    extended, wrapped, wrapper = wrap_query(prog, goal)
    assert len(wrapped.atoms) == 1
    assert wrapped.atoms[0].relation == wrapper.head.relation
    assert wrapper.body == goal.atoms
    assert wrapper.factor == 1.0
    assert extended.clause(wrapper.id) is wrapper
