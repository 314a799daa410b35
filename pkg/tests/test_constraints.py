import pytest
from hypothesis import given
from hypothesis import strategies as st

from qclp.constraints import (
    ArcC,
    EqC,
    TypeC,
    alpha_equivalent,
    conjoin,
    constraint_vars,
    rename_atoms,
    solve,
)
from qclp.signature import parse_signature

SIG = parse_signature(
    """
    type sg pl < agr
    type agr word < top
    approp word AGR agr
    approp word HEAD word
    """
)


def test_equation_merges_classes():
    sf = solve(SIG, [EqC("X", "Y"), TypeC("X", "sg")])
    assert sf.sat
    assert sf.rep("Y") == "X"
    assert sf.type_of("Y") == "sg"
    assert sf.class_members("Y") == ["X", "Y"]


def test_types_combine_by_meet():
    sf = solve(SIG, [TypeC("X", "agr"), TypeC("X", "sg")])
    assert sf.sat and sf.type_of("X") == "sg"


def test_incompatible_types_are_unsat_not_an_exception():
    sf = solve(SIG, [TypeC("X", "sg"), TypeC("X", "pl")])
    assert not sf.sat
    assert sf.canonical_key() == ("UNSAT",)
    assert sf.render() == "UNSAT"
    with pytest.raises(ValueError):
        sf.to_atoms()


def test_arc_strengthens_source_and_types_target():
    sf = solve(SIG, [ArcC("X", "AGR", "Y")])
    assert sf.type_of("X") == "word"
    assert sf.type_of("Y") == "agr"
    assert sf.arcs_of("X") == {"AGR": "Y"}


def test_arc_congruence_merges_targets():
    sf = solve(SIG, [ArcC("X", "AGR", "Y"), ArcC("X", "AGR", "Z"), TypeC("Y", "sg")])
    assert sf.rep("Z") == sf.rep("Y")
    assert sf.type_of("Z") == "sg"


def test_inappropriate_feature_is_unsat():
    sf = solve(SIG, [TypeC("X", "sg"), ArcC("X", "AGR", "Y")])
    assert not sf.sat


def test_appropriate_value_propagates_along_arcs():
    sf = solve(SIG, [ArcC("X", "HEAD", "Y"), ArcC("Y", "AGR", "Z")])
    assert sf.type_of("X") == "word"
    assert sf.type_of("Y") == "word"
    assert sf.type_of("Z") == "agr"


def test_cyclic_structures_are_satisfiable():
    sf = solve(SIG, [ArcC("X", "HEAD", "X")])
    assert sf.sat
    assert sf.arcs_of("X") == {"HEAD": "X"}
    assert sf.type_of("X") == "word"


def test_extra_vars_enter_at_the_root_type():
    sf = solve(SIG, [], extra_vars=["Q"])
    assert "Q" in sf.variables()
    assert sf.type_of("Q") == "top"


def test_to_atoms_is_a_fixpoint():
    sf = solve(SIG, [ArcC("X", "AGR", "Y"), EqC("Y", "Z"), TypeC("Z", "sg")])
    again = solve(SIG, sf.to_atoms())
    assert again.canonical_key() == sf.canonical_key()


def test_entailment():
    specific = solve(SIG, [TypeC("X", "sg"), EqC("X", "Y")])
    general = solve(SIG, [TypeC("X", "agr")], extra_vars=["Y"])
    assert specific.entails(general)
    assert not general.entails(specific)
    unsat = solve(SIG, [TypeC("X", "sg"), TypeC("X", "pl")])
    assert unsat.entails(specific)
    assert not specific.entails(unsat)


def test_restrict_drops_variables_but_follows_arcs():
    sf = solve(SIG, [ArcC("X", "AGR", "Y"), TypeC("Y", "sg"), TypeC("W", "pl")])
    out = sf.restrict(["X"])
    names = out.variables()
    assert "X" in names and "Y" in names and "W" not in names
    assert out.type_of("Y") == "sg"


def test_restrict_to_nothing_is_trivially_true():
    sf = solve(SIG, [TypeC("X", "sg")])
    assert sf.restrict([]).render() == "true"


def test_renaming_preserves_alpha_equivalence():
    atoms = (ArcC("X", "AGR", "Y"), TypeC("Y", "sg"))
    renamed = rename_atoms(atoms, {"X": "U", "Y": "V"})
    assert alpha_equivalent(solve(SIG, atoms), solve(SIG, renamed))
    assert not alpha_equivalent(
        solve(SIG, atoms), solve(SIG, [ArcC("X", "AGR", "Y"), TypeC("Y", "pl")])
    )


def test_constraint_vars_first_mention_order():
    atoms = (EqC("B", "A"), ArcC("A", "AGR", "C"), TypeC("D", "sg"))
    assert constraint_vars(atoms) == ["B", "A", "C", "D"]


def test_conjoin_keeps_order():
    a = (TypeC("X", "sg"),)
    b = (EqC("X", "Y"),)
    assert conjoin(a, b) == (TypeC("X", "sg"), EqC("X", "Y"))


_random_atom = st.one_of(
    st.builds(TypeC, st.sampled_from(["X", "Y", "Z"]), st.sampled_from(["sg", "pl", "agr", "word", "top"])),
    st.builds(EqC, st.sampled_from(["X", "Y", "Z"]), st.sampled_from(["X", "Y", "Z"])),
    st.builds(
        ArcC,
        st.sampled_from(["X", "Y", "Z"]),
        st.sampled_from(["AGR", "HEAD"]),
        st.sampled_from(["X", "Y", "Z"]),
    ),
)


@given(st.lists(_random_atom, max_size=6))
def test_solving_is_deterministic_and_idempotent(atoms):
    sf1 = solve(SIG, atoms)
    sf2 = solve(SIG, atoms)
    assert sf1.canonical_key() == sf2.canonical_key()
    if sf1.sat:
        # re-solving the canonical atoms changes nothing; variables that
        # carry no constraint must be re-introduced explicitly
        back = solve(SIG, sf1.to_atoms(), extra_vars=sf1.variables())
        assert back.canonical_key() == sf1.canonical_key()
        assert sf1.entails(sf1)


@given(st.lists(_random_atom, min_size=1, max_size=6), st.randoms(use_true_random=False))
def test_conjunct_order_does_not_change_the_solution(atoms, rng):
    shuffled = list(atoms)
    rng.shuffle(shuffled)
    sf1, sf2 = solve(SIG, atoms), solve(SIG, shuffled)
    assert sf1.sat == sf2.sat
    if sf1.sat:
        assert sf1.entails(sf2) and sf2.entails(sf1)
