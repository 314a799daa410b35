"""Goal reduction and proof enumeration.

A derivation interleaves two step kinds: an r-step replaces the leftmost
atom of a goal by the body of a fresh clause variant, and the following
c-step solves the accumulated constraint (eagerly, after every r-step).
Derivation trees keep every clause alternative including failures; proof
trees are the success spines, each carrying the answer constraint of its
final solved goal.

Enumeration is depth-first in textual clause order with the left-right
selection rule, bounded by a maximum number of r-steps per path; hitting
the bound with atoms still open marks the result truncated rather than
silently complete.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .constraints import Constraint, SolvedForm, conjoin, solve
from .program import Atom, Clause, Goal, Program, VarSource, head_variant


class NotApplicable:
    """Clause head relation does not match the selected atom (distinct
    from a failed c-step)."""

    __slots__ = ()


NOT_APPLICABLE = NotApplicable()


@dataclass(frozen=True)
class SpineNode:
    """One solved goal state on a success spine.

    ``clause_id`` is the clause whose r-step produced this state (None at
    the root); ``raw_constraint`` is the conjunction handed to the c-step.
    """

    clause_id: str | None
    atoms: tuple[Atom, ...]
    raw_constraint: Constraint
    solved: SolvedForm

    def is_leaf(self) -> bool:
        return not self.atoms

    def render(self) -> str:
        atoms = " & ".join(a.render() for a in self.atoms)
        cons = self.solved.render()
        if atoms and cons != "true":
            return f"{atoms} & {cons}"
        return atoms or cons


@dataclass(frozen=True)
class ProofTree:
    """A successful derivation: the spine of solved goal states."""

    nodes: tuple[SpineNode, ...]
    answer: SolvedForm
    clause_trace: tuple[str, ...]

    @property
    def leaf(self) -> SpineNode:
        return self.nodes[-1]

    def render(self) -> str:
        lines = []
        for n in self.nodes:
            label = f"[{n.clause_id}] " if n.clause_id is not None else ""
            lines.append(f"{label}{n.render()}")
        lines.append(f"answer: {self.answer.render()}")
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {
            "clauses": list(self.clause_trace),
            "answer": self.answer.render(),
            "spine": [
                {
                    "clause": n.clause_id,
                    "atoms": [a.render() for a in n.atoms],
                    "constraint": n.solved.render(),
                }
                for n in self.nodes
            ],
        }


@dataclass
class RawNode:
    """r-resolvent before constraint solving; child is None on UNSAT."""

    clause_id: str
    atoms: tuple[Atom, ...]
    constraint: Constraint
    child: "GoalNode | None" = None


@dataclass
class GoalNode:
    """Solved goal state; children enumerate the r-alternatives of the
    leftmost atom (empty for success leaves and dead ends)."""

    atoms: tuple[Atom, ...]
    solved: SolvedForm
    children: list[RawNode] = field(default_factory=list)
    truncated: bool = False

    def is_success(self) -> bool:
        return not self.atoms

    def count_success_leaves(self) -> int:
        if self.is_success():
            return 1
        return sum(r.child.count_success_leaves() for r in self.children if r.child is not None)


@dataclass(frozen=True)
class EnumerationResult:
    proofs: tuple[ProofTree, ...]
    truncated: bool

    def __iter__(self):
        return iter(self.proofs)

    def __len__(self):
        return len(self.proofs)

    def answers(self) -> list[SolvedForm]:
        return [p.answer for p in self.proofs]


def reduce(program: Program, atoms: tuple[Atom, ...], solved: SolvedForm, clause: Clause, names: VarSource):
    """One r-step plus its eager c-step.

    Returns ``(new_atoms, raw_constraint, new_solved)`` on success, None
    on a failed c-step, and NOT_APPLICABLE when the clause's head
    relation differs from the selected atom's.
    """
    selected = atoms[0]
    if clause.head.relation != selected.relation:
        return NOT_APPLICABLE
    avoid = set(solved.order) | {v for a in atoms for v in a.args}
    variant = head_variant(clause, selected, avoid, names)
    new_atoms = variant.body + atoms[1:]
    raw = conjoin(solved.to_atoms(), variant.constraint)
    extra = [v for a in new_atoms for v in a.args]
    new_solved = solve(program.signature, raw, extra_vars=extra)
    if not new_solved.sat:
        return None
    return new_atoms, raw, new_solved


def _initial_state(program: Program, query: Goal):
    solved = solve(program.signature, query.constraint, extra_vars=query.variables())
    names = VarSource(set(query.variables()))
    for c in program.clauses:
        names.avoid |= set(c.variables())
    return solved, names


def enumerate_proofs(program: Program, query: Goal, depth_bound: int = 100) -> EnumerationResult:
    """All proof trees reachable within ``depth_bound`` r-steps per path."""
    if depth_bound < 1:
        raise ValueError("depth bound must be at least 1")
    solved0, names = _initial_state(program, query)
    proofs: list[ProofTree] = []
    truncated = False
    if not solved0.sat:
        return EnumerationResult((), False)
    query_vars = query.variables()
    root = SpineNode(None, query.atoms, query.constraint, solved0)

    def walk(spine: list[SpineNode], depth: int):
        nonlocal truncated
        state = spine[-1]
        if not state.atoms:
            answer = state.solved.restrict(query_vars)
            proofs.append(
                ProofTree(tuple(spine), answer, tuple(n.clause_id for n in spine if n.clause_id is not None))
            )
            return
        if depth >= depth_bound:
            truncated = True
            return
        for clause in program.clauses_for(state.atoms[0].relation):
            step = reduce(program, state.atoms, state.solved, clause, names)
            if step is NOT_APPLICABLE or step is None:
                continue
            new_atoms, raw, new_solved = step
            spine.append(SpineNode(clause.id, new_atoms, raw, new_solved))
            walk(spine, depth + 1)
            spine.pop()

    walk([root], 0)
    return EnumerationResult(tuple(proofs), truncated)


def build_derivation_tree(program: Program, query: Goal, depth_bound: int = 100) -> GoalNode:
    """Full alternation tree: every r-alternative, failures included."""
    if depth_bound < 1:
        raise ValueError("depth bound must be at least 1")
    solved0, names = _initial_state(program, query)
    root = GoalNode(query.atoms, solved0)
    if not solved0.sat:
        return root

    def expand(node: GoalNode, depth: int):
        if not node.atoms:
            return
        if depth >= depth_bound:
            node.truncated = True
            return
        for clause in program.clauses_for(node.atoms[0].relation):
            step = reduce(program, node.atoms, node.solved, clause, names)
            if step is NOT_APPLICABLE:
                continue
            if step is None:
                # rebuild the raw resolvent for the failure leaf
                variant = head_variant(
                    clause, node.atoms[0], set(node.solved.order) | {v for a in node.atoms for v in a.args}, names
                )
                raw = conjoin(node.solved.to_atoms(), variant.constraint)
                node.children.append(RawNode(clause.id, variant.body + node.atoms[1:], raw, None))
                continue
            new_atoms, raw, new_solved = step
            child = GoalNode(new_atoms, new_solved)
            node.children.append(RawNode(clause.id, new_atoms, raw, child))
            expand(child, depth + 1)

    expand(root, 0)
    return root
