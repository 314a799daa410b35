"""Min/max inference over quantitative clause factors.

The value of an atom under a context constraint is the maximum over
applicable clauses of factor times the minimum over the clause's body
atoms, with min over an empty body defined as 1.  Search materializes
this as an AND/OR tree: max-nodes are atom instances, min-nodes are
clause applications whose children cover the body atoms, and unit
clauses end in success leaves of value 1.

Three evaluators share the tree shape: an exhaustive min/max search, an
alpha-beta variant that prunes with running bounds, and an iterative
fixpoint chain over ground instances that serves as an independent
oracle for both.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

from .constraints import SolvedForm, conjoin, solve
from .program import Atom, Goal, Program, VarSource, head_variant, wrap_query
from .resolution import ProofTree


@dataclass
class SuccessLeaf:
    solved: SolvedForm
    value: float = 1.0


@dataclass
class MinNode:
    """A clause application: value = factor * min over body-atom values."""

    clause_id: str
    factor: float
    solved: SolvedForm
    children: list = field(default_factory=list)
    value: float | None = None
    pruned: bool = False


@dataclass
class MaxNode:
    """An atom instance: value = max over clause alternatives (0 if none)."""

    atom: Atom
    solved: SolvedForm
    children: list[MinNode] = field(default_factory=list)
    value: float | None = None
    pruned: bool = False
    best: MinNode | None = None


@dataclass(frozen=True)
class CutoffEvent:
    kind: str  # "alpha" or "beta"
    at: str  # rendered node label
    bound: float
    against: float


@dataclass
class SearchResult:
    value: float
    root: MaxNode
    visited_nodes: int
    cutoffs: tuple[CutoffEvent, ...] = ()
    heuristic: bool = False
    truncated: bool = False

    def best_trace(self) -> tuple[str, ...]:
        """Clause ids of the maximal proof, preorder (ties depth-first)."""
        out: list[str] = []

        def walk_max(node: MaxNode):
            if node.best is None:
                return
            out.append(node.best.clause_id)
            for child in node.best.children:
                if isinstance(child, MaxNode):
                    walk_max(child)

        walk_max(self.root)
        return tuple(out)


class DepthExhausted(Exception):
    pass


def _label(atom: Atom, solved: SolvedForm) -> str:
    small = solved.restrict(atom.args)
    cons = small.render()
    return atom.render() if cons == "true" else f"{atom.render()} & {cons}"


class _TreeSearch:
    def __init__(self, program: Program, depth_bound: int):
        self.program = program
        self.sig = program.signature
        self.depth_bound = depth_bound
        self.visited = 0
        self.names = VarSource()
        for c in program.clauses:
            self.names.avoid |= set(c.variables())

    def expansions(self, atom: Atom, solved: SolvedForm):
        """Satisfiable clause applications on ``atom`` under ``solved``."""
        for clause in self.program.clauses_for(atom.relation):
            avoid = set(solved.order) | set(atom.args)
            variant = head_variant(clause, atom, avoid, self.names)
            merged = solve(
                self.sig,
                conjoin(solved.to_atoms(), variant.constraint),
                extra_vars=[v for b in variant.body for v in b.args],
            )
            if merged.sat:
                yield clause, variant, merged


def _search_root(program: Program, query: Goal):
    """Single-atom queries are searched directly; compound queries go
    through the synthetic factor-1 wrapper clause."""
    if len(query.atoms) == 1:
        return program, query.atoms[0]
    program2, goal2, _ = wrap_query(program, query)
    return program2, goal2.atoms[0]


def minmax_search(program: Program, query: Goal, depth_bound: int = 100) -> SearchResult:
    """Exhaustive evaluation of the full min/max tree."""
    program2, root_atom = _search_root(program, query)
    ts = _TreeSearch(program2, depth_bound)
    solved0 = solve(program2.signature, query.constraint, extra_vars=query.variables())
    if not solved0.sat:
        ts.visited += 1
        empty = MaxNode(root_atom, solved0, value=0.0)
        return SearchResult(0.0, empty, ts.visited)

    def eval_max(atom: Atom, solved: SolvedForm, depth: int) -> MaxNode:
        if depth > ts.depth_bound:
            raise DepthExhausted(atom.render())
        ts.visited += 1
        node = MaxNode(atom, solved)
        best_val = 0.0
        for clause, variant, merged in ts.expansions(atom, solved):
            ts.visited += 1
            mn = MinNode(clause.id, clause.factor, merged)
            node.children.append(mn)
            worst = 1.0
            if variant.body:
                for b in variant.body:
                    child = eval_max(b, merged, depth + 1)
                    mn.children.append(child)
                    worst = min(worst, child.value)
            else:
                ts.visited += 1
                mn.children.append(SuccessLeaf(merged))
            mn.value = clause.factor * worst
            if mn.value > best_val:  # strict comparison keeps the first on ties
                best_val = mn.value
                node.best = mn
        node.value = best_val if node.children else 0.0
        return node

    root = eval_max(root_atom, solved0, 0)
    return SearchResult(root.value, root, ts.visited)


def alphabeta_search(
    program: Program, query: Goal, depth_bound: int = 100, initial_alpha: float = 0.0
) -> SearchResult:
    """Min/max search with alpha-beta pruning.

    With ``initial_alpha`` 0 the result equals exhaustive search; a
    positive initial bound can prune the maximal proof itself and is
    therefore flagged heuristic.
    """
    program2, root_atom = _search_root(program, query)
    ts = _TreeSearch(program2, depth_bound)
    solved0 = solve(program2.signature, query.constraint, extra_vars=query.variables())
    cutoffs: list[CutoffEvent] = []
    if not solved0.sat:
        ts.visited += 1
        return SearchResult(0.0, MaxNode(root_atom, solved0, value=0.0), ts.visited, heuristic=initial_alpha > 0)

    # Ancestor alpha bounds are shared one-element lists so updates made
    # while a subtree is explored are visible to its descendants.  Both
    # cutoff checks run only while siblings remain, since only then is
    # there anything to discontinue.
    def eval_max(
        atom: Atom,
        solved: SolvedForm,
        depth: int,
        max_alphas: list[list[float]],
        min_ancestors: list[MinNode],
    ) -> MaxNode:
        if depth > ts.depth_bound:
            raise DepthExhausted(atom.render())
        ts.visited += 1
        node = MaxNode(atom, solved)
        alpha_cell = [initial_alpha if depth == 0 else 0.0]
        expansions = list(ts.expansions(atom, solved))
        for ci, (clause, variant, merged) in enumerate(expansions):
            ts.visited += 1
            mn = MinNode(clause.id, clause.factor, merged)
            node.children.append(mn)
            mn.value = clause.factor  # min over no successors yet is 1
            if variant.body:
                worst = 1.0
                for bi, b in enumerate(variant.body):
                    child = eval_max(b, merged, depth + 1, max_alphas + [alpha_cell], min_ancestors + [mn])
                    mn.children.append(child)
                    worst = min(worst, child.value)
                    mn.value = clause.factor * worst
                    if bi + 1 < len(variant.body):
                        # discontinue below this min-node: its bound cannot
                        # beat some max ancestor's current best
                        bounds = [c[0] for c in max_alphas + [alpha_cell]]
                        if any(mn.value <= a for a in bounds):
                            mn.pruned = True
                            cutoffs.append(
                                CutoffEvent(
                                    "alpha",
                                    f"clause {clause.id} below {_label(atom, solved)}",
                                    mn.value,
                                    max(a for a in bounds if mn.value <= a),
                                )
                            )
                            break
            else:
                ts.visited += 1
                mn.children.append(SuccessLeaf(merged))
            if mn.value > alpha_cell[0]:
                alpha_cell[0] = mn.value
                node.best = mn
            if ci + 1 < len(expansions) and min_ancestors:
                # discontinue below this max-node: its best already beats
                # every min ancestor's running bound
                if all(alpha_cell[0] * anc.factor >= anc.value for anc in min_ancestors):
                    node.pruned = True
                    cutoffs.append(
                        CutoffEvent(
                            "beta",
                            _label(atom, solved),
                            alpha_cell[0],
                            min(anc.value for anc in min_ancestors),
                        )
                    )
                    break
        node.value = alpha_cell[0] if node.children else 0.0
        return node

    root = eval_max(root_atom, solved0, 0, [], [])
    return SearchResult(root.value, root, ts.visited, tuple(cutoffs), heuristic=initial_alpha > 0)


def proof_value(program: Program, tree: ProofTree) -> float:
    """Value of one proof: factor times min over body values, replayed
    from the clause trace (the spine is a preorder traversal)."""
    trace = iter(tree.clause_trace)

    def visit() -> float:
        cid = next(trace)
        clause = program.clause(cid)
        vals = [visit() for _ in clause.body]
        return clause.factor * (min(vals) if vals else 1.0)

    root_atoms = tree.nodes[0].atoms
    vals = [visit() for _ in root_atoms]
    leftover = next(trace, None)
    if leftover is not None:
        raise ValueError("clause trace longer than the proof structure")
    return min(vals) if vals else 1.0


# -- fixpoint oracle -------------------------------------------------------


class GroundingError(Exception):
    """The fixpoint oracle only handles arc-free clause constraints."""


@dataclass
class ChainResult:
    table: dict[tuple[str, tuple[str, ...]], float]
    steps: list[dict[tuple[str, tuple[str, ...]], float]]
    iterations: int

    def value(self, relation: str, args: tuple[str, ...]) -> float:
        return self.table.get((relation, args), 0.0)


def pf_chain(program: Program, tol: float = 1e-12, max_iters: int = 10000) -> ChainResult:
    """Iterate the ground consequence operator to its least fixpoint.

    Ground instances assign one minimal type per variable class.  Each
    step is monotone; convergence is sup-norm change below ``tol``.
    """
    sig = program.signature
    minimals = sorted(sig.minimal_types)

    # precompute groundings per clause: head tuple -> list of body tuples
    instantiations: dict[str, list[tuple[tuple[str, ...], list[tuple[str, tuple[str, ...]]], float]]] = {}
    for clause in program.clauses:
        solved = solve(
            sig,
            clause.constraint,
            extra_vars=[v for a in (clause.head, *clause.body) for v in a.args],
        )
        if not solved.sat:
            continue
        for v in solved.variables():
            if solved.arcs_of(v):
                raise GroundingError(
                    f"clause {clause.id}: constraint uses feature arcs; the ground oracle cannot enumerate these"
                )
        reps = sorted({solved.rep(v) for v in solved.variables()}, key=solved.order.__getitem__)
        rows = []
        for combo in itertools.product(minimals, repeat=len(reps)):
            g = dict(zip(reps, combo))
            if any(not sig.subsumes(solved.type_of(r), g[r]) for r in reps):
                continue
            head_t = tuple(g[solved.rep(a)] for a in clause.head.args)
            body_t = [(b.relation, tuple(g[solved.rep(a)] for a in b.args)) for b in clause.body]
            rows.append((head_t, body_t, clause.factor))
        instantiations.setdefault(clause.head.relation, []).extend(rows)

    table: dict[tuple[str, tuple[str, ...]], float] = {}
    for rel, rows in instantiations.items():
        for head_t, _, _ in rows:
            table[(rel, head_t)] = 0.0

    steps = [dict(table)]
    for it in range(1, max_iters + 1):
        new = dict(table)
        for rel, rows in instantiations.items():
            acc: dict[tuple[str, ...], float] = {}
            for head_t, body_t, factor in rows:
                body_vals = [table.get(bt, 0.0) for bt in body_t]
                v = factor * (min(body_vals) if body_vals else 1.0)
                key = head_t
                if v > acc.get(key, 0.0):
                    acc[key] = v
            for key, v in acc.items():
                new[(rel, key)] = v
        delta = max((abs(new[k] - table[k]) for k in table), default=0.0)
        if any(new[k] < table[k] - 1e-15 for k in table):
            raise AssertionError("fixpoint chain decreased; operator not monotone")
        table = new
        steps.append(dict(table))
        if delta < tol:
            return ChainResult(table, steps, it)
    raise AssertionError(f"fixpoint chain did not converge within {max_iters} iterations")


def chain_query_value(program: Program, query: Goal) -> float:
    """sup over ground instances consistent with the query constraint."""
    program2, root_atom = _search_root(program, query)
    chain = pf_chain(program2)
    sig = program.signature
    solved = solve(sig, query.constraint, extra_vars=query.variables())
    if not solved.sat:
        return 0.0
    best = 0.0
    for (r, args), v in chain.table.items():
        if r != root_atom.relation:
            continue
        ok = True
        for i, var in enumerate(root_atom.args):
            if not sig.subsumes(solved.type_of(var), args[i]):
                ok = False
                break
            for j in range(i):
                if solved.rep(root_atom.args[j]) == solved.rep(var) and args[j] != args[i]:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            best = max(best, v)
    return best
