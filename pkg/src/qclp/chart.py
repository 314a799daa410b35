"""Chart parsing by Earley deduction, and best-parse search.

The chart holds clauses of three provenances: the initial query clause,
predictions (a program clause's head variant resolved against the
selected atom of a chart clause, carrying the parent's full constraint),
and completions (a unit clause closing the selected atom of a non-unit
chart clause; the unit's head must be variable-identical to that atom,
so no renaming happens at completion time).

Closure alternates a prediction phase (non-unit clauses in id order,
program clauses in file order, recursing into new clauses immediately)
with a completion phase (pending units in id order, newly created units
cascading depth-first).  Non-unit predictions whose selected atom admits
no satisfiable program-clause head variant are rejected on the spot;
that one-step lookahead keeps dead-end items out of the chart.
Duplicates are blocked by variant equality (identical modulo renaming,
constraint included); a duplicate found with a new parent pair records
an extra derivation on the existing clause instead of a new id.

Best-parse search runs over the finished chart.  The exact mode is a
per-derivation dynamic program whose result equals the enumeration
argmax of e^{lambda.nu}.  The heuristic mode prunes whole equivalence
classes of completed clauses that are equal modulo renaming once
constraints are ignored, keeping the heaviest member, after discarding
candidates whose constraint is incompatible with every final clause;
pruning can lose the optimum, which the result reports rather than
hides.  The diagnostic mode drops the compatibility filter to exhibit
how an incompatible dead end can shadow all viable candidates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .constraints import SolvedForm, conjoin, rename_atoms, solve
from .loglinear import LogLinearModel
from .program import Atom, Clause, Goal, Program, VarSource, head_variant, wrap_query
from .resolution import ProofTree, SpineNode


class ChartError(Exception):
    pass


@dataclass(frozen=True)
class Init:
    def render(self) -> str:
        return "I"


@dataclass(frozen=True)
class Predict:
    parent: int
    clause: str

    def render(self) -> str:
        return f"P {self.parent},{self.clause}"


@dataclass(frozen=True)
class Complete:
    left: int   # non-unit parent
    right: int  # unit parent

    def render(self) -> str:
        return f"C {self.left},{self.right}"


Derivation = Init | Predict | Complete


@dataclass
class ChartClause:
    id: int
    head: Atom
    body: tuple[Atom, ...]
    solved: SolvedForm
    derivations: list[Derivation]

    @property
    def is_unit(self) -> bool:
        return not self.body

    @property
    def rule(self) -> Derivation:
        return self.derivations[0]

    def render(self) -> str:
        parts = [a.render() for a in self.body]
        cons = self.solved.render()
        if cons != "true":
            parts.append("{" + cons + "}")
        rhs = " & ".join(parts) if parts else "true"
        return f"{self.id} {self.head.render()} :- {rhs}. ({self.rule.render()})"


def _variant_key(head: Atom, body: tuple[Atom, ...], solved: SolvedForm):
    """Canonical form under variable renaming: fresh numbering in
    first-mention order over head args, body args, then solved-form
    variables."""
    mapping: dict[str, str] = {}

    def m(v: str) -> str:
        if v not in mapping:
            mapping[v] = f"v{len(mapping)}"
        return mapping[v]

    hk = (head.relation, tuple(m(v) for v in head.args))
    bk = tuple((a.relation, tuple(m(v) for v in a.args)) for a in body)
    for v in solved.variables():
        m(v)
    renamed = solve(solved.sig, rename_atoms(solved.to_atoms(), mapping))
    return hk, bk, renamed.canonical_key()


@dataclass
class Chart:
    program: Program
    query: Goal
    clauses: list[ChartClause] = field(default_factory=list)
    init_id: int = 0
    overflowed: bool = False

    def __getitem__(self, cid: int) -> ChartClause:
        return self._by_id[cid]

    def __post_init__(self):
        self._by_id: dict[int, ChartClause] = {c.id: c for c in self.clauses}

    @property
    def init(self) -> ChartClause:
        return self._by_id[self.init_id]

    def finals(self) -> list[ChartClause]:
        """Completed unit clauses whose head is the query atom itself."""
        if self.init_id not in self._by_id:
            return []
        goal = self.init.head
        return [
            c
            for c in self.clauses
            if c.id != self.init_id
            and c.is_unit
            and c.head.relation == goal.relation
            and c.head.args == goal.args
        ]

    def derived(self) -> list[ChartClause]:
        return [c for c in self.clauses if c.id != self.init_id]

    def render(self) -> str:
        return "\n".join(c.render() for c in self.clauses)


def predict(program: Program, c1: ChartClause, p: Clause, names: VarSource) -> tuple[Atom, tuple[Atom, ...], SolvedForm] | None:
    """Head variant of ``p`` against the selected atom of ``c1``,
    constraint merged with the parent's; None when unsatisfiable or the
    relations differ."""
    selected = c1.body[0]
    if p.head.relation != selected.relation:
        return None
    avoid = set(c1.solved.order) | {v for a in c1.body for v in a.args}
    variant = head_variant(p, selected, avoid, names)
    raw = conjoin(c1.solved.to_atoms(), variant.constraint)
    extra = list(selected.args) + [v for a in variant.body for v in a.args]
    merged = solve(program.signature, raw, extra_vars=extra)
    if not merged.sat:
        return None
    return selected, variant.body, merged


def complete(program: Program, c1: ChartClause, c2: ChartClause) -> tuple[Atom, tuple[Atom, ...], SolvedForm] | None:
    """Close c1's selected atom with unit c2; the heads must already be
    variable-identical (completion never renames)."""
    selected = c1.body[0]
    if c2.head.relation != selected.relation or c2.head.args != selected.args:
        return None
    raw = conjoin(c1.solved.to_atoms(), c2.solved.to_atoms())
    extra = [v for a in c1.body for v in a.args]
    merged = solve(program.signature, raw, extra_vars=extra)
    if not merged.sat:
        return None
    return c1.head, c1.body[1:], merged


def _has_progress(program: Program, atom: Atom, solved: SolvedForm, names: VarSource) -> bool:
    """One-step lookahead: some program clause's head variant is
    satisfiable against ``atom`` under ``solved``."""
    probe = VarSource(set(names.avoid))
    for p in program.clauses:
        if p.head.relation != atom.relation:
            continue
        avoid = set(solved.order) | set(atom.args)
        variant = head_variant(p, atom, avoid, probe)
        raw = conjoin(solved.to_atoms(), variant.constraint)
        if solve(program.signature, raw).sat:
            return True
    return False


def earley_close(program: Program, query: Goal, first_id: int | None = None, cap: int = 100_000) -> Chart:
    """Exhaustive prediction/completion closure from the query clause.

    ``first_id`` numbers the initial clause (defaults to one past the
    program's clause count, matching program listings whose numbering
    the chart continues).
    """
    if len(query.atoms) != 1:
        program, goal, _ = wrap_query(program, query)
        query = goal
    base = len(program.clauses) + 1 if first_id is None else first_id
    solved0 = solve(program.signature, query.constraint, extra_vars=list(query.atoms[0].args))
    names = VarSource(set(query.variables()))
    for c in program.clauses:
        names.avoid |= set(c.variables())

    chart = Chart(program, query, [], base)
    by_key: dict[tuple, int] = {}
    sel_index: dict[tuple[str, tuple[str, ...]], list[int]] = {}
    predicted: set[int] = set()
    tried_pairs: set[tuple[int, int]] = set()

    def add(head: Atom, body: tuple[Atom, ...], merged: SolvedForm, deriv: Derivation) -> ChartClause | None:
        key = _variant_key(head, body, merged)
        if key in by_key:
            existing = chart[by_key[key]]
            if deriv not in existing.derivations:
                existing.derivations.append(deriv)
            return None
        if len(chart.clauses) >= cap:
            raise ChartError(f"chart exceeded {cap} clauses")
        cid = base + len(chart.clauses)
        cc = ChartClause(cid, head, body, merged, [deriv])
        chart.clauses.append(cc)
        chart._by_id[cid] = cc
        by_key[key] = cid
        if not cc.is_unit:
            sel = cc.body[0]
            sel_index.setdefault((sel.relation, sel.args), []).append(cid)
        return cc

    if not solved0.sat:
        return chart
    init = add(query.atoms[0], query.atoms, solved0, Init())

    def expand(c1: ChartClause):
        # prediction, depth-first: fully expand each new clause before
        # trying the next program clause on this one
        predicted.add(c1.id)
        for p in program.clauses:
            got = predict(program, c1, p, names)
            if got is None:
                continue
            head, body, merged = got
            if body and not _has_progress(program, body[0], merged, names):
                continue
            new = add(head, body, merged, Predict(c1.id, p.id))
            if new is not None and not new.is_unit:
                expand(new)

    def prediction_phase() -> bool:
        added = False
        i = 0
        while i < len(chart.clauses):
            c = chart.clauses[i]
            i += 1
            if not c.is_unit and c.id not in predicted:
                before = len(chart.clauses)
                expand(c)
                added = added or len(chart.clauses) != before
        return added

    def completion_phase() -> bool:
        added = False
        units = sorted(c.id for c in chart.clauses if c.is_unit and c.id != chart.init_id)
        stack = list(reversed(units))
        while stack:
            uid = stack.pop()
            unit = chart[uid]
            for c1_id in list(sel_index.get((unit.head.relation, unit.head.args), [])):
                if c1_id == chart.init_id:
                    continue  # the query clause itself is never closed
                if (c1_id, uid) in tried_pairs:
                    continue
                tried_pairs.add((c1_id, uid))
                got = complete(program, chart[c1_id], unit)
                if got is None:
                    continue
                head, body, merged = got
                new = add(head, body, merged, Complete(c1_id, uid))
                if new is not None:
                    added = True
                    if new.is_unit:
                        stack.append(new.id)
        return added

    while True:
        p_added = prediction_phase()
        c_added = completion_phase()
        if not p_added and not c_added:
            break
    return chart


# -- reconstruction --------------------------------------------------------


def _combine(t1: ProofTree, rest: tuple[Atom, ...], t2: ProofTree, query_vars: list[str]) -> ProofTree:
    """Graft the sub-derivation t2 (rooted at the selected atom) onto
    t1, appending the remaining atoms of t1's last state to every new
    node."""
    first = t2.nodes[0]
    if first.atoms != t1.nodes[-1].atoms[:1]:
        raise ChartError("junction mismatch between partial trees")
    nodes = list(t1.nodes)
    for n in t2.nodes[1:]:
        nodes.append(SpineNode(n.clause_id, n.atoms + rest, n.raw_constraint, n.solved))
    last = nodes[-1]
    answer = last.solved.restrict(query_vars)
    trace = tuple(n.clause_id for n in nodes if n.clause_id is not None)
    return ProofTree(tuple(nodes), answer, trace)


def _single_tree(chart: Chart, cid: int, deriv: Derivation, tree_of) -> ProofTree:
    c = chart[cid]
    qvars = chart.query.variables()
    if isinstance(deriv, Init):
        node = SpineNode(None, c.body, chart.query.constraint, c.solved)
        return ProofTree((node,), c.solved.restrict(qvars), ())
    if isinstance(deriv, Predict):
        parent = chart[deriv.parent]
        selected = parent.body[0]
        root = SpineNode(None, (selected,), parent.solved.to_atoms(), parent.solved)
        child = SpineNode(deriv.clause, c.body, c.solved.to_atoms(), c.solved)
        trace = (deriv.clause,)
        return ProofTree((root, child), c.solved.restrict(qvars), trace)
    parent = chart[deriv.left]
    t1 = tree_of(deriv.left)
    t2 = tree_of(deriv.right)
    return _combine(t1, parent.body[1:], t2, qvars)


def reconstruct(chart: Chart, final: ChartClause | int) -> ProofTree:
    """Proof tree of one chart clause along its first recorded
    derivation of every ancestor."""
    cid = final.id if isinstance(final, ChartClause) else final
    memo: dict[int, ProofTree] = {}
    visiting: set[int] = set()

    def tree_of(i: int) -> ProofTree:
        if i in memo:
            return memo[i]
        if i in visiting:
            raise ChartError(f"cyclic provenance at chart clause {i}")
        visiting.add(i)
        t = _single_tree(chart, i, chart[i].rule, tree_of)
        visiting.discard(i)
        memo[i] = t
        return t

    return tree_of(cid)


def reconstruct_all(chart: Chart, final: ChartClause | int) -> list[ProofTree]:
    """Every proof tree of a chart clause: the cartesian product of the
    recorded derivations, recursively.  Cyclic derivations (possible
    only through merged duplicates) are skipped; a clause with nothing
    but cyclic derivations is an error.

    A clause predicted from several parents records one derivation per
    parent although they all instantiate the same program clause; such
    duplicates collapse here (distinct proofs never share a clause
    trace, so the trace is the identity)."""
    cid = final.id if isinstance(final, ChartClause) else final
    memo: dict[int, list[ProofTree]] = {}
    visiting: set[int] = set()

    def trees_of(i: int) -> list[ProofTree]:
        if i in memo:
            return memo[i]
        if i in visiting:
            return []
        visiting.add(i)
        out: list[ProofTree] = []
        c = chart[i]
        qvars = chart.query.variables()
        for deriv in c.derivations:
            if isinstance(deriv, (Init, Predict)):
                out.append(_single_tree(chart, i, deriv, None))
            else:
                for t1 in trees_of(deriv.left):
                    for t2 in trees_of(deriv.right):
                        out.append(_combine(t1, chart[deriv.left].body[1:], t2, qvars))
        visiting.discard(i)
        seen: set[tuple[str, ...]] = set()
        uniq: list[ProofTree] = []
        for t in out:
            if t.clause_trace not in seen:
                seen.add(t.clause_trace)
                uniq.append(t)
        if not uniq:
            raise ChartError(f"cyclic provenance at chart clause {i}")
        memo[i] = uniq
        return uniq

    return trees_of(cid)


# -- best-parse search -----------------------------------------------------


def _log_w(model: LogLinearModel, tree: ProofTree) -> float:
    # the search weight leaves the base distribution out
    counts, _ = model.nu_vector(tree)
    return sum(l * c for l, c in zip(model.weights, counts))


def _dp_is_safe(chart: Chart, model: LogLinearModel) -> bool:
    """Per-derivation argmax is exact unless some clause packs several
    derivations while a multi-atom goal-state pattern could straddle a
    future junction."""
    if all(len(c.derivations) == 1 for c in chart.clauses):
        return True
    return all(p.kind != "node" or len(p.atoms) == 1 for p in model.properties)


def viterbi_best(chart: Chart, model: LogLinearModel) -> tuple[ProofTree, float]:
    """Exact best parse: max of e^{lambda.nu} over the finals' trees."""
    finals = chart.finals()
    if not finals:
        raise ChartError("chart has no final clauses")
    if _dp_is_safe(chart, model):
        memo: dict[int, tuple[ProofTree, float]] = {}
        visiting: set[int] = set()

        def best(i: int) -> tuple[ProofTree, float] | None:
            if i in memo:
                return memo[i]
            if i in visiting:
                return None
            visiting.add(i)
            top = None
            c = chart[i]
            qvars = chart.query.variables()
            for deriv in c.derivations:
                if isinstance(deriv, (Init, Predict)):
                    t = _single_tree(chart, i, deriv, None)
                else:
                    l = best(deriv.left)
                    r = best(deriv.right)
                    if l is None or r is None:
                        continue
                    t = _combine(l[0], chart[deriv.left].body[1:], r[0], qvars)
                w = _log_w(model, t)
                if top is None or w > top[1]:
                    top = (t, w)
            visiting.discard(i)
            if top is None:
                raise ChartError(f"cyclic provenance at chart clause {i}")
            memo[i] = top
            return top

        candidates = [(f.id, best(f.id)) for f in finals]
        _, (tree, lw) = candidates[0]
        for _, (t, w) in candidates[1:]:
            if w > lw:
                tree, lw = t, w
        return tree, math.exp(lw)
    # fall back to exhaustive scoring when packing makes the DP unsafe
    best_t, best_w = None, -math.inf
    for f in finals:
        for t in reconstruct_all(chart, f):
            w = _log_w(model, t)
            if w > best_w:
                best_t, best_w = t, w
    return best_t, math.exp(best_w)


@dataclass(frozen=True)
class ClassEvent:
    clause_id: int
    action: str       # kept | pruned | filtered | void
    log_weight: float | None
    note: str = ""


@dataclass(frozen=True)
class BestParseResult:
    tree: ProofTree | None
    weight: float
    final_id: int | None
    mode: str
    optimal: bool | None
    events: tuple[ClassEvent, ...]


def _uninstantiated_key(c: ChartClause):
    mapping: dict[str, str] = {}

    def m(v: str) -> str:
        if v not in mapping:
            mapping[v] = f"v{len(mapping)}"
        return mapping[v]

    return (
        (c.head.relation, tuple(m(v) for v in c.head.args)),
        tuple((a.relation, tuple(m(v) for v in a.args)) for a in c.body),
    )


def heuristic_best(chart: Chart, model: LogLinearModel, diagnostic: bool = False) -> BestParseResult:
    """Best-parse search with per-class pruning of completed clauses.

    Classes collect completed clauses equal modulo renaming once
    constraints are dropped.  In the normal mode a candidate enters a
    class only if its constraint is jointly satisfiable with at least
    one final clause's; diagnostic mode skips that filter to demonstrate
    the resulting failure.  Within a class only the heaviest partial
    tree survives; the others are deleted and their continuations never
    happen, exactly as when pruning interleaves with chart construction.
    """
    finals = {f.id for f in chart.finals()}
    final_atoms = [chart[f].solved.to_atoms() for f in sorted(finals)]
    sig = chart.program.signature
    alive: set[int] = set()
    trees: dict[int, ProofTree] = {}
    classes: dict[tuple, tuple[int, float]] = {}
    events: list[ClassEvent] = []
    qvars = chart.query.variables()
    mode = "diagnostic" if diagnostic else "heuristic"

    for c in chart.clauses:
        deriv = c.rule
        if isinstance(deriv, Init):
            alive.add(c.id)
            trees[c.id] = _single_tree(chart, c.id, deriv, None)
            continue
        if isinstance(deriv, Predict):
            if deriv.parent in alive:
                alive.add(c.id)
                trees[c.id] = _single_tree(chart, c.id, deriv, None)
            else:
                events.append(ClassEvent(c.id, "void", None, "parent pruned"))
            continue
        # completed clause: best candidate over alive derivations
        candidate = None
        for d in c.derivations:
            if not isinstance(d, Complete) or d.left not in alive or d.right not in alive:
                continue
            t = _combine(trees[d.left], chart[d.left].body[1:], trees[d.right], qvars)
            w = _log_w(model, t)
            if candidate is None or w > candidate[1]:
                candidate = (t, w)
        if candidate is None:
            events.append(ClassEvent(c.id, "void", None, "no live derivation"))
            continue
        t, w = candidate
        if not diagnostic:
            compatible = any(
                solve(sig, conjoin(c.solved.to_atoms(), fa)).sat for fa in final_atoms
            )
            if not compatible:
                events.append(ClassEvent(c.id, "filtered", w, "incompatible with every final"))
                continue
        key = _uninstantiated_key(c)
        incumbent = classes.get(key)
        if incumbent is None or w > incumbent[1]:
            if incumbent is not None:
                alive.discard(incumbent[0])
                events.append(ClassEvent(incumbent[0], "pruned", classes[key][1], f"outweighed by {c.id}"))
            classes[key] = (c.id, w)
            alive.add(c.id)
            trees[c.id] = t
            events.append(ClassEvent(c.id, "kept", w))
        else:
            events.append(ClassEvent(c.id, "pruned", w, f"class winner {incumbent[0]}"))

    surviving = [fid for fid in sorted(finals) if fid in alive]
    if not surviving:
        return BestParseResult(None, 0.0, None, mode, None, tuple(events))
    best_id = surviving[0]
    best_w = _log_w(model, trees[best_id])
    for fid in surviving[1:]:
        w = _log_w(model, trees[fid])
        if w > best_w:
            best_id, best_w = fid, w
    optimal = None
    if not diagnostic:
        _, exact_w = viterbi_best(chart, model)
        optimal = math.isclose(math.exp(best_w), exact_w, rel_tol=1e-12, abs_tol=1e-12)
    return BestParseResult(trees[best_id], math.exp(best_w), best_id, mode, optimal, tuple(events))
