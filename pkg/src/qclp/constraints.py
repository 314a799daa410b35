"""Conjunctions of typed-feature constraints and their solved forms.

The constraint language has three atomic forms over variables:
``X=t`` (type assignment), ``X=f:Y`` (feature arc), and ``X=Y``
(equation).  Solving runs union-find with three closure rules:

* types on one class combine by meet (failure means UNSAT);
* two arcs with the same feature from one class force their targets
  equal (congruence);
* an arc with feature f strengthens its source by Intro(f), and once a
  class bottoms out at a minimal type its features must be appropriate
  there and its arc targets take on the appropriate value types.

UNSAT is an ordinary result carried by the solved form, never an
exception.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

from .signature import Signature


@dataclass(frozen=True)
class TypeC:
    var: str
    type: str

    def render(self) -> str:
        return f"{self.var}={self.type}"


@dataclass(frozen=True)
class ArcC:
    var: str
    feature: str
    target: str

    def render(self) -> str:
        return f"{self.var}={self.feature}:{self.target}"


@dataclass(frozen=True)
class EqC:
    left: str
    right: str

    def render(self) -> str:
        return f"{self.left}={self.right}"


AtomicConstraint = TypeC | ArcC | EqC
Constraint = tuple[AtomicConstraint, ...]


def constraint_vars(atoms: Iterable[AtomicConstraint]) -> list[str]:
    """Variables in first-mention order."""
    seen: dict[str, None] = {}
    for a in atoms:
        if isinstance(a, TypeC):
            seen.setdefault(a.var)
        elif isinstance(a, ArcC):
            seen.setdefault(a.var)
            seen.setdefault(a.target)
        else:
            seen.setdefault(a.left)
            seen.setdefault(a.right)
    return list(seen)


def conjoin(*parts: Iterable[AtomicConstraint]) -> Constraint:
    """Multiset union keeping the given order (earlier parts first)."""
    out: list[AtomicConstraint] = []
    for p in parts:
        out.extend(p)
    return tuple(out)


def rename_atoms(atoms: Iterable[AtomicConstraint], mapping: dict[str, str]) -> Constraint:
    def m(v: str) -> str:
        return mapping.get(v, v)

    out: list[AtomicConstraint] = []
    for a in atoms:
        if isinstance(a, TypeC):
            out.append(TypeC(m(a.var), a.type))
        elif isinstance(a, ArcC):
            out.append(ArcC(m(a.var), a.feature, m(a.target)))
        else:
            out.append(EqC(m(a.left), m(a.right)))
    return tuple(out)


class SolvedForm:
    """Union-find closure of a constraint conjunction.

    Immutable once built.  Each variable class carries a type and a
    feature-arc table; the class representative is the earliest variable
    mentioned.  ``sat`` is False for inconsistent input, in which case
    the structural tables are empty.
    """

    __slots__ = ("sig", "sat", "order", "_rep", "_type", "_arcs")

    def __init__(self, sig: Signature, atoms: Iterable[AtomicConstraint], extra_vars: Iterable[str] = ()):
        self.sig = sig
        atoms = tuple(atoms)
        order: dict[str, int] = {}
        for v in constraint_vars(atoms):
            order.setdefault(v, len(order))
        for v in extra_vars:
            order.setdefault(v, len(order))
        self.order = order

        parent: dict[str, str] = {v: v for v in order}
        ctype: dict[str, str] = {v: sig.root for v in order}
        arcs: dict[str, dict[str, str]] = {v: {} for v in order}

        def find(v: str) -> str:
            while parent[v] != v:
                parent[v] = parent[parent[v]]
                v = parent[v]
            return v

        sat = True

        def assign(v: str, t: str) -> bool:
            r = find(v)
            m = sig.meet(ctype[r], t)
            if m is None:
                return False
            ctype[r] = m
            return True

        def union(a: str, b: str) -> bool:
            ra, rb = find(a), find(b)
            if ra == rb:
                return True
            # keep the earlier-mentioned variable as representative
            if order[rb] < order[ra]:
                ra, rb = rb, ra
            parent[rb] = ra
            m = sig.meet(ctype[ra], ctype[rb])
            if m is None:
                return False
            ctype[ra] = m
            merged = arcs[ra]
            for f, tgt in arcs[rb].items():
                if f in merged:
                    if not union(merged[f], tgt):  # congruence
                        return False
                else:
                    merged[f] = tgt
            arcs[rb] = {}
            return True

        def add_arc(v: str, f: str, tgt: str) -> bool:
            if not assign(v, sig.intro(f)):  # feature introduction
                return False
            r = find(v)
            if f in arcs[r]:
                return union(arcs[r][f], tgt)
            arcs[r][f] = tgt
            return True

        for a in atoms:
            if isinstance(a, TypeC):
                ok = assign(a.var, a.type)
            elif isinstance(a, ArcC):
                ok = add_arc(a.var, a.feature, a.target)
            else:
                ok = union(a.left, a.right)
            if not ok:
                sat = False
                break

        # appropriateness closure: minimal-type classes constrain their
        # features and push value types onto arc targets, which may make
        # further classes minimal; iterate to a fixpoint
        while sat:
            changed = False
            for v in order:
                r = find(v)
                if r != v:
                    continue
                t = ctype[r]
                if t not in sig.minimal_types:
                    continue
                for f, tgt in list(arcs[r].items()):
                    vt = sig.approp_value(t, f)
                    if vt is None:
                        sat = False
                        break
                    rt = find(tgt)
                    m = sig.meet(ctype[rt], vt)
                    if m is None:
                        sat = False
                        break
                    if m != ctype[rt]:
                        ctype[rt] = m
                        changed = True
                if not sat:
                    break
            if not changed:
                break

        self.sat = sat
        if not sat:
            self._rep = {}
            self._type = {}
            self._arcs = {}
            return
        rep = {v: find(v) for v in order}
        self._rep = rep
        self._type = {r: ctype[r] for r in set(rep.values())}
        self._arcs = {r: dict(sorted(arcs[r].items())) for r in set(rep.values())}

    # -- queries ---------------------------------------------------------

    def rep(self, var: str) -> str:
        return self._rep[var]

    def type_of(self, var: str) -> str:
        return self._type[self._rep[var]]

    def arcs_of(self, var: str) -> dict[str, str]:
        """feature -> representative of the target class."""
        r = self._rep[var]
        return {f: self._rep[t] for f, t in self._arcs[r].items()}

    def class_members(self, var: str) -> list[str]:
        r = self._rep[var]
        return sorted((v for v in self._rep if self._rep[v] == r), key=self.order.__getitem__)

    def variables(self) -> list[str]:
        return sorted(self._rep, key=self.order.__getitem__)

    def to_atoms(self) -> Constraint:
        """Canonical flat constraint; solving it again is a fixpoint."""
        if not self.sat:
            raise ValueError("no canonical atoms for an unsatisfiable constraint")
        out: list[AtomicConstraint] = []
        reps_done: set[str] = set()
        for v in self.variables():
            r = self._rep[v]
            if r in reps_done:
                out.append(EqC(r, v))
                continue
            reps_done.add(r)
            if self._type[r] != self.sig.root:
                out.append(TypeC(r, self._type[r]))
            for f, tgt in self._arcs[r].items():
                out.append(ArcC(r, f, self._rep[tgt]))
        return tuple(out)

    def canonical_key(self):
        """Hashable identity: same variables, same classes, types, arcs."""
        if not self.sat:
            return ("UNSAT",)
        classes = []
        for v in self.variables():
            r = self._rep[v]
            if r != v:
                continue
            classes.append(
                (
                    tuple(self.class_members(r)),
                    self._type[r],
                    tuple((f, self._rep[t]) for f, t in self._arcs[r].items()),
                )
            )
        return tuple(classes)

    def __eq__(self, other) -> bool:
        return isinstance(other, SolvedForm) and self.canonical_key() == other.canonical_key()

    def __hash__(self) -> int:
        return hash(self.canonical_key())

    def entails(self, other: "SolvedForm") -> bool:
        """Class-wise subsumption: every constraint visible in ``other``
        holds here.  ``other``'s variables must all occur here."""
        if not self.sat:
            return True
        if not other.sat:
            return False
        for v in other._rep:
            if v not in self._rep:
                return False
        for v in other._rep:
            r_here = self._rep[v]
            r_there = other._rep[v]
            if self._rep[r_there] != r_here:
                return False  # an equation of other not honoured
            if not self.sig.subsumes(other.type_of(v), self._type[r_here]):
                return False
            for f, tgt in other._arcs.get(r_there, {}).items():
                here_arcs = self._arcs[r_here]
                if f not in here_arcs:
                    return False
                if self._rep[here_arcs[f]] != self._rep[other._rep[tgt]]:
                    return False
        return True

    def restrict(self, keep: Iterable[str]) -> "SolvedForm":
        """Solved form of the projection onto ``keep`` (plus everything
        reachable from ``keep`` through feature arcs)."""
        if not self.sat:
            return self
        keep = [v for v in keep if v in self._rep]
        reachable: set[str] = set()
        stack = [self._rep[v] for v in keep]
        while stack:
            r = stack.pop()
            if r in reachable:
                continue
            reachable.add(r)
            stack.extend(self._rep[t] for t in self._arcs[r].values())
        atoms: list[AtomicConstraint] = []
        # keep class representatives and explicitly kept vars only
        kept = [v for v in self.variables() if self._rep[v] in reachable and (v in keep or v == self._rep[v])]
        for v in kept:
            r = self._rep[v]
            if v != r:
                atoms.append(EqC(r, v))
                continue
            if self._type[r] != self.sig.root:
                atoms.append(TypeC(r, self._type[r]))
            for f, tgt in self._arcs[r].items():
                atoms.append(ArcC(r, f, self._rep[tgt]))
        return SolvedForm(self.sig, atoms)

    def render(self) -> str:
        if not self.sat:
            return "UNSAT"
        parts = [a.render() for a in self.to_atoms()]
        return " & ".join(parts) if parts else "true"

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"SolvedForm({self.render()})"


def solve(sig: Signature, atoms: Iterable[AtomicConstraint], extra_vars: Iterable[str] = ()) -> SolvedForm:
    return SolvedForm(sig, atoms, extra_vars)


def alpha_equivalent(a: SolvedForm, b: SolvedForm) -> bool:
    """Equality modulo a variable bijection.

    Builds the bijection by walking both structures in canonical order;
    used by duplicate checks that must ignore fresh-variable names.
    """
    if a.sat != b.sat:
        return False
    if not a.sat:
        return True
    va, vb = a.variables(), b.variables()
    if len(va) != len(vb):
        return False
    m = dict(zip(va, vb))
    inv = dict(zip(vb, va))
    if len(m) != len(inv):
        return False
    for x, y in m.items():
        if a.type_of(x) != b.type_of(y):
            return False
        if m[a.rep(x)] != b.rep(y):
            return False
        arcs_a, arcs_b = a.arcs_of(x), b.arcs_of(y)
        if sorted(arcs_a) != sorted(arcs_b):
            return False
        for f, tgt in arcs_a.items():
            if m[tgt] != b.rep(arcs_b[f]):
                return False
    return True
