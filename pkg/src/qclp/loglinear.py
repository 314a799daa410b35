"""Log-linear distributions over proof trees.

A model assigns a tree x the unnormalized mass e^{lambda . nu(x)} p0(x),
where nu counts occurrences of tree properties.  Properties come in
three kinds, all serializable in the property-file line format
``name kind args``:

* ``clause <id>``: number of uses of a clause in the derivation;
* ``terminal {constraint}``: 1 when the success leaf's solved form
  matches the constraint pattern;
* ``node <atoms & {constraint}>``: number of spine goal states whose
  atom skeleton and solved form match the pattern.

Pattern matching anchors on goal skeletons: atoms must agree in order
and relation, pattern variables map positionally, every type mentioned
in the pattern must subsume the matched class's type, and mentioned
arcs/aliases must be present.  Features the pattern does not mention
are wildcards, and matching is invariant under renaming of the tree.

All mass arithmetic runs in natural-log space.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

from .constraints import SolvedForm, solve
from .program import Atom, ProgramError, _ClauseText
from .resolution import ProofTree
from .signature import Signature


class ModelError(Exception):
    pass


@dataclass(frozen=True)
class Property:
    name: str
    kind: str  # "clause" | "terminal" | "node"
    clause_id: str | None = None
    atoms: tuple[Atom, ...] = ()
    pattern: SolvedForm | None = None
    source: str = ""

    def render(self) -> str:
        return f"{self.name} {self.kind} {self.source}".rstrip()


def parse_properties(sig: Signature, text: str) -> list[Property]:
    out: list[Property] = []
    seen: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split(None, 2)
        if len(parts) < 2:
            raise ProgramError("expected 'name kind args'", lineno)
        name, kind = parts[0], parts[1]
        args = parts[2].strip() if len(parts) > 2 else ""
        if name in seen:
            raise ProgramError(f"duplicate property name {name!r}", lineno)
        seen.add(name)
        if kind == "clause":
            if not args:
                raise ProgramError("clause property needs a clause id", lineno)
            out.append(Property(name, "clause", clause_id=args, source=args))
        elif kind in ("terminal", "node"):
            parser = _ClauseText(sig, lineno)
            atoms, constraints, _ = parser.parse_items(args)
            if kind == "terminal" and atoms:
                raise ProgramError("terminal pattern must not contain atoms", lineno)
            if kind == "node" and not atoms:
                raise ProgramError("node pattern needs at least one atom", lineno)
            pattern = solve(sig, constraints, extra_vars=[v for a in atoms for v in a.args])
            if not pattern.sat:
                raise ProgramError("pattern constraint is unsatisfiable", lineno)
            out.append(Property(name, kind, atoms=tuple(atoms), pattern=pattern, source=args))
        else:
            raise ProgramError(f"unknown property kind {kind!r}", lineno)
    return out


def load_properties(sig: Signature, path: str) -> list[Property]:
    with open(path, encoding="utf-8") as fh:
        return parse_properties(sig, fh.read())


# -- pattern matching ------------------------------------------------------


def _extend_mapping(pattern: SolvedForm, node: SolvedForm, mapping: dict[str, str]) -> bool:
    """Close ``mapping`` (pattern rep -> node rep) under arcs and check
    types/aliases; mapping values are node representatives."""
    sig = pattern.sig
    agenda = list(mapping.items())
    while agenda:
        prep, nrep = agenda.pop()
        if not sig.subsumes(pattern._type[prep], node._type[nrep]):
            return False
        narcs = node._arcs[nrep]
        for f, ptgt in pattern._arcs[prep].items():
            if f not in narcs:
                return False
            ptgt_rep = pattern.rep(ptgt)
            ntgt_rep = node.rep(narcs[f])
            if ptgt_rep in mapping:
                if mapping[ptgt_rep] != ntgt_rep:
                    return False
            else:
                mapping[ptgt_rep] = ntgt_rep
                agenda.append((ptgt_rep, ntgt_rep))
    return True


def _match_constraint(pattern: SolvedForm, node: SolvedForm, anchor: dict[str, str]) -> bool:
    """Anchored classes are fixed; remaining pattern classes may match any
    node class (no-sharing in the pattern does not assert non-sharing)."""
    mapping: dict[str, str] = {}
    for pv, nv in anchor.items():
        prep = pattern.rep(pv)
        nrep = node.rep(nv)
        if prep in mapping and mapping[prep] != nrep:
            return False
        mapping[prep] = nrep
    if not _extend_mapping(pattern, node, mapping):
        return False
    free = [r for r in {pattern.rep(v) for v in pattern.variables()} if r not in mapping]
    if not free:
        return True
    node_reps = sorted({node.rep(v) for v in node.variables()}, key=node.order.__getitem__)

    def assign(i: int, mapping: dict[str, str]) -> bool:
        if i == len(free):
            return True
        for nrep in node_reps:
            trial = dict(mapping)
            trial[free[i]] = nrep
            if _extend_mapping(pattern, node, trial) and assign(i + 1, trial):
                return True
        return False

    return assign(0, mapping)


def property_count(prop: Property, tree: ProofTree) -> int:
    if prop.kind == "clause":
        return sum(1 for cid in tree.clause_trace if cid == prop.clause_id)
    if prop.kind == "terminal":
        leaf = tree.nodes[-1]
        if leaf.atoms:
            return 0
        return 1 if _match_constraint(prop.pattern, leaf.solved, {}) else 0
    # node kind
    n = 0
    for node in tree.nodes:
        if len(node.atoms) != len(prop.atoms):
            continue
        if any(a.relation != b.relation for a, b in zip(prop.atoms, node.atoms)):
            continue
        anchor: dict[str, str] = {}
        ok = True
        for pa, na in zip(prop.atoms, node.atoms):
            for pv, nv in zip(pa.args, na.args):
                if pv in anchor and node.rep(anchor[pv]) != node.rep(nv):
                    ok = False
                    break
                anchor.setdefault(pv, nv)
            if not ok:
                break
        if ok and _match_constraint(prop.pattern, node.solved, anchor):
            n += 1
    return n


# -- base distributions and models -----------------------------------------


@dataclass(frozen=True)
class SCFGParams:
    """Per-clause weights; proper probabilities renormalize within each
    head relation's clause group."""

    pi: dict[str, float]

    def log_prob(self, tree: ProofTree) -> float:
        total = 0.0
        for cid in tree.clause_trace:
            if cid not in self.pi:
                raise ModelError(f"no parameter for clause {cid}")
            v = self.pi[cid]
            if v <= 0.0:
                raise ModelError(f"nonpositive parameter for clause {cid}")
            total += math.log(v)
        return total


def scfg_prob(pi: SCFGParams, tree: ProofTree) -> float:
    return math.exp(pi.log_prob(tree))


def uniform_scfg(program) -> SCFGParams:
    """Equal weight to each clause within its head relation's group."""
    pi: dict[str, float] = {}
    groups: dict[str, list[str]] = {}
    for c in program.clauses:
        groups.setdefault(c.head.relation, []).append(c.id)
    for ids in groups.values():
        for cid in ids:
            pi[cid] = 1.0 / len(ids)
    return SCFGParams(pi)


@dataclass(frozen=True)
class LogLinearModel:
    signature: Signature
    properties: tuple[Property, ...]
    weights: tuple[float, ...]
    p0: SCFGParams | None = None  # None means the improper uniform base

    def __post_init__(self):
        if len(self.properties) != len(self.weights):
            raise ModelError("property/weight length mismatch")
        keys = [(p.kind, p.clause_id, p.atoms, None if p.pattern is None else p.pattern.canonical_key()) for p in self.properties]
        if len(set(keys)) != len(keys):
            raise ModelError("identical property patterns in one model")

    def nu_vector(self, tree: ProofTree) -> tuple[tuple[int, ...], int]:
        counts = tuple(property_count(p, tree) for p in self.properties)
        return counts, sum(counts)

    def log_base(self, tree: ProofTree) -> float:
        return 0.0 if self.p0 is None else self.p0.log_prob(tree)

    def log_weight(self, tree: ProofTree) -> float:
        counts, _ = self.nu_vector(tree)
        return sum(l * c for l, c in zip(self.weights, counts)) + self.log_base(tree)

    def weight(self, tree: ProofTree) -> float:
        return math.exp(self.log_weight(tree))

    def with_weights(self, weights: Sequence[float]) -> "LogLinearModel":
        return replace(self, weights=tuple(weights))

    def extend(self, prop: Property, alpha: float) -> "LogLinearModel":
        return replace(self, properties=self.properties + (prop,), weights=self.weights + (alpha,))

    def render(self) -> str:
        lines = ["p0 uniform" if self.p0 is None else "p0 scfg"]
        if self.p0 is not None:
            for cid in sorted(self.p0.pi, key=lambda s: (len(s), s)):
                lines.append(f"pi {cid} {self.p0.pi[cid]!r}")
        for p in self.properties:
            lines.append(f"property {p.render()}")
        for p, w in zip(self.properties, self.weights):
            lines.append(f"lambda {p.name} {w!r}")
        return "\n".join(lines) + "\n"


def parse_model(sig: Signature, text: str) -> LogLinearModel:
    p0_kind = None
    pi: dict[str, float] = {}
    prop_lines: list[str] = []
    lambdas: dict[str, float] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split(None, 1)
        head, rest = parts[0], parts[1] if len(parts) > 1 else ""
        if head == "p0":
            p0_kind = rest.strip()
        elif head == "pi":
            cid, val = rest.split()
            pi[cid] = float(val)
        elif head == "property":
            prop_lines.append(rest)
        elif head == "lambda":
            name, val = rest.rsplit(None, 1)
            lambdas[name.strip()] = float(val)
        else:
            raise ProgramError(f"unknown model directive {head!r}", lineno)
    props = parse_properties(sig, "\n".join(prop_lines))
    weights = []
    for p in props:
        if p.name not in lambdas:
            raise ProgramError(f"no weight for property {p.name}")
        weights.append(lambdas[p.name])
    base = None
    if p0_kind == "scfg":
        base = SCFGParams(pi)
    elif p0_kind not in (None, "uniform"):
        raise ProgramError(f"unknown p0 descriptor {p0_kind!r}")
    return LogLinearModel(sig, tuple(props), tuple(weights), base)


def load_model(sig: Signature, path: str) -> LogLinearModel:
    with open(path, encoding="utf-8") as fh:
        return parse_model(sig, fh.read())


# -- normalization ---------------------------------------------------------


def log_sum_exp(values: Iterable[float]) -> float:
    vals = list(values)
    if not vals:
        raise ValueError("log_sum_exp of nothing")
    m = max(vals)
    if m == -math.inf:
        return -math.inf
    return m + math.log(sum(math.exp(v - m) for v in vals))


def normalize(model: LogLinearModel, trees: Sequence[ProofTree]) -> tuple[float, list[float]]:
    """Partition value and probability table over an enumerated tree set."""
    if not trees:
        raise ModelError("cannot normalize over an empty tree set")
    logs = [model.log_weight(t) for t in trees]
    lz = log_sum_exp(logs)
    return math.exp(lz), [math.exp(l - lz) for l in logs]


def conditional(model: LogLinearModel, trees: Sequence[ProofTree]) -> list[float]:
    """k(x|y) over the trees of one query; free of the global partition
    value because it is a ratio."""
    if not trees:
        raise ModelError("query has no proof trees")
    _, probs = normalize(model, trees)
    return probs
