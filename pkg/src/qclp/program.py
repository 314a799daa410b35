"""Definite clause programs over the typed-feature constraint language.

Clause syntax (one clause per line)::

    [id] [factor] head :- item & item & ... .

where an item is a relational atom ``rel(X,Y,...)`` or a constraint
block ``{X=t & X=f:Y & X=Y}``.  Constraint blocks may appear anywhere in
the body; they accumulate into the clause-level constraint, since a goal
is an atom list plus one constraint and the textual position of a
constraint carries no meaning.  A leading bare integer is the clause id,
a number containing a dot (or a name bound by a weights file) is the
clause factor.

Three kinds of sugar, all expanded at parse time:

* paths: ``X=DTR1:PHON:Clinton`` introduces fresh intermediate
  variables; a path's final segment is a type iff the signature declares
  it, else a variable;
* constants as arguments: ``word(X,0,1)`` turns the position constants
  into fresh variables constrained to the corresponding types;
* repeated argument variables become fresh variables equated to the
  first occurrence, keeping atom arguments pairwise distinct.

Tokens that name declared types are types; otherwise tokens starting
with an uppercase letter or underscore are variables, and anything else
is rejected, which catches misspelled lowercase type names.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace

from .constraints import ArcC, AtomicConstraint, Constraint, EqC, TypeC, conjoin, constraint_vars, rename_atoms
from .signature import Signature, SignatureError, parse_signature


class ProgramError(Exception):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class Atom:
    relation: str
    args: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.args)) != len(self.args):
            raise ProgramError(f"atom arguments must be pairwise distinct: {self.render()}")

    def render(self) -> str:
        return f"{self.relation}({','.join(self.args)})"


@dataclass(frozen=True)
class Clause:
    id: str
    head: Atom
    body: tuple[Atom, ...]
    constraint: Constraint
    factor: float = 1.0
    factor_name: str | None = None

    def is_unit(self) -> bool:
        return not self.body

    def variables(self) -> list[str]:
        seen: dict[str, None] = {}
        for a in (self.head, *self.body):
            for v in a.args:
                seen.setdefault(v)
        for v in constraint_vars(self.constraint):
            seen.setdefault(v)
        return list(seen)

    def render(self) -> str:
        parts = [a.render() for a in self.body]
        if self.constraint:
            parts.append("{" + " & ".join(c.render() for c in self.constraint) + "}")
        factor = ""
        if self.factor_name is not None:
            factor = f" {self.factor_name}"
        elif self.factor != 1.0:
            factor = f" {self.factor}"
        lhs = f"{self.id}{factor} {self.head.render()}"
        if not parts:
            return f"{lhs}."
        return f"{lhs} :- {' & '.join(parts)}."


@dataclass(frozen=True)
class Goal:
    atoms: tuple[Atom, ...]
    constraint: Constraint

    def variables(self) -> list[str]:
        seen: dict[str, None] = {}
        for a in self.atoms:
            for v in a.args:
                seen.setdefault(v)
        for v in constraint_vars(self.constraint):
            seen.setdefault(v)
        return list(seen)

    def render(self) -> str:
        parts = [a.render() for a in self.atoms]
        if self.constraint:
            parts.append("{" + " & ".join(c.render() for c in self.constraint) + "}")
        return " & ".join(parts) if parts else "true"


@dataclass
class Program:
    signature: Signature
    clauses: list[Clause]
    arities: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        ids = set()
        for c in self.clauses:
            if c.id in ids:
                raise ProgramError(f"duplicate clause id {c.id}")
            ids.add(c.id)
            for atom in (c.head, *c.body):
                known = self.arities.setdefault(atom.relation, len(atom.args))
                if known != len(atom.args):
                    raise ProgramError(
                        f"relation {atom.relation} used with arity {len(atom.args)} and {known}"
                    )
            if not 0.0 < c.factor <= 1.0:
                raise ProgramError(f"clause {c.id}: factor {c.factor} outside (0,1]")
        defined = {c.head.relation for c in self.clauses}
        for c in self.clauses:
            for b in c.body:
                if b.relation not in defined:
                    raise ProgramError(f"clause {c.id}: relation {b.relation} has no defining clause")
        self._by_id = {c.id: c for c in self.clauses}
        self._by_relation: dict[str, list[Clause]] = {}
        for c in self.clauses:
            self._by_relation.setdefault(c.head.relation, []).append(c)

    def clause(self, cid: str) -> Clause:
        return self._by_id[cid]

    def clauses_for(self, relation: str) -> list[Clause]:
        return self._by_relation.get(relation, [])

    def with_factors(self, weights: dict[str, float]) -> "Program":
        """Resolve symbolic factors against a weights table."""
        out = []
        for c in self.clauses:
            if c.factor_name is not None:
                if c.factor_name not in weights:
                    raise ProgramError(f"clause {c.id}: unbound factor name {c.factor_name}")
                out.append(replace(c, factor=weights[c.factor_name]))
            else:
                out.append(c)
        return Program(self.signature, out)

    def render(self) -> str:
        return "\n".join(c.render() for c in self.clauses) + "\n"


class VarSource:
    """Deterministic fresh-variable supply avoiding a growing name set."""

    def __init__(self, avoid=()):
        self.avoid = set(avoid)
        self._counters: dict[str, int] = {}

    def fresh(self, base: str = "V") -> str:
        stem = base.rstrip("0123456789") or "V"
        n = self._counters.get(stem, 0)
        while True:
            n += 1
            name = f"{stem}{n}"
            if name not in self.avoid:
                self._counters[stem] = n
                self.avoid.add(name)
                return name


def fresh_variant(clause: Clause, avoid, names: VarSource | None = None) -> Clause:
    """Rename every clause variable away from ``avoid``."""
    names = names or VarSource(set(avoid) | set(clause.variables()))
    names.avoid |= set(avoid)
    mapping = {v: names.fresh(v) for v in clause.variables()}
    return _apply(clause, mapping)


def head_variant(clause: Clause, onto: Atom, avoid, names: VarSource | None = None) -> Clause:
    """Variant whose head arguments are literally ``onto``'s arguments;
    all other variables fresh with respect to ``avoid``."""
    names = names or VarSource(set(avoid) | set(clause.variables()) | set(onto.args))
    names.avoid |= set(avoid) | set(onto.args)
    mapping = dict(zip(clause.head.args, onto.args))
    for v in clause.variables():
        if v not in mapping:
            mapping[v] = names.fresh(v)
    return _apply(clause, mapping)


def _apply(clause: Clause, mapping: dict[str, str]) -> Clause:
    def ratom(a: Atom) -> Atom:
        return Atom(a.relation, tuple(mapping.get(v, v) for v in a.args))

    return Clause(
        id=clause.id,
        head=ratom(clause.head),
        body=tuple(ratom(b) for b in clause.body),
        constraint=rename_atoms(clause.constraint, mapping),
        factor=clause.factor,
        factor_name=clause.factor_name,
    )


# -- parsing ---------------------------------------------------------------

_NUM_RE = re.compile(r"^\d+$")
_FLOAT_RE = re.compile(r"^(\d+\.\d*|\.\d+|\d+\.)$")
_NAME_RE = re.compile(r"^[A-Za-z_0-9']+$")


def _is_variable(token: str, sig: Signature, lineno: int | None) -> bool:
    if sig.is_type(token):
        return False
    if token[0].isupper() or token[0] == "_":
        return True
    raise ProgramError(f"{token!r} is neither a declared type nor a variable (variables start uppercase or '_')", lineno)


class _ClauseText:
    """Splitter for one clause/query line: atoms and {...} blocks."""

    def __init__(self, sig: Signature, lineno: int | None):
        self.sig = sig
        self.lineno = lineno
        self.names: VarSource | None = None

    def parse_items(self, text: str) -> tuple[list[Atom], list[AtomicConstraint], list[str]]:
        items = self._split_items(text)
        atoms: list[Atom] = []
        raw_vars: list[str] = []
        blocks: list[str] = []
        parsed: list[tuple[str, str]] = []
        for item in items:
            item = item.strip()
            if not item:
                raise ProgramError("empty conjunct", self.lineno)
            if item.startswith("{"):
                if not item.endswith("}"):
                    raise ProgramError("unterminated constraint block", self.lineno)
                parsed.append(("block", item[1:-1]))
            else:
                parsed.append(("atom", item))
        # first pass: collect user variables so sugar expansion avoids them
        for kind, chunk in parsed:
            for tok in re.findall(r"[A-Za-z_0-9']+", chunk):
                if _NAME_RE.match(tok) and not self.sig.is_type(tok) and (tok[0].isupper() or tok[0] == "_"):
                    raw_vars.append(tok)
        if self.names is None:
            self.names = VarSource(raw_vars)
        else:
            self.names.avoid |= set(raw_vars)
        constraints: list[AtomicConstraint] = []
        for kind, chunk in parsed:
            if kind == "atom":
                atom, extra = self._parse_atom(chunk)
                atoms.append(atom)
                constraints.extend(extra)
            else:
                constraints.extend(self._parse_block(chunk))
        return atoms, constraints, raw_vars

    def _split_items(self, text: str) -> list[str]:
        # '&' separates items, but not inside {...}
        items, depth, cur = [], 0, []
        for ch in text:
            if ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth < 0:
                    raise ProgramError("unbalanced '}'", self.lineno)
            if ch == "&" and depth == 0:
                items.append("".join(cur))
                cur = []
            else:
                cur.append(ch)
        if depth != 0:
            raise ProgramError("unbalanced '{'", self.lineno)
        if cur:
            items.append("".join(cur))
        return items

    def _parse_atom(self, text: str) -> tuple[Atom, list[AtomicConstraint]]:
        m = re.match(r"^\s*([A-Za-z_][A-Za-z_0-9']*)\s*\(([^()]*)\)\s*$", text)
        if not m:
            raise ProgramError(f"cannot parse atom {text.strip()!r}", self.lineno)
        rel, argstext = m.group(1), m.group(2)
        arg_tokens = [t.strip() for t in argstext.split(",")] if argstext.strip() else []
        args: list[str] = []
        extra: list[AtomicConstraint] = []
        for tok in arg_tokens:
            if not tok or not _NAME_RE.match(tok):
                raise ProgramError(f"bad argument {tok!r} in {rel}", self.lineno)
            if self.sig.is_type(tok):
                v = self.names.fresh("P")
                args.append(v)
                extra.append(TypeC(v, tok))
            elif _is_variable(tok, self.sig, self.lineno):
                if tok in args:
                    v = self.names.fresh(tok)
                    args.append(v)
                    extra.append(EqC(tok, v))
                else:
                    args.append(tok)
        return Atom(rel, tuple(args)), extra

    def _parse_block(self, text: str) -> list[AtomicConstraint]:
        out: list[AtomicConstraint] = []
        for part in text.split("&"):
            part = part.strip()
            if not part:
                raise ProgramError("empty constraint conjunct", self.lineno)
            if "=" not in part:
                raise ProgramError(f"constraint {part!r} lacks '='", self.lineno)
            lhs, rhs = part.split("=", 1)
            lhs, rhs = lhs.strip(), rhs.strip()
            if not _NAME_RE.match(lhs) or not _is_variable(lhs, self.sig, self.lineno):
                raise ProgramError(f"left side of {part!r} must be a variable", self.lineno)
            out.extend(self._parse_path(lhs, rhs))
        return out

    def _parse_path(self, var: str, path: str) -> list[AtomicConstraint]:
        segments = [s.strip() for s in path.split(":")]
        if any(not _NAME_RE.match(s) for s in segments):
            raise ProgramError(f"bad path {path!r}", self.lineno)
        out: list[AtomicConstraint] = []
        cur = var
        for seg in segments[:-1]:
            if seg not in self.sig.features:
                raise ProgramError(f"{seg!r} is not a declared feature", self.lineno)
            nxt = self.names.fresh("P")
            out.append(ArcC(cur, seg, nxt))
            cur = nxt
        last = segments[-1]
        if len(segments) == 1:
            if self.sig.is_type(last):
                out.append(TypeC(cur, last))
            else:
                _is_variable(last, self.sig, self.lineno)
                out.append(EqC(cur, last))
        else:
            if self.sig.is_type(last):
                out.append(TypeC(cur, last))
            else:
                _is_variable(last, self.sig, self.lineno)
                # replace the dangling fresh variable by the named one
                arc = out[-1]
                out[-1] = ArcC(arc.var, arc.feature, last)
        return out


def parse_clause_line(sig: Signature, line: str, lineno: int | None, default_id: str) -> Clause:
    text = line.strip()
    if text.endswith("."):
        text = text[:-1]
    if ":-" in text:
        head_text, body_text = text.split(":-", 1)
    else:
        head_text, body_text = text, ""
    head_tokens = head_text.strip()
    m = re.match(r"^((?:[A-Za-z_0-9'.]+\s+)*)([A-Za-z_][A-Za-z_0-9']*\s*\(.*)$", head_tokens)
    if not m:
        raise ProgramError(f"cannot parse clause head in {line.strip()!r}", lineno)
    prefix = m.group(1).split()
    head_part = m.group(2)
    cid: str | None = None
    factor = 1.0
    factor_name: str | None = None
    if len(prefix) > 2:
        raise ProgramError("too many tokens before the clause head", lineno)
    for i, tok in enumerate(prefix):
        if i == 0 and _NUM_RE.match(tok):
            cid = tok
        elif _FLOAT_RE.match(tok):
            factor = float(tok)
        elif _NUM_RE.match(tok):
            raise ProgramError("integer factor must be written with a dot (e.g. 1.0)", lineno)
        elif _NAME_RE.match(tok) and not tok[0].isdigit():
            factor_name = tok
        else:
            raise ProgramError(f"cannot interpret prefix token {tok!r}", lineno)
    parser = _ClauseText(sig, lineno)
    # one fresh-variable supply per clause, seeded from the whole line so
    # head sugar and body sugar can never mint the same name
    all_names = [
        tok
        for tok in re.findall(r"[A-Za-z_0-9']+", head_part + " " + body_text)
        if not sig.is_type(tok) and (tok[0].isupper() or tok[0] == "_")
    ]
    parser.names = VarSource(all_names)
    head_atoms, head_constraints, _ = parser.parse_items(head_part)
    if len(head_atoms) != 1:
        raise ProgramError("clause head must be a single atom", lineno)
    body_atoms: list[Atom] = []
    body_constraints: list[AtomicConstraint] = list(head_constraints)
    if body_text.strip():
        atoms, constraints, _ = parser.parse_items(body_text)
        body_atoms = atoms
        body_constraints.extend(constraints)
    return Clause(
        id=cid if cid is not None else default_id,
        head=head_atoms[0],
        body=tuple(body_atoms),
        constraint=tuple(body_constraints),
        factor=factor,
        factor_name=factor_name,
    )


def parse_program(sig: Signature, text: str) -> Program:
    clauses: list[Clause] = []
    n = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        n += 1
        clauses.append(parse_clause_line(sig, line, lineno, default_id=str(n)))
    return Program(sig, clauses)


def parse_query(sig: Signature, text: str, lineno: int | None = None) -> Goal:
    text = text.strip()
    if text.endswith("."):
        text = text[:-1]
    parser = _ClauseText(sig, lineno)
    atoms, constraints, _ = parser.parse_items(text)
    return Goal(tuple(atoms), tuple(constraints))


@dataclass(frozen=True)
class CorpusEntry:
    goal: Goal
    count: int = 1
    gold: int | None = None

    def render(self) -> str:
        gold = f" @ {self.gold}" if self.gold is not None else ""
        return f"{self.count} {self.goal.render()}.{gold}"


def parse_corpus(sig: Signature, text: str) -> list[CorpusEntry]:
    """Corpus lines: ``[count] query.`` with optional trailing ``@ gold-index``."""
    entries: list[CorpusEntry] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        gold: int | None = None
        if "@" in line:
            line, gold_text = line.rsplit("@", 1)
            try:
                gold = int(gold_text.strip())
            except ValueError:
                raise ProgramError(f"bad gold index {gold_text.strip()!r}", lineno) from None
        line = line.strip()
        count = 1
        m = re.match(r"^(\d+)\s+(.*)$", line)
        if m:
            count = int(m.group(1))
            line = m.group(2)
        if count < 1:
            raise ProgramError("count must be positive", lineno)
        entries.append(CorpusEntry(parse_query(sig, line, lineno), count, gold))
    return entries


def parse_weights(text: str) -> dict[str, float]:
    """``name value`` lines; values are plain decimal literals."""
    out: dict[str, float] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ProgramError("expected 'name value'", lineno)
        try:
            out[parts[0]] = float(parts[1])
        except ValueError:
            raise ProgramError(f"bad value {parts[1]!r}", lineno) from None
    return out


def load_program(sig: Signature, path: str) -> Program:
    with open(path, encoding="utf-8") as fh:
        return parse_program(sig, fh.read())


def load_query(sig: Signature, path: str) -> Goal:
    with open(path, encoding="utf-8") as fh:
        return parse_query(sig, fh.read())


def load_corpus(sig: Signature, path: str) -> list[CorpusEntry]:
    with open(path, encoding="utf-8") as fh:
        return parse_corpus(sig, fh.read())


def load_weights(path: str) -> dict[str, float]:
    with open(path, encoding="utf-8") as fh:
        return parse_weights(fh.read())


QUERY_WRAPPER_RELATION = "_query"


def wrap_query(program: Program, goal: Goal) -> tuple[Program, Goal, Clause]:
    """Complete the program with a synthetic unit-factor clause defining
    the query, so searches can assume a single-atom root goal.  The
    wrapper is transparent: answers are reported on the query variables.
    """
    args = tuple(goal.variables())
    head = Atom(QUERY_WRAPPER_RELATION, args)
    wrapper = Clause(id="q", head=head, body=goal.atoms, constraint=goal.constraint, factor=1.0)
    extended = Program(program.signature, program.clauses + [wrapper])
    return extended, Goal((head,), ()), wrapper
