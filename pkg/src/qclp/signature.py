"""Type signatures for the typed-feature constraint language.

A signature fixes a finite type hierarchy (a join semilattice with a
single most-general type), a set of features, and an appropriateness
function assigning value types to features on minimal types.  Everything
downstream (constraint solving, grammar parsing, chart search) consults
the signature through the precomputed meet/join tables built here.
"""

from __future__ import annotations

from dataclasses import dataclass, field


class SignatureError(Exception):
    """Raised for ill-formed signature files or hierarchy violations."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass
class Signature:
    """A type hierarchy with appropriateness conditions.

    ``parents`` maps each type to its declared parents (subtype -> supertype
    edges).  ``approp`` maps ``(minimal_type, feature)`` to the feature's
    value type.  The constructor validates the hierarchy and precomputes
    the meet and join tables plus the feature-introduction map, so lookups
    during solving are dictionary reads.
    """

    parents: dict[str, set[str]]
    approp: dict[tuple[str, str], str]

    root: str = field(init=False)
    types: frozenset[str] = field(init=False)
    features: frozenset[str] = field(init=False)
    minimal_types: frozenset[str] = field(init=False)

    def __post_init__(self):
        self.types = frozenset(self.parents)
        for t, ps in self.parents.items():
            for p in ps:
                if p not in self.types:
                    raise SignatureError(f"parent type {p!r} of {t!r} is not declared")

        roots = sorted(t for t, ps in self.parents.items() if not ps)
        if len(roots) != 1:
            raise SignatureError(
                f"hierarchy must have exactly one most-general type, found {roots or 'none'}"
            )
        self.root = roots[0]

        # ancestor sets (reflexive); cycle detection comes for free
        self._ancestors: dict[str, frozenset[str]] = {}
        for t in self.types:
            seen: set[str] = set()
            stack = [t]
            while stack:
                u = stack.pop()
                if u in seen:
                    continue
                seen.add(u)
                stack.extend(self.parents[u])
            if self.root not in seen:
                raise SignatureError(f"type {t!r} is not connected to {self.root!r}")
            self._ancestors[t] = frozenset(seen)
        for t in self.types:
            if any(t in self._ancestors[p] and p != t for p in self.parents[t]):
                raise SignatureError(f"cycle through type {t!r}")

        children: dict[str, set[str]] = {t: set() for t in self.types}
        for t, ps in self.parents.items():
            for p in ps:
                children[p].add(t)
        self._children = children
        self.minimal_types = frozenset(t for t in self.types if not children[t])

        self._descendants: dict[str, frozenset[str]] = {
            t: frozenset(u for u in self.types if t in self._ancestors[u]) for t in self.types
        }

        # Meet table: unique maximal common descendant, or None for
        # inconsistency.  Conjunction-only solving branches on nothing,
        # so an ambiguous meet makes the signature unusable here.
        self._meet: dict[tuple[str, str], str | None] = {}
        order = sorted(self.types)
        for s in order:
            for t in order:
                common = self._descendants[s] & self._descendants[t]
                # greatest lower bound: the common descendant nothing else in
                # the common set sits strictly above
                maximal = [u for u in common if not any(v != u and v in self._ancestors[u] for v in common)]
                if not common:
                    self._meet[(s, t)] = None
                elif len(maximal) == 1:
                    self._meet[(s, t)] = maximal[0]
                else:
                    raise SignatureError(
                        f"meet of {s!r} and {t!r} is ambiguous ({sorted(maximal)}); "
                        "the hierarchy must be a meet semilattice wherever types are compatible"
                    )

        self._join: dict[tuple[str, str], str] = {}
        for s in order:
            for t in order:
                common = self._ancestors[s] & self._ancestors[t]
                # least upper bound: the common ancestor with no common
                # ancestor strictly below it
                minimal = [u for u in common if not any(v != u and u in self._ancestors[v] for v in common)]
                if len(minimal) != 1:
                    raise SignatureError(
                        f"join of {s!r} and {t!r} is ambiguous ({sorted(minimal)})"
                    )
                self._join[(s, t)] = minimal[0]

        for (m, f), v in self.approp.items():
            if m not in self.types:
                raise SignatureError(f"appropriateness declared on unknown type {m!r}")
            if m not in self.minimal_types:
                raise SignatureError(f"appropriateness must be declared on minimal types, not {m!r}")
            if v not in self.types:
                raise SignatureError(f"appropriateness value type {v!r} is not declared")
        self.features = frozenset(f for (_, f) in self.approp)

        # Intro(f): join of the minimal types on which f is appropriate.
        # A class carrying f can never denote anything outside Intro(f)'s cone.
        self._intro: dict[str, str] = {}
        for f in self.features:
            bearers = sorted(m for (m, g) in self.approp if g == f)
            acc = bearers[0]
            for m in bearers[1:]:
                acc = self._join[(acc, m)]
            self._intro[f] = acc

    # -- lookups ---------------------------------------------------------

    def is_type(self, name: str) -> bool:
        return name in self.types

    def subsumes(self, general: str, specific: str) -> bool:
        """True when ``specific`` lies at or below ``general``."""
        return general in self._ancestors[specific]

    def meet(self, s: str, t: str) -> str | None:
        """Greatest common subtype, or None when s and t are incompatible."""
        return self._meet[(s, t)]

    def join(self, s: str, t: str) -> str:
        return self._join[(s, t)]

    def intro(self, feature: str) -> str:
        """The most general type on which ``feature`` can appear."""
        if feature not in self._intro:
            raise SignatureError(f"unknown feature {feature!r}")
        return self._intro[feature]

    def approp_value(self, minimal_type: str, feature: str) -> str | None:
        return self.approp.get((minimal_type, feature))

    def features_of(self, minimal_type: str) -> list[str]:
        return sorted(f for (m, f) in self.approp if m == minimal_type)

    def render(self) -> str:
        """Signature file text that parses back to an equal signature."""
        lines = []
        for parent in sorted(self.types):
            kids = sorted(self._children[parent])
            if kids:
                lines.append(f"type {' '.join(kids)} < {parent}")
        for (m, f), v in sorted(self.approp.items()):
            lines.append(f"approp {m} {f} {v}")
        return "\n".join(lines) + "\n"


def parse_signature(text: str) -> Signature:
    """Parse the line-oriented signature format.

    ``type child1 child2 ... < parent`` declares subtypes; the one parent
    never appearing as a child is the most general type.  ``approp
    minimalType feature valueType`` declares appropriateness.  ``#``
    starts a comment.  Errors carry 1-based line numbers.
    """
    parents: dict[str, set[str]] = {}
    approp: dict[tuple[str, str], str] = {}

    def ensure(t: str):
        parents.setdefault(t, set())

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if tokens[0] == "type":
            if "<" not in tokens:
                raise SignatureError("type line needs '< parent'", lineno)
            sep = tokens.index("<")
            kids = tokens[1:sep]
            rest = tokens[sep + 1 :]
            if not kids or len(rest) != 1:
                raise SignatureError("expected 'type child... < parent'", lineno)
            parent = rest[0]
            ensure(parent)
            for kid in kids:
                ensure(kid)
                parents[kid].add(parent)
        elif tokens[0] == "approp":
            if len(tokens) != 4:
                raise SignatureError("expected 'approp minimalType feature valueType'", lineno)
            _, m, f, v = tokens
            if (m, f) in approp and approp[(m, f)] != v:
                raise SignatureError(f"conflicting appropriateness for {m}.{f}", lineno)
            approp[(m, f)] = v
        else:
            raise SignatureError(f"unknown directive {tokens[0]!r}", lineno)

    try:
        return Signature(parents=parents, approp=approp)
    except SignatureError as exc:
        if exc.line is None:
            raise SignatureError(str(exc)) from None
        raise


def load_signature(path: str) -> Signature:
    with open(path, encoding="utf-8") as fh:
        return parse_signature(fh.read())
