"""Metropolis-Hastings sampling of proof trees.

The proposal draws complete derivations top-down from stochastic clause
weights, rejecting any attempt that runs into an unsatisfiable
constraint; that restricts the proposal to the query's tree set while
keeping it proportional to the clause-weight product.  With the
target's base distribution equal to the nominating weights, the
acceptance ratio collapses to exp(lambda.nu(z) - lambda.nu(x)), so no
normalization constants are ever computed.

Chains are independent-proposal chains: every step draws a fresh
candidate.  Fixed seeds make runs bit-reproducible (random.Random is
specified to behave identically across platforms).
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

from .estimation import Corpus, CountTables
from .loglinear import LogLinearModel, SCFGParams
from .program import Goal, Program
from .resolution import NOT_APPLICABLE, ProofTree, SpineNode, _initial_state, reduce


class SamplerError(Exception):
    pass


@dataclass(frozen=True)
class SamplerConfig:
    steps: int
    seed: int
    nominator: SCFGParams
    model: LogLinearModel
    burn_in: int | None = None  # None: 10% of steps
    rejection_budget: int = 10_000
    depth_bound: int = 100

    def __post_init__(self):
        if self.steps < 1:
            raise SamplerError("need at least one step")
        if self.burn_in is not None and not 0 <= self.burn_in < self.steps:
            raise SamplerError("burn-in must be shorter than the chain")

    @property
    def effective_burn_in(self) -> int:
        return self.steps // 10 if self.burn_in is None else self.burn_in


def nominate(program: Program, pi: SCFGParams, goal: Goal, rng: random.Random,
             budget: int = 10_000, depth_bound: int = 100) -> tuple[ProofTree, float]:
    """Draw one tree; returns it with its raw clause-weight product.

    Each clause choice is drawn among the selected atom's alternatives
    with probability proportional to its weight; a failed constraint
    rejects the whole attempt and a fresh one starts.
    """
    solved0, names = _initial_state(program, goal)
    if not solved0.sat:
        raise SamplerError(f"query is unsatisfiable: {goal.render()}")
    query_vars = goal.variables()
    root = SpineNode(None, goal.atoms, goal.constraint, solved0)
    attempts = 0
    while attempts < budget:
        attempts += 1
        spine = [root]
        log_p = 0.0
        depth = 0
        failed = False
        while spine[-1].atoms:
            if depth >= depth_bound:
                failed = True
                break
            state = spine[-1]
            options = program.clauses_for(state.atoms[0].relation)
            weights = []
            for c in options:
                w = pi.pi.get(c.id)
                if w is None or w <= 0.0:
                    raise SamplerError(f"nominator has no positive weight for clause {c.id}")
                weights.append(w)
            total = math.fsum(weights)
            u = rng.random() * total
            acc = 0.0
            chosen = options[-1]
            chosen_w = weights[-1]
            for c, w in zip(options, weights):
                acc += w
                if u < acc:
                    chosen, chosen_w = c, w
                    break
            step = reduce(program, state.atoms, state.solved, chosen, names)
            if step is NOT_APPLICABLE or step is None:
                failed = True
                break
            new_atoms, raw, new_solved = step
            spine.append(SpineNode(chosen.id, new_atoms, raw, new_solved))
            log_p += math.log(chosen_w)
            depth += 1
        if failed:
            continue
        answer = spine[-1].solved.restrict(query_vars)
        tree = ProofTree(tuple(spine), answer, tuple(n.clause_id for n in spine if n.clause_id is not None))
        return tree, math.exp(log_p)
    raise SamplerError(f"rejection budget {budget} exhausted for query {goal.render()}")


@dataclass(frozen=True)
class ChainResult:
    samples: tuple[ProofTree, ...]
    acceptance_rate: float
    steps: int
    burn_in: int


def mh_chain(cfg: SamplerConfig, program: Program, goal: Goal) -> ChainResult:
    rng = random.Random(cfg.seed)
    model = cfg.model
    nu_cache: dict[tuple[str, ...], float] = {}

    def score(tree: ProofTree) -> float:
        key = tree.clause_trace
        if key not in nu_cache:
            counts, _ = model.nu_vector(tree)
            nu_cache[key] = sum(l * c for l, c in zip(model.weights, counts))
        return nu_cache[key]

    current, _ = nominate(program, cfg.nominator, goal, rng, cfg.rejection_budget, cfg.depth_bound)
    accepted = 0
    kept: list[ProofTree] = []
    burn = cfg.effective_burn_in
    for i in range(1, cfg.steps + 1):
        proposal, _ = nominate(program, cfg.nominator, goal, rng, cfg.rejection_budget, cfg.depth_bound)
        if proposal.clause_trace == current.clause_trace:
            # proposing the current state leaves the chain in place
            accepted += 1
        else:
            alpha = min(1.0, math.exp(score(proposal) - score(current)))
            if rng.random() < alpha:
                current = proposal
                accepted += 1
        if i > burn:
            kept.append(current)
    return ChainResult(tuple(kept), accepted / cfg.steps, cfg.steps, burn)


def sample_expectations(model: LogLinearModel, corpus: Corpus,
                        samples: list[list[ProofTree]]) -> CountTables:
    """Empirical count tables from per-query samples, plug-compatible
    with the exact estimation steps.

    The per-query side weights each query by its corpus count over N;
    the model side pools all samples uniformly (combined size L).  With
    the sample equal to the full enumeration and a uniform model, the
    tables coincide with the exact ones, which fixes the N/L scaling.
    """
    if len(samples) != len(corpus.entries):
        raise SamplerError("one sample set per corpus entry required")
    if any(not s for s in samples):
        raise SamplerError("empty sample for some query")
    n_props = len(model.properties)
    L = sum(len(s) for s in samples)
    S = [dict() for _ in range(n_props)]
    U = [dict() for _ in range(n_props)]
    T = []
    nu_cache: dict[tuple[str, ...], tuple[tuple[int, ...], int]] = {}

    def nu_of(tree: ProofTree):
        key = tree.clause_trace
        if key not in nu_cache:
            nu_cache[key] = model.nu_vector(tree)
        return nu_cache[key]

    for sample in samples:
        m_y = len(sample)
        sums = [0.0] * n_props
        for tree in sample:
            counts, h = nu_of(tree)
            for i in range(n_props):
                v = counts[i]
                sums[i] += v
                S[i][v] = S[i].get(v, 0.0) + 1.0 / L
                if v:
                    U[i][h] = U[i].get(h, 0.0) + v / L
        T.append(tuple(s / m_y for s in sums))
    ptkn = tuple(
        math.fsum(corpus.ptilde(ei) * T[ei][i] for ei in range(len(T)))
        for i in range(n_props)
    )
    pn = tuple(
        math.fsum(v * mass for v, mass in sorted(S[i].items()))
        for i in range(n_props)
    )
    return CountTables(tuple(S), tuple(T), tuple(U), ptkn, pn)
