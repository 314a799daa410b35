"""Parameter estimation from incomplete data.

Queries are the observed data; their proof trees are the hidden
completions.  The trainers here share one expectation engine over the
enumerated tree sets X(y):

* ``baum_estimate``: classic inside-outside style reestimation of
  stochastic clause weights (the baseline that renormalization beats);
* ``im_estimate``: iterative maximization for log-linear weights, with
  a closed-form update when every tree carries the same total property
  count and a per-coordinate Newton root otherwise;
* ``gain``/``select_property``/``combined_inference``: greedy property
  selection by the single-parameter gain bound;
* ``conditional_mle``: gradient ascent on the conditional (pseudo)
  likelihood of annotated gold trees;
* ``sparse_conditional``: n-best/viterbi/fixed-set surrogates for the
  conditional, pluggable into the IM steps.

All expectations run over X = the disjoint union of the X(y) with
p~(y) > 0, in corpus order then enumeration order, so runs are exactly
reproducible.  Log-likelihoods are token-level sums (each corpus count
contributes once per token).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

from .loglinear import LogLinearModel, Property, SCFGParams, log_sum_exp
from .program import CorpusEntry, Program
from .resolution import ProofTree, enumerate_proofs

PARAM_BOX = 20.0


class EstimationError(Exception):
    pass


class SelectionExhausted(Exception):
    """Raised when no candidate clears the gain threshold; a stopping
    signal, not a failure."""


@dataclass(frozen=True)
class Corpus:
    entries: tuple[CorpusEntry, ...]

    def __post_init__(self):
        if not self.entries:
            raise EstimationError("empty corpus")
        if any(e.count < 1 for e in self.entries):
            raise EstimationError("corpus counts must be positive")

    @property
    def size(self) -> int:
        return sum(e.count for e in self.entries)

    def ptilde(self, i: int) -> float:
        return self.entries[i].count / self.size


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    log_likelihood: float
    max_update: float
    wall: float
    box_hit: bool = False


@dataclass(frozen=True)
class TrainingState:
    model: LogLinearModel
    corpus: Corpus
    tree_sets: tuple[tuple[ProofTree, ...], ...]
    nu: tuple[tuple[tuple[int, ...], ...], ...]      # per entry, per tree
    nu_hash: tuple[tuple[int, ...], ...]
    log_base: tuple[tuple[float, ...], ...]
    log: tuple[IterationRecord, ...] = ()

    def with_model(self, model: LogLinearModel) -> "TrainingState":
        nu, nuh = _nu_tables(model, self.tree_sets)
        base = tuple(tuple(model.log_base(t) for t in ts) for ts in self.tree_sets)
        return replace(self, model=model, nu=nu, nu_hash=nuh, log_base=base)


def _nu_tables(model: LogLinearModel, tree_sets):
    nu = []
    nuh = []
    for ts in tree_sets:
        row = []
        hrow = []
        for t in ts:
            counts, h = model.nu_vector(t)
            row.append(counts)
            hrow.append(h)
        nu.append(tuple(row))
        nuh.append(tuple(hrow))
    return tuple(nu), tuple(nuh)


def build_state(program: Program, corpus: Corpus, model: LogLinearModel, depth_bound: int = 64) -> TrainingState:
    tree_sets = []
    for e in corpus.entries:
        res = enumerate_proofs(program, e.goal, depth_bound=depth_bound)
        if res.truncated:
            raise EstimationError(f"enumeration hit the depth bound for {e.goal.render()}")
        if not res.proofs:
            raise EstimationError(f"query has no proof trees: {e.goal.render()}")
        if e.gold is not None and not (0 <= e.gold < len(res.proofs)):
            raise EstimationError(f"gold index {e.gold} out of range for {e.goal.render()}")
        tree_sets.append(tuple(res.proofs))
    tree_sets = tuple(tree_sets)
    nu, nuh = _nu_tables(model, tree_sets)
    base = tuple(tuple(model.log_base(t) for t in ts) for ts in tree_sets)
    return TrainingState(model, corpus, tree_sets, nu, nuh, base)


# -- the expectation engine ------------------------------------------------


@dataclass(frozen=True)
class Distributions:
    log_z: float
    p: tuple[tuple[float, ...], ...]     # p_lambda(x) over the whole X
    g: tuple[float, ...]                 # per-entry marginal mass
    k: tuple[tuple[float, ...], ...]     # conditional within each entry


def _distributions(state: TrainingState, weights: Sequence[float] | None = None) -> Distributions:
    lam = state.model.weights if weights is None else tuple(weights)
    logw = []
    flat = []
    for ei, ts in enumerate(state.tree_sets):
        row = []
        for ti in range(len(ts)):
            lw = sum(l * c for l, c in zip(lam, state.nu[ei][ti])) + state.log_base[ei][ti]
            row.append(lw)
            flat.append(lw)
        logw.append(row)
    log_z = log_sum_exp(flat)
    p = tuple(tuple(math.exp(lw - log_z) for lw in row) for row in logw)
    g = tuple(math.fsum(row) for row in p)
    k = []
    for ei, row in enumerate(p):
        ge = g[ei]
        if ge <= 0.0:
            raise EstimationError(f"query has zero mass: {state.corpus.entries[ei].goal.render()}")
        k.append(tuple(v / ge for v in row))
    return Distributions(log_z, p, g, tuple(k))


def log_likelihood(state: TrainingState, weights: Sequence[float] | None = None) -> float:
    d = _distributions(state, weights)
    total = 0.0
    for ei, e in enumerate(state.corpus.entries):
        if d.g[ei] <= 0.0:
            raise EstimationError(f"query outside support: {e.goal.render()}")
        total += e.count * math.log(d.g[ei])
    return total


@dataclass(frozen=True)
class CountTables:
    S: tuple[dict[int, float], ...]          # value distribution of each property count
    T: tuple[tuple[float, ...], ...]         # conditional expectation per entry
    U: tuple[dict[int, float], ...]          # property mass at each total count
    ptilde_k_nu: tuple[float, ...]
    p_nu: tuple[float, ...]


def count_tables(state: TrainingState, d: Distributions | None = None, k_override=None) -> CountTables:
    """k_override, when given, maps entry index -> probability table and
    replaces the conditional in the empirical side (sparse E-steps)."""
    if d is None:
        d = _distributions(state)
    n_props = len(state.model.properties)
    S = [dict() for _ in range(n_props)]
    U = [dict() for _ in range(n_props)]
    T = []
    for ei, ts in enumerate(state.tree_sets):
        krow = d.k[ei] if k_override is None else k_override(ei)
        trow = []
        for i in range(n_props):
            trow.append(math.fsum(krow[ti] * state.nu[ei][ti][i] for ti in range(len(ts))))
        T.append(tuple(trow))
        for ti in range(len(ts)):
            px = d.p[ei][ti]
            m = state.nu_hash[ei][ti]
            for i in range(n_props):
                v = state.nu[ei][ti][i]
                S[i][v] = S[i].get(v, 0.0) + px
                if v:
                    U[i][m] = U[i].get(m, 0.0) + px * v
    ptkn = []
    pn = []
    for i in range(n_props):
        ptkn.append(math.fsum(state.corpus.ptilde(ei) * T[ei][i] for ei in range(len(T))))
        pn.append(math.fsum(v * mass for v, mass in sorted(S[i].items())))
    return CountTables(tuple(S), tuple(T), tuple(U), tuple(ptkn), tuple(pn))


def constant_nu_hash(state: TrainingState) -> int | None:
    values = {h for row in state.nu_hash for h in row}
    return values.pop() if len(values) == 1 else None


# -- IM updates ------------------------------------------------------------


def im_closed_form_step(state: TrainingState, tables: CountTables | None = None) -> list[float]:
    K = constant_nu_hash(state)
    if K is None:
        raise EstimationError("total property count varies over X; use the Newton step")
    if tables is None:
        tables = count_tables(state)
    gamma = []
    for t, s in zip(tables.ptilde_k_nu, tables.p_nu):
        if s <= 0.0:
            gamma.append(0.0)  # property never fires under the model: no information
        elif t <= 0.0:
            gamma.append(-PARAM_BOX)
        elif K == 0:
            gamma.append(0.0)
        else:
            gamma.append(math.log(t / s) / K)
    return gamma


def im_newton_step(state: TrainingState, tables: CountTables | None = None, inner_tol: float = 1e-12, inner_max: int = 100) -> list[float]:
    """Per-coordinate root of  ptilde[k[nu_i]] = sum_m U[i][m] e^{gamma m}."""
    if tables is None:
        tables = count_tables(state)
    gamma = []
    for i, t in enumerate(tables.ptilde_k_nu):
        um = sorted(tables.U[i].items())
        if not um or t <= 0.0:
            gamma.append(0.0 if not um else -PARAM_BOX)
            continue
        g = 0.0
        for _ in range(inner_max):
            f = t - math.fsum(u * math.exp(g * m) for m, u in um)
            fp = math.fsum(m * u * math.exp(g * m) for m, u in um)
            if fp <= 0.0:
                raise EstimationError(f"degenerate Newton slope for property {state.model.properties[i].name}")
            step = f / fp
            g += step
            if abs(step) < inner_tol:
                break
        else:
            raise EstimationError(
                f"inner Newton did not converge for property {state.model.properties[i].name}: last step {step:g}"
            )
        gamma.append(g)
    return gamma


def _clip_box(weights: Sequence[float]) -> tuple[tuple[float, ...], bool]:
    out = []
    hit = False
    for w in weights:
        c = max(-PARAM_BOX, min(PARAM_BOX, w))
        hit = hit or c != w
        out.append(c)
    return tuple(out), hit


def im_estimate(state: TrainingState, tol: float = 1e-6, max_iters: int = 10_000, k_override=None) -> TrainingState:
    """Iterate IM updates until both the likelihood change and the update
    vector fall below ``tol``.  The likelihood must never decrease by
    more than 1e-9 per accepted iteration; a larger decrease aborts."""
    const_K = constant_nu_hash(state) is not None
    records = list(state.log)
    lam = state.model.weights
    current = log_likelihood(state, lam)
    start = time.perf_counter()
    for it in range(1, max_iters + 1):
        d = _distributions(state, lam)
        tables = count_tables(state, d, k_override=k_override)
        if const_K:
            gamma = im_closed_form_step(state, tables)
        else:
            gamma = im_newton_step(state, tables)
        new_lam, box_hit = _clip_box([l + g for l, g in zip(lam, gamma)])
        new_l = log_likelihood(state, new_lam)
        if k_override is None and new_l < current - 1e-9:
            raise EstimationError(
                f"likelihood decreased at iteration {it}: {current!r} -> {new_l!r}; state dumped: lam={lam} gamma={gamma}"
            )
        max_g = max((abs(g) for g in gamma), default=0.0)
        records.append(IterationRecord(it, new_l, max_g, time.perf_counter() - start, box_hit))
        delta = abs(new_l - current)
        lam, current = new_lam, new_l
        if delta < tol and max_g < tol:
            break
    final = state.with_model(state.model.with_weights(lam))
    return replace(final, log=tuple(records))


def auxiliary_A(state: TrainingState, gamma: Sequence[float]) -> float:
    """Single-iteration lower bound on the likelihood change per token:
    A = 1 + ptilde[k[gamma.nu]] - p[sum_i nubar_i e^{gamma_i nu_hash}],
    with the inner term read as 1 on trees carrying no properties."""
    if len(gamma) != len(state.model.weights):
        raise EstimationError("gamma length mismatch")
    d = _distributions(state)
    emp = 0.0
    for ei, e in enumerate(state.corpus.entries):
        inner = math.fsum(
            d.k[ei][ti] * math.fsum(g * c for g, c in zip(gamma, state.nu[ei][ti]))
            for ti in range(len(state.tree_sets[ei]))
        )
        emp += state.corpus.ptilde(ei) * inner
    exp_term = 0.0
    for ei, ts in enumerate(state.tree_sets):
        for ti in range(len(ts)):
            m = state.nu_hash[ei][ti]
            if m == 0:
                val = 1.0
            else:
                val = math.fsum(
                    (c / m) * math.exp(g * m) for g, c in zip(gamma, state.nu[ei][ti])
                )
            exp_term += d.p[ei][ti] * val
    return 1.0 + emp - exp_term


# -- property selection ----------------------------------------------------


def _candidate_counts(state: TrainingState, prop: Property) -> tuple[tuple[int, ...], ...]:
    from .loglinear import property_count

    return tuple(tuple(property_count(prop, t) for t in ts) for ts in state.tree_sets)


def gain(state: TrainingState, prop: Property, inner_tol: float = 1e-12, inner_max: int = 200) -> tuple[float, float]:
    """Best single weight for the candidate on top of the frozen model,
    and the guaranteed likelihood gain at that weight."""
    counts = _candidate_counts(state, prop)
    if all(c == 0 for row in counts for c in row):
        return 0.0, 0.0
    d = _distributions(state)
    t_c = math.fsum(
        state.corpus.ptilde(ei)
        * math.fsum(d.k[ei][ti] * counts[ei][ti] for ti in range(len(state.tree_sets[ei])))
        for ei in range(len(state.tree_sets))
    )
    pairs = []  # (count value, model mass)
    for ei, ts in enumerate(state.tree_sets):
        for ti in range(len(ts)):
            pairs.append((counts[ei][ti], d.p[ei][ti]))
    alpha = 0.0
    for _ in range(inner_max):
        f = t_c - math.fsum(p * c * math.exp(alpha * c) for c, p in pairs)
        fp = -math.fsum(p * c * c * math.exp(alpha * c) for c, p in pairs)
        if fp >= 0.0:
            break
        step = f / -fp
        alpha -= f / fp
        if abs(alpha) > PARAM_BOX:
            alpha = math.copysign(PARAM_BOX, alpha)
            break
        if abs(step) < inner_tol:
            break
    g_val = 1.0 + alpha * t_c - math.fsum(p * math.exp(alpha * c) for c, p in pairs)
    if g_val < -1e-12:
        raise EstimationError(f"negative gain {g_val!r} for candidate {prop.name}")
    return alpha, max(g_val, 0.0)


def select_property(state: TrainingState, candidates: Sequence[Property], threshold: float = 0.0):
    """Argmax of gain; ties keep the earliest candidate.  Returns
    (index, candidate, alpha, gain)."""
    if not candidates:
        raise EstimationError("no candidates")
    best = None
    for idx, c in enumerate(candidates):
        a, g = gain(state, c)
        if best is None or g > best[3]:
            best = (idx, c, a, g)
    if best[3] <= threshold:
        raise SelectionExhausted(f"best gain {best[3]:g} at or below threshold {threshold:g}")
    return best


@dataclass(frozen=True)
class InferenceConfig:
    max_rounds: int = 32
    gain_threshold: float = 1e-6
    tol: float = 1e-6
    max_iters: int = 10_000
    held_out: Corpus | None = None


@dataclass(frozen=True)
class RoundRecord:
    round: int
    property_name: str
    alpha: float
    gain: float
    log_likelihood: float
    held_out: float | None


def combined_inference(
    program: Program,
    corpus: Corpus,
    base_model: LogLinearModel,
    candidates: Sequence[Property],
    config: InferenceConfig = InferenceConfig(),
    depth_bound: int = 64,
) -> tuple[TrainingState, list[RoundRecord]]:
    """Alternate property selection and weight reestimation until the
    candidates are exhausted, the gain threshold stops selection, or the
    held-out likelihood turns down."""
    state = build_state(program, corpus, base_model, depth_bound)
    held_state = (
        build_state(program, config.held_out, base_model, depth_bound)
        if config.held_out is not None
        else None
    )
    pool = list(candidates)
    audit: list[RoundRecord] = []
    prev_held = log_likelihood(held_state) if held_state is not None else None
    for rnd in range(1, config.max_rounds + 1):
        if not pool:
            break
        try:
            idx, chosen, alpha, g = select_property(state, pool, config.gain_threshold)
        except SelectionExhausted:
            break
        pool.pop(idx)
        extended = state.model.extend(chosen, alpha)
        state = state.with_model(extended)
        state = im_estimate(state, tol=config.tol, max_iters=config.max_iters)
        cur_l = log_likelihood(state)
        held_l = None
        if held_state is not None:
            held_state = held_state.with_model(state.model)
            held_l = log_likelihood(held_state)
        audit.append(RoundRecord(rnd, chosen.name, alpha, g, cur_l, held_l))
        if held_l is not None and prev_held is not None and held_l < prev_held:
            # roll back the overfitting round and stop
            dropped = state.model
            reverted = LogLinearModel(
                dropped.signature, dropped.properties[:-1], dropped.weights[:-1], dropped.p0
            )
            state = state.with_model(reverted)
            break
        prev_held = held_l
    return state, audit


# -- conditional estimation ------------------------------------------------


def _require_gold(state: TrainingState):
    for e in state.corpus.entries:
        if e.gold is None:
            raise EstimationError(f"entry lacks a gold tree index: {e.goal.render()}")


def conditional_pseudo_likelihood(state: TrainingState, weights: Sequence[float] | None = None, k_tables=None) -> float:
    _require_gold(state)
    d = _distributions(state, weights)
    total = 0.0
    for ei, e in enumerate(state.corpus.entries):
        krow = d.k[ei] if k_tables is None else k_tables[ei]
        kg = krow[e.gold]
        if kg <= 0.0:
            raise EstimationError(f"gold tree outside support for {e.goal.render()}")
        total += e.count * math.log(kg)
    return total


@dataclass(frozen=True)
class CMLEResult:
    state: TrainingState
    iterations: int
    objective: float
    gradient_norm: float
    box_hit: bool


def conditional_mle(
    state: TrainingState,
    tol: float = 1e-6,
    max_iters: int = 1000,
    sparse: tuple | None = None,
) -> CMLEResult:
    """Backtracking gradient ascent on the conditional log-likelihood of
    the gold trees.  ``sparse`` restricts every conditional to the
    surrogate support (see sparse_conditional)."""
    _require_gold(state)
    lam = state.model.weights
    n = len(lam)
    box_hit = False

    def k_tables(weights):
        if sparse is None:
            return _distributions(state, weights).k
        return tuple(
            sparse_conditional(state, ei, sparse, weights) for ei in range(len(state.tree_sets))
        )

    def objective(weights):
        ks = k_tables(weights)
        total = 0.0
        for ei, e in enumerate(state.corpus.entries):
            kg = ks[ei][e.gold]
            if kg <= 0.0:
                raise EstimationError(f"gold tree outside sparse support for {e.goal.render()}")
            total += e.count * math.log(kg)
        return total

    current = objective(lam)
    it = 0
    grad_norm = math.inf
    step = 1.0
    while it < max_iters:
        it += 1
        ks = k_tables(lam)
        grad = [0.0] * n
        for ei, e in enumerate(state.corpus.entries):
            gold_nu = state.nu[ei][e.gold]
            exp_nu = [
                math.fsum(ks[ei][ti] * state.nu[ei][ti][i] for ti in range(len(state.tree_sets[ei])))
                for i in range(n)
            ]
            for i in range(n):
                grad[i] += e.count * (gold_nu[i] - exp_nu[i])
        grad_norm = max((abs(g) for g in grad), default=0.0)
        if grad_norm < tol:
            break
        accepted = False
        while step >= 1e-12:
            trial, hit = _clip_box([l + step * g for l, g in zip(lam, grad)])
            if trial == tuple(lam):
                break  # pinned to the box in every moving coordinate
            val = objective(trial)
            if val >= current - 1e-12:
                lam, current = trial, val
                box_hit = box_hit or hit
                accepted = True
                step = min(step * 2.0, 1024.0)
                break
            step *= 0.5
        if not accepted:
            break
    final = state.with_model(state.model.with_weights(lam))
    return CMLEResult(final, it, current, grad_norm, box_hit)


# -- sparse conditionals ---------------------------------------------------


def sparse_conditional(
    state: TrainingState, entry_index: int, mode: tuple, weights: Sequence[float] | None = None
) -> tuple[float, ...]:
    """Probability table over X(y) that is zero outside the surrogate
    set S(y) and renormalized inside it.

    mode = ("n_best", N) | ("viterbi",) | ("fixed_set", indices)
    """
    lam = state.model.weights if weights is None else tuple(weights)
    ts = state.tree_sets[entry_index]
    logw = [
        sum(l * c for l, c in zip(lam, state.nu[entry_index][ti])) + state.log_base[entry_index][ti]
        for ti in range(len(ts))
    ]
    kind = mode[0]
    if kind == "viterbi":
        chosen = [max(range(len(ts)), key=lambda ti: (logw[ti], -ti))]
    elif kind == "n_best":
        n = mode[1]
        if n < 1:
            raise EstimationError("n_best needs N >= 1")
        ranked = sorted(range(len(ts)), key=lambda ti: (-logw[ti], ti))
        chosen = sorted(ranked[:n])
    elif kind == "fixed_set":
        chosen = sorted(set(mode[1]))
        if not chosen or any(not 0 <= i < len(ts) for i in chosen):
            raise EstimationError("fixed_set indices out of range")
    else:
        raise EstimationError(f"unknown sparse mode {kind!r}")
    lz = log_sum_exp([logw[i] for i in chosen])
    table = [0.0] * len(ts)
    for i in chosen:
        table[i] = math.exp(logw[i] - lz)
    return tuple(table)


# -- evaluation ------------------------------------------------------------


def evaluate(state: TrainingState, tie_tol: float = 1e-12) -> tuple[float, float]:
    """Accuracy with 1/k credit for k-way ties at the top, and the
    negative conditional log-likelihood of the gold trees."""
    _require_gold(state)
    d = _distributions(state)
    credit = 0.0
    neg_pl = 0.0
    for ei, e in enumerate(state.corpus.entries):
        krow = d.k[ei]
        top = max(krow)
        argmax = [ti for ti, v in enumerate(krow) if v >= top - tie_tol]
        if e.gold in argmax:
            credit += e.count / len(argmax)
        kg = krow[e.gold]
        if kg <= 0.0:
            raise EstimationError(f"gold tree outside support for {e.goal.render()}")
        neg_pl -= e.count * math.log(kg)
    c_test = 100.0 * credit / state.corpus.size
    return c_test, neg_pl


# -- the stochastic-branching baseline ------------------------------------


def baum_estimate(
    program: Program,
    corpus: Corpus,
    tree_sets: Sequence[Sequence[ProofTree]],
    iterations: int = 1,
    start: SCFGParams | None = None,
    eps: float = 1e-6,
) -> tuple[SCFGParams, list[str]]:
    """Expected-count reestimation of per-clause choice weights.

    Each iteration computes expected clause-use counts under the current
    conditional and renormalizes within every head relation's clause
    group.  Groups containing a zero expected count get add-eps
    smoothing (with a warning); fully observed groups stay exact.
    """
    groups: dict[str, list[str]] = {}
    for c in program.clauses:
        groups.setdefault(c.head.relation, []).append(c.id)
    if start is None:
        pi = {c.id: 1.0 / len(groups[c.head.relation]) for c in program.clauses}
    else:
        pi = dict(start.pi)
    traces = [[t.clause_trace for t in ts] for ts in tree_sets]
    warnings: list[str] = []
    for _ in range(max(iterations, 1)):
        params = SCFGParams(pi)
        counts = {cid: 0.0 for cid in pi}
        for ei, e in enumerate(corpus.entries):
            logs = [params.log_prob(tree) for tree in tree_sets[ei]]
            lz = log_sum_exp(logs)
            for ti, trace in enumerate(traces[ei]):
                w = e.count * math.exp(logs[ti] - lz)
                for cid in trace:
                    counts[cid] += w
        new_pi = {}
        for rel, ids in groups.items():
            total = math.fsum(counts[cid] for cid in ids)
            if any(counts[cid] == 0.0 for cid in ids):
                warnings.append(f"zero expected count in relation {rel}; add-{eps:g} smoothing applied")
                total = total + eps * len(ids)
                for cid in ids:
                    new_pi[cid] = (counts[cid] + eps) / total
            else:
                for cid in ids:
                    new_pi[cid] = counts[cid] / total
        pi = new_pi
    return SCFGParams(pi), warnings
