"""Shared bundle loaders and a deterministic random-instance generator
for the property suites."""

from __future__ import annotations

import random
from pathlib import Path

from qclp.estimation import Corpus, TrainingState, build_state
from qclp.loglinear import LogLinearModel, parse_properties
from qclp.program import (
    Program,
    load_program,
    load_query,
    parse_corpus,
    parse_program,
    parse_query,
)
from qclp.resolution import enumerate_proofs
from qclp.signature import load_signature, parse_signature

GRAMMARS = Path(__file__).resolve().parent.parent / "grammars"


def load_bundle(name: str, grammar: str = "program.clg"):
    sig = load_signature(str(GRAMMARS / name / "signature.sig"))
    prog = load_program(sig, str(GRAMMARS / name / grammar))
    return sig, prog


def bundle_query(name: str, sig, query: str = "query.q"):
    return load_query(sig, str(GRAMMARS / name / query))


def im_bundle_state(weights=(0.0, 0.0)) -> TrainingState:
    sig, prog = load_bundle("im")
    props = tuple(parse_properties(sig, (GRAMMARS / "im" / "properties.txt").read_text()))
    corpus = Corpus(tuple(parse_corpus(sig, (GRAMMARS / "im" / "corpus.txt").read_text())))
    model = LogLinearModel(sig, props, tuple(weights))
    return build_state(prog, corpus, model)


def one_im_step(state: TrainingState):
    """One iterative-maximization update (closed form when the total
    property count is constant over X, Newton otherwise), unclipped."""
    from qclp.estimation import (
        constant_nu_hash,
        count_tables,
        im_closed_form_step,
        im_newton_step,
    )

    tables = count_tables(state)
    if constant_nu_hash(state) is None:
        gamma = im_newton_step(state, tables)
    else:
        gamma = im_closed_form_step(state, tables)
    new_weights = [l + g for l, g in zip(state.model.weights, gamma)]
    return gamma, state.with_model(state.model.with_weights(new_weights))


def manual_im(state: TrainingState, iterations: int):
    """Log-likelihood before/after each update plus the weight iterates."""
    from qclp.estimation import log_likelihood

    ls = [log_likelihood(state)]
    lams = []
    for _ in range(iterations):
        _, state = one_im_step(state)
        ls.append(log_likelihood(state))
        lams.append(state.model.weights)
    return state, ls, lams


def random_instance(seed: int, with_gold: bool = False) -> TrainingState:
    """A small layered program, a corpus whose every entry has at least
    one proof, and a model with 1..6 distinct properties.  Deterministic
    in the seed; instances that come out degenerate are reseeded."""
    return random_program_instance(seed, with_gold)[1]


def random_program_instance(
    seed: int, with_gold: bool = False
) -> tuple[Program, TrainingState]:
    """random_instance together with the generating program (the training
    state itself keeps only the enumerated trees)."""
    for attempt in range(50):
        got = _try_instance(random.Random(seed * 1009 + attempt), with_gold)
        if got is not None:
            return got
    raise AssertionError(f"no viable random instance for seed {seed}")


def _try_instance(rng: random.Random, with_gold: bool) -> tuple[Program, TrainingState] | None:
    sig = parse_signature("type a b < e")
    lines: list[str] = []
    cid = 0
    terms = ["p", "q"][: rng.randint(1, 2)]
    for t in terms:
        for _ in range(rng.randint(1, 2)):
            cid += 1
            cons = rng.choice(["{Z=a}", "{Z=b}", ""])
            lines.append(f"{cid} {t}(Z){' :- ' + cons if cons else ''}.")
    mids: list[str] = []
    if rng.random() < 0.5:
        mids = ["m"]
        for _ in range(rng.randint(1, 2)):
            cid += 1
            body = " & ".join(f"{rng.choice(terms)}(Z)" for _ in range(rng.randint(1, 2)))
            lines.append(f"{cid} m(Z) :- {body}.")
    for _ in range(rng.randint(1, 2)):
        cid += 1
        pool = terms + mids
        body = " & ".join(f"{rng.choice(pool)}(Z)" for _ in range(rng.randint(1, 2)))
        lines.append(f"{cid} s(Z) :- {body}.")
    if cid > 8:
        return None
    prog = parse_program(sig, "\n".join(lines) + "\n")

    corpus_lines: list[str] = []
    for cons in ("{Z=a}", "{Z=b}", "{Z=e}"):
        goal = parse_query(sig, f"s(Z) & {cons}.")
        res = enumerate_proofs(prog, goal, 32)
        if res.truncated or not res.proofs:
            continue
        line = f"{rng.randint(1, 4)} s(Z) & {cons}."
        if with_gold:
            line += f" @ {rng.randrange(len(res.proofs))}"
        corpus_lines.append(line)
    if not corpus_lines:
        return None
    corpus = Corpus(tuple(parse_corpus(sig, "\n".join(corpus_lines) + "\n")))

    pool = [f"c{c.id} clause {c.id}" for c in prog.clauses]
    pool += ["ta terminal {V=a}", "tb terminal {V=b}"]
    pool += [f"n{t} node {t}(V) & {{V=a}}" for t in terms]
    rng.shuffle(pool)
    chosen = pool[: rng.randint(1, min(6, len(pool)))]
    props = tuple(parse_properties(sig, "\n".join(chosen) + "\n"))
    weights = tuple(rng.uniform(-0.5, 0.5) for _ in props)
    model = LogLinearModel(sig, props, weights)
    return prog, build_state(prog, corpus, model, depth_bound=32)
