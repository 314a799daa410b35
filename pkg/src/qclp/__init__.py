"""Quantitative constraint logic programming over typed-feature terms.

The package covers the pipeline from grammars to trained models:
resolution and proof enumeration, min/max inference with pruning,
chart-based parsing and best-parse search, and log-linear parameter
estimation from incomplete data.
"""

from .signature import Signature, SignatureError, load_signature, parse_signature
from .constraints import ArcC, EqC, SolvedForm, TypeC, conjoin, solve
from .program import (
    Atom,
    Clause,
    CorpusEntry,
    Goal,
    Program,
    ProgramError,
    load_corpus,
    load_program,
    load_query,
    load_weights,
    parse_corpus,
    parse_program,
    parse_query,
    parse_weights,
    wrap_query,
)

__all__ = [
    "ArcC",
    "Atom",
    "Clause",
    "CorpusEntry",
    "EqC",
    "Goal",
    "Program",
    "ProgramError",
    "Signature",
    "SignatureError",
    "SolvedForm",
    "TypeC",
    "conjoin",
    "load_corpus",
    "load_program",
    "load_query",
    "load_signature",
    "load_weights",
    "parse_corpus",
    "parse_program",
    "parse_query",
    "parse_signature",
    "parse_weights",
    "solve",
    "wrap_query",
]

__version__ = "0.1.0"
