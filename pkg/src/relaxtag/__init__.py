"""Weighted-constraint disambiguation of token sequences.

Candidate readings per word are scored by iterative relaxation against
a constraint model that may mix statistical n-grams, decision-tree
learned rules and hand-written weighted Constraint Grammar rules.
"""

from .corpus import (
    AmbiguityClass,
    Corpus,
    HmmSpec,
    Lexicon,
    Reading,
    Sentence,
    Token,
    ambiguity_classes,
    build_lexicon,
    parse_tagged_corpus,
    sample_synthetic_corpus,
    serialize_corpus,
)
from .grammar import (
    Condition,
    Constraint,
    ConstraintKind,
    FeaturePattern,
    Grammar,
    MatchResult,
    desugar_strict,
    match_constraint,
    parse_grammar,
    serialize_grammar,
)
from .engine import (
    Labelling,
    RelaxParams,
    SequenceModel,
    SupportFn,
    UpdateFn,
    UpdateKind,
    decode,
    init_labelling,
    relax,
)
from .stats import CompatibilityMeasure, EventCounts, SmoothingSpec, compatibility

__version__ = "0.1.0"

__all__ = [
    "AmbiguityClass",
    "CompatibilityMeasure",
    "Condition",
    "Constraint",
    "ConstraintKind",
    "Corpus",
    "EventCounts",
    "FeaturePattern",
    "Grammar",
    "HmmSpec",
    "Labelling",
    "Lexicon",
    "MatchResult",
    "Reading",
    "RelaxParams",
    "Sentence",
    "SequenceModel",
    "SmoothingSpec",
    "SupportFn",
    "Token",
    "UpdateFn",
    "UpdateKind",
    "ambiguity_classes",
    "build_lexicon",
    "compatibility",
    "decode",
    "desugar_strict",
    "init_labelling",
    "match_constraint",
    "parse_grammar",
    "parse_tagged_corpus",
    "relax",
    "sample_synthetic_corpus",
    "serialize_corpus",
    "serialize_grammar",
]
