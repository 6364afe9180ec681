"""N-gram collection and translation into weighted context constraints.

Bigram (X,Y) counts become two mirrored constraints (one per focus
position), trigram (X,Y,Z) counts become three; each carries the
compatibility of the focus tag with the exact context tags at the
stated offsets.  Hand-written rules with a ``?`` weight get their value
estimated from corpus counts the same way, and bigram/trigram models
can be merged in a back-off hierarchy: trigrams when attested at least
k times, bigrams for everything not covered.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

from .corpus import BOUNDARY, Corpus, Token
from .grammar import (
    Condition,
    Constraint,
    ConstraintKind,
    FeaturePattern,
    Grammar,
    evaluate_context,
    target_matches,
)
from .stats import CompatibilityMeasure, DegenerateDistribution, EventCounts, SmoothingSpec


class MissingFeature(ValueError):
    def __init__(self, token: Token, feature: str):
        self.token = token
        self.feature = feature
        super().__init__(f"token {token.wordform!r} lacks feature {feature!r}")


class NeverMatched(UserWarning):
    """A hand rule's context never occurred in the weighting corpus."""


@dataclass(frozen=True)
class NGramTable:
    """Window counts over boundary-padded tag sequences."""

    order: int
    counts: dict[tuple[str, ...], int]
    unigram: dict[str, int]
    total_tokens: int

    def __post_init__(self):
        if self.order not in (2, 3):
            raise ValueError("order must be 2 or 3")
        if self.total_tokens <= 0:
            raise ValueError("total_tokens must be positive")

    @property
    def total_windows(self) -> int:
        return sum(self.counts.values())

    def margin(self, slots: tuple[int, ...]) -> dict[tuple[str, ...], int]:
        """Counts marginalized onto the given window slots."""
        out: dict[tuple[str, ...], int] = {}
        for window, count in self.counts.items():
            key = tuple(window[s] for s in slots)
            out[key] = out.get(key, 0) + count
        return out


@dataclass(frozen=True)
class BackoffSpec:
    """Trigrams seen at least k times are trusted; otherwise back off."""

    k: int = 1

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")


def collect_ngrams(corpus: Corpus, order: int, feature: str = "pos") -> NGramTable:
    """Count n-gram windows of a feature, padded with ``<<<`` at both ends."""
    if order not in (2, 3):
        raise ValueError("order must be 2 or 3")
    counts: dict[tuple[str, ...], int] = {}
    unigram: dict[str, int] = {}
    for sentence in corpus:
        seq = [BOUNDARY]
        for token in sentence:
            value = token.gold.get(feature) if token.gold else None
            if value is None:
                raise MissingFeature(token, feature)
            seq.append(value)
        seq.append(BOUNDARY)
        for tag in seq:
            unigram[tag] = unigram.get(tag, 0) + 1
        for i in range(len(seq) - order + 1):
            window = tuple(seq[i : i + order])
            counts[window] = counts.get(window, 0) + 1
    return NGramTable(order, counts, unigram, corpus.n_tokens)


def _weighted(target: str, conditions, weight: float) -> Constraint:
    return Constraint(
        ConstraintKind.WEIGHTED,
        FeaturePattern.tag(target),
        tuple(Condition(offset, FeaturePattern.tag(tag)) for offset, tag in conditions),
        weight,
    )


def _comp(n_h, n_e, n_he, total, measure, smoothing, log_base):
    from .stats import compatibility

    return compatibility(EventCounts(n_h, n_e, n_he, total), measure, smoothing, log_base)


def acquire_ngram_grammar(
    table: NGramTable,
    measure: CompatibilityMeasure = CompatibilityMeasure.MUTUAL_INFO,
    smoothing: SmoothingSpec | None = None,
    log_base: float = 2.0,
) -> Grammar:
    """Translate an n-gram table into mirrored weighted constraints.

    Emits exactly 2 constraints per bigram and 3 per trigram (one per
    focus position).  The focus event is the focus tag at its window
    slot, the context event the remaining slots' exact tags; totals are
    padded window counts.
    """
    if smoothing is None:
        smoothing = SmoothingSpec.lidstone(0.5, len(table.unigram) ** table.order)
    constraints: list[Constraint] = []
    total = table.total_windows
    if table.order == 2:
        first, second = table.margin((0,)), table.margin((1,))
        for (x, y) in sorted(table.counts):
            joint = table.counts[(x, y)]
            constraints.append(
                _weighted(y, [(-1, x)],
                          _comp(second[(y,)], first[(x,)], joint, total, measure, smoothing, log_base))
            )
            constraints.append(
                _weighted(x, [(1, y)],
                          _comp(first[(x,)], second[(y,)], joint, total, measure, smoothing, log_base))
            )
    else:
        slot = [table.margin((0,)), table.margin((1,)), table.margin((2,))]
        pair = {
            (1, 2): table.margin((1, 2)),
            (0, 2): table.margin((0, 2)),
            (0, 1): table.margin((0, 1)),
        }
        for (x, y, z) in sorted(table.counts):
            joint = table.counts[(x, y, z)]
            constraints.append(
                _weighted(x, [(1, y), (2, z)],
                          _comp(slot[0][(x,)], pair[(1, 2)][(y, z)], joint, total,
                                measure, smoothing, log_base))
            )
            constraints.append(
                _weighted(y, [(-1, x), (1, z)],
                          _comp(slot[1][(y,)], pair[(0, 2)][(x, z)], joint, total,
                                measure, smoothing, log_base))
            )
            constraints.append(
                _weighted(z, [(-2, x), (-1, y)],
                          _comp(slot[2][(z,)], pair[(0, 1)][(x, y)], joint, total,
                                measure, smoothing, log_base))
            )
    return Grammar(constraints=tuple(constraints))


def weight_hand_grammar(
    grammar: Grammar,
    corpus: Corpus,
    measure: CompatibilityMeasure = CompatibilityMeasure.MUTUAL_INFO,
    smoothing: SmoothingSpec | None = None,
    log_base: float = 2.0,
) -> Grammar:
    """Fill in ``?`` weights from gold-corpus occurrence counts.

    The focus event is a token whose gold reading matches the rule
    target; the context event a token where all context conditions hold
    (gold readings taken as one-hot weights).  Already-weighted rules
    and strict SELECT/REMOVE rules pass through untouched.
    """
    if smoothing is None:
        smoothing = SmoothingSpec.lidstone(0.5, max(len(corpus.tagset), 2))
    total = corpus.n_tokens
    out: list[Constraint] = []
    for constraint in grammar.constraints:
        if constraint.kind is not ConstraintKind.WEIGHTED or constraint.weight is not None:
            out.append(constraint)
            continue
        n_h = n_e = n_he = 0
        for sentence in corpus:
            candidates = [(tok.gold,) for tok in sentence]
            weights = [(1.0,)] * len(sentence)
            for i, token in enumerate(sentence):
                h = target_matches(constraint, token.gold, token.wordform, grammar.sets)
                ok, ctx = evaluate_context(
                    constraint, sentence, candidates, weights, i, sets=grammar.sets
                )
                e = ok and ctx >= 0.5  # one-hot weights make ctx exactly 0 or 1
                n_h += h
                n_e += e
                n_he += h and e
        if n_e == 0:
            warnings.warn(NeverMatched(f"context never matched: {constraint}"))
            if smoothing.kind.value == "mle":
                continue
        try:
            weight = _comp(n_h, n_e, n_he, total, measure, smoothing, log_base)
        except DegenerateDistribution:
            warnings.warn(NeverMatched(f"degenerate counts, rule dropped: {constraint}"))
            continue
        out.append(Constraint(ConstraintKind.WEIGHTED, constraint.target,
                              constraint.conditions, weight))
    return Grammar(grammar.sets, tuple(out), grammar.strict_select, grammar.strict_remove)


def build_backoff_grammar(
    bigrams: NGramTable,
    trigrams: NGramTable,
    spec: BackoffSpec,
    measure: CompatibilityMeasure = CompatibilityMeasure.MUTUAL_INFO,
    smoothing: SmoothingSpec | None = None,
    log_base: float = 2.0,
) -> Grammar:
    """Trigram constraints where attested at least k times, bigrams elsewhere.

    A bigram constraint is suppressed exactly when its tag pair occurs
    adjacently inside some surviving trigram, so no context is covered
    by both tiers.
    """
    if bigrams.order != 2 or trigrams.order != 3:
        raise ValueError("expected a bigram and a trigram table")
    surviving = {w for w, c in trigrams.counts.items() if c >= spec.k}
    covered_pairs = set()
    for (x, y, z) in surviving:
        covered_pairs.add((x, y))
        covered_pairs.add((y, z))

    tri_smoothing = smoothing or SmoothingSpec.lidstone(0.5, len(trigrams.unigram) ** 3)
    full_tri = acquire_ngram_grammar(trigrams, measure, tri_smoothing, log_base)
    kept: list[Constraint] = []
    # acquire emits 3 constraints per trigram, in sorted trigram order
    for window, index in zip(sorted(trigrams.counts), range(0, 3 * len(trigrams.counts), 3)):
        if window in surviving:
            kept.extend(full_tri.constraints[index : index + 3])

    bi_smoothing = smoothing or SmoothingSpec.lidstone(0.5, len(bigrams.unigram) ** 2)
    full_bi = acquire_ngram_grammar(bigrams, measure, bi_smoothing, log_base)
    for window, index in zip(sorted(bigrams.counts), range(0, 2 * len(bigrams.counts), 2)):
        if window not in covered_pairs:
            kept.extend(full_bi.constraints[index : index + 2])
    return Grammar(constraints=tuple(kept))


def serialize_ngram_table(table: NGramTable) -> str:
    lines = [f"#ngram\torder={table.order}\ttotal_tokens={table.total_tokens}"]
    for tag in sorted(table.unigram):
        lines.append(f"#unigram\t{tag}\t{table.unigram[tag]}")
    for window in sorted(table.counts):
        lines.append(" ".join(window) + "\t" + str(table.counts[window]))
    return "\n".join(lines) + "\n"


def parse_ngram_table(text: str) -> NGramTable:
    order = total_tokens = None
    counts: dict[tuple[str, ...], int] = {}
    unigram: dict[str, int] = {}
    for raw in text.split("\n"):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#ngram"):
            fields = dict(f.split("=") for f in line.split("\t")[1:])
            order = int(fields["order"])
            total_tokens = int(fields["total_tokens"])
        elif line.startswith("#unigram"):
            _, tag, count = line.split("\t")
            unigram[tag] = int(count)
        elif line.startswith("#"):
            continue
        else:
            window, count = line.split("\t")
            counts[tuple(window.split(" "))] = int(count)
    if order is None or total_tokens is None:
        raise ValueError("missing #ngram header line")
    return NGramTable(order, counts, unigram, total_tokens)
