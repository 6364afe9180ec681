"""Iterative relaxation of weighted labellings under a constraint model.

Each word is a variable, each candidate reading a label carrying a
weight; all weights of a word form a probability simplex.  Per
iteration every label's support is gathered from the constraints and
the current weights of context labels, normalized into the updating
function's domain, and all weight vectors are updated synchronously.
The process stops when no weight moves more than epsilon, or at the
iteration cap (not an error; the diagnostics carry a converged flag).
"""

from __future__ import annotations

import csv
import enum
import io
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .corpus import BOUNDARY_READING, Lexicon, Reading, Sentence
from .grammar import (
    Condition,
    Constraint,
    ConstraintKind,
    FeaturePattern,
    FeatureTest,
    Grammar,
    match_constraint,
    pattern_matches,
    target_matches,
)

log = logging.getLogger(__name__)


class NoCandidates(ValueError):
    def __init__(self, wordform: str):
        self.wordform = wordform
        super().__init__(f"no candidate readings for {wordform!r}")


class DomainViolation(ValueError):
    """A support value fell outside the updating function's domain,
    which usually means normalization was skipped."""


class SupportFn(enum.Enum):
    SUM = "sum"
    PROD_OF_SUMS = "prod-of-sums"
    PROD_OF_MAX = "prod-of-max"
    SEQUENCE = "sequence"


class UpdateKind(enum.Enum):
    CENTERED = "centered"
    POSITIVE = "positive"
    BOLTZMANN = "boltzmann"


@dataclass(frozen=True)
class UpdateFn:
    """Updating rule; Boltzmann carries its cooling schedule.

    In stochastic mode the Boltzmann update returns a seeded one-hot
    sample of the softmax distribution instead of the distribution.
    """

    kind: UpdateKind = UpdateKind.CENTERED
    t0: float = 1.0
    cooling: float = 0.9
    stochastic: bool = False

    def __post_init__(self):
        if self.kind is UpdateKind.BOLTZMANN:
            if self.t0 <= 0:
                raise ValueError("initial temperature must be positive")
            if not 0 < self.cooling < 1:
                raise ValueError("cooling must be in (0,1)")


class InitMode(enum.Enum):
    LEXICAL = "lexical"
    UNIFORM = "uniform"
    RANDOM = "random"


@dataclass(frozen=True)
class RelaxParams:
    support: SupportFn = SupportFn.SUM
    update: UpdateFn = UpdateFn()
    norm_factor: float = 10.0
    epsilon: float = 1e-4
    max_iters: int = 500
    presence_threshold: float = 0.0
    careful_mass: float = 0.99
    init: InitMode = InitMode.LEXICAL
    init_seed: int = 0
    stochastic_seed: int = 0
    influence_threshold: float = 0.0

    def __post_init__(self):
        if self.norm_factor <= 0:
            raise ValueError("norm_factor must be positive")
        if self.epsilon <= 0 or self.max_iters <= 0:
            raise ValueError("epsilon and max_iters must be positive")


@dataclass(frozen=True)
class Labelling:
    """Weight vectors over each token's candidate readings."""

    sentence: Sentence
    candidates: tuple[tuple[Reading, ...], ...]
    weights: tuple[np.ndarray, ...]
    iteration: int = 0

    def validate_simplex(self, tol: float = 1e-9) -> None:
        for vector in self.weights:
            if (vector < -tol).any() or abs(float(vector.sum()) - 1.0) > tol:
                raise ValueError(f"weight vector off the simplex: {vector}")

    def argmax_indices(self) -> list[int]:
        """Per-token index of the highest-weight reading (ties: lowest)."""
        return [int(np.argmax(vector)) for vector in self.weights]


@dataclass(frozen=True)
class SequenceModel:
    """Start/lexical/transition probabilities for sequence scoring.

    The lexical term P(v,t) comes from the lexicon's per-word counts
    (uniform over the open-class fallback for unknown words).
    """

    start: dict[str, float]
    transition: dict[tuple[str, str], float]
    lexicon: Lexicon

    def __post_init__(self):
        total = sum(self.start.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"start distribution sums to {total}")
        rows: dict[str, float] = {}
        for (a, _), p in self.transition.items():
            rows[a] = rows.get(a, 0.0) + p
        for a, total in rows.items():
            if abs(total - 1.0) > 1e-9:
                raise ValueError(f"transition row {a!r} sums to {total}")

    def lexical(self, wordform: str, tag: str) -> float:
        entry = self.lexicon.candidates(wordform)
        total = sum(c for _, c in entry)
        hit = sum(c for r, c in entry if r.pos == tag)
        return hit / total if total else 0.0

    def chain_score(self, sentence: Sentence, tags: list[str]) -> float:
        """Probability of a full tag sequence: start, lexical and
        transition terms multiplied left to right."""
        p = self.start.get(tags[0], 0.0)
        for k, token in enumerate(sentence):
            p *= self.lexical(token.wordform, tags[k])
            if k + 1 < len(sentence):
                p *= self.transition.get((tags[k], tags[k + 1]), 0.0)
        return p


def build_sequence_model(corpus, lexicon: Lexicon, lam: float = 0.5) -> SequenceModel:
    """Estimate start/transition rows from a gold corpus, Lidstone-smoothed
    over the corpus tagset so every row has full support."""
    tags = sorted(corpus.tagset)
    v = len(tags)
    start_counts = {t: 0 for t in tags}
    trans_counts: dict[tuple[str, str], int] = {}
    row_totals = {t: 0 for t in tags}
    for sentence in corpus:
        gold = [tok.gold.pos for tok in sentence]
        start_counts[gold[0]] += 1
        for a, b in zip(gold, gold[1:]):
            trans_counts[(a, b)] = trans_counts.get((a, b), 0) + 1
            row_totals[a] += 1
    n_sentences = len(corpus)
    start = {t: (start_counts[t] + lam) / (n_sentences + lam * v) for t in tags}
    transition = {
        (a, b): (trans_counts.get((a, b), 0) + lam) / (row_totals[a] + lam * v)
        for a in tags
        for b in tags
    }
    return SequenceModel(start, transition, lexicon)


# ---------------------------------------------------------------------------
# Initialization


def init_labelling(
    sentence: Sentence,
    lexicon: Lexicon,
    mode: InitMode = InitMode.LEXICAL,
    seed: int = 0,
) -> Labelling:
    """Initial weights: lexical frequencies, uniform, or seeded random."""
    rng = np.random.default_rng(seed) if mode is InitMode.RANDOM else None
    candidates = []
    weights = []
    for token in sentence:
        entry = lexicon.candidates(token.wordform)
        if not entry:
            raise NoCandidates(token.wordform)
        readings = tuple(r for r, _ in entry)
        m = len(readings)
        if mode is InitMode.LEXICAL:
            counts = np.array([c for _, c in entry], dtype=float)
            vector = counts / counts.sum()
        elif mode is InitMode.UNIFORM:
            vector = np.full(m, 1.0 / m)
        else:
            vector = rng.dirichlet(np.ones(m))
        candidates.append(readings)
        weights.append(vector)
    return Labelling(sentence, tuple(candidates), tuple(weights), iteration=0)


# ---------------------------------------------------------------------------
# Compiled per-sentence matching

_BOUNDARY_VIEW = ((BOUNDARY_READING,), "<<<")


class _MatchContext:
    """Per-sentence cache of pattern/position match masks.

    A mask is the tuple of candidate indices at a position whose reading
    matches a pattern; masks are weight-independent, so everything that
    varies across iterations reduces to summing current weights over a
    mask.
    """

    def __init__(self, labelling: Labelling, sets):
        self.sentence = labelling.sentence
        self.candidates = labelling.candidates
        self.sets = sets
        self.n = len(labelling.sentence)
        self._masks: dict[tuple, tuple[int, ...] | bool] = {}

    def mask(self, pattern: FeaturePattern, pos: int):
        """Matching candidate indices at pos; a bool for boundary positions."""
        key = (id(pattern), pos)
        cached = self._masks.get(key)
        if cached is None:
            if 0 <= pos < self.n:
                readings = self.candidates[pos]
                wordform = self.sentence[pos].wordform
                cached = tuple(
                    k
                    for k, r in enumerate(readings)
                    if pattern_matches(pattern, r, wordform, self.sets)
                )
            else:
                cached = pattern_matches(pattern, BOUNDARY_READING, "<<<", self.sets)
            self._masks[key] = cached
        return cached

    def mass(self, pattern: FeaturePattern, pos: int, weights) -> float:
        mask = self.mask(pattern, pos)
        if isinstance(mask, bool):
            return 1.0 if mask else 0.0
        w = weights[pos]
        return float(sum(w[k] for k in mask))

    def present(self, pattern: FeaturePattern, pos: int, weights, threshold) -> bool:
        mask = self.mask(pattern, pos)
        if isinstance(mask, bool):
            return mask and 1.0 > threshold
        w = weights[pos]
        return any(w[k] > threshold for k in mask)


def _eval_condition(ctx: _MatchContext, cond: Condition, focus: int, weights, params):
    """(resolved, mass) for one condition under the current weights."""
    if not cond.star:
        pos = focus + cond.position
        resolved, mass = True, ctx.mass(cond.pattern, pos, weights)
    else:
        step = 1 if cond.position > 0 else -1
        pos = focus + cond.position
        resolved, mass = False, 0.0
        while -1 <= pos <= ctx.n:
            if ctx.present(cond.pattern, pos, weights, params.presence_threshold):
                resolved, mass = True, ctx.mass(cond.pattern, pos, weights)
                break
            if cond.barrier is not None and ctx.present(
                cond.barrier, pos, weights, params.presence_threshold
            ):
                break
            if pos in (-1, ctx.n):
                break
            pos += step
    if resolved and cond.careful and mass < params.careful_mass:
        resolved, mass = False, 0.0
    return resolved, mass


def _context_weight(ctx, constraint, focus, weights, params):
    product = 1.0
    for cond in constraint.conditions:
        resolved, mass = _eval_condition(ctx, cond, focus, weights, params)
        factor = mass if resolved else 0.0
        if cond.negated:
            factor = 1.0 - factor
        elif not resolved:
            return None
        product *= min(max(factor, 0.0), 1.0)
    return product


def _index_constraints(grammar: Grammar):
    """Bucket constraints by the pos values their target can match.

    Targets whose disjuncts all pin a pos go into per-pos buckets; the
    rest (pure wordform or set-reference targets) are checked for every
    reading.
    """
    by_pos: dict[str, list[Constraint]] = {}
    general: list[Constraint] = []
    for constraint in grammar.constraints:
        pos_values = set()
        indexable = True
        for conj in constraint.target.disjuncts:
            pins = [t.value for t in conj if isinstance(t, FeatureTest) and t.feature == "pos"]
            if pins:
                pos_values.add(pins[0])
            else:
                indexable = False
                break
        if indexable:
            for pos in pos_values:
                by_pos.setdefault(pos, []).append(constraint)
        else:
            general.append(constraint)
    return by_pos, general


class _CompiledSentence:
    """Applicable constraints per (token, reading), fixed for a sentence."""

    def __init__(self, labelling: Labelling, grammar: Grammar | None, params: RelaxParams):
        self.params = params
        self.ctx = _MatchContext(labelling, grammar.sets if grammar else {})
        self.applicable: list[list[list[Constraint]]] = []
        if grammar is None:
            grammar = Grammar()
        for c in grammar.constraints:
            if c.kind is not ConstraintKind.WEIGHTED or c.weight is None:
                raise ValueError(
                    "relaxation requires a desugared grammar with numeric weights"
                )
        by_pos, general = _index_constraints(grammar)
        for i, token in enumerate(labelling.sentence):
            per_token = []
            for reading in labelling.candidates[i]:
                bucket = by_pos.get(reading.pos, []) + general
                per_token.append(
                    [
                        c
                        for c in bucket
                        if target_matches(c, reading, token.wordform, self.ctx.sets)
                    ]
                )
            self.applicable.append(per_token)

    def influences(self, i: int, j: int, weights):
        """(constraint, influence) pairs for applicable constraints."""
        out = []
        threshold = self.params.influence_threshold
        for constraint in self.applicable[i][j]:
            ctx_weight = _context_weight(self.ctx, constraint, i, weights, self.params)
            if ctx_weight is None:
                continue
            inf = constraint.weight * ctx_weight
            if threshold and abs(inf) < threshold:
                continue
            out.append((constraint, inf))
        return out

    def support(self, i: int, j: int, weights, fn: SupportFn) -> float:
        pairs = self.influences(i, j, weights)
        if fn is SupportFn.SUM:
            return sum(inf for _, inf in pairs)
        groups: dict[tuple, list[float]] = {}
        for constraint, inf in pairs:
            groups.setdefault(constraint.group_key(), []).append(inf)
        if not groups:
            return 0.0
        result = 1.0
        for values in groups.values():
            result *= sum(values) if fn is SupportFn.PROD_OF_SUMS else max(values)
        return result


# ---------------------------------------------------------------------------
# Public single-shot operations (thin wrappers over the compiled forms)


def influence(
    constraint: Constraint,
    i: int,
    j: int,
    labelling: Labelling,
    sets=None,
    presence_threshold: float = 0.0,
    careful_mass: float = 0.99,
) -> float:
    """C_r times the context weight; zero when the constraint does not
    apply to reading j of token i."""
    if constraint.weight is None:
        raise ValueError("constraint has no numeric weight")
    result = match_constraint(
        constraint,
        labelling.sentence,
        labelling.candidates,
        labelling.weights,
        i,
        j,
        presence_threshold,
        careful_mass,
        sets,
    )
    return constraint.weight * result.context_weight if result.applicable else 0.0


def support(
    i: int,
    j: int,
    labelling: Labelling,
    grammar: Grammar,
    fn: SupportFn = SupportFn.SUM,
    params: RelaxParams | None = None,
) -> float:
    """Combined influence of all applicable constraints on (i, j)."""
    if fn is SupportFn.SEQUENCE:
        raise ValueError("use sequence_support for the SEQUENCE support function")
    params = params or RelaxParams(support=fn)
    compiled = _CompiledSentence(labelling, grammar, params)
    return compiled.support(i, j, labelling.weights, fn)


def sequence_support(
    i: int,
    j: int,
    labelling: Labelling,
    model: SequenceModel,
    tri_grammar: Grammar | None = None,
    hand_grammar: Grammar | None = None,
    params: RelaxParams | None = None,
) -> float:
    """Sequence-probability support: B * (1 + T) * (1 + C).

    B is the probability of the chain taking the current-argmax tag
    everywhere except candidate j at position i; T and C add the summed
    influences of trigram and hand-written constraints, shifted by one
    so absent information leaves the support unchanged.
    """
    params = params or RelaxParams(support=SupportFn.SEQUENCE)
    b = _sequence_b(i, j, labelling, model)
    t = c = 0.0
    if tri_grammar is not None:
        compiled = _CompiledSentence(labelling, tri_grammar, params)
        t = sum(inf for _, inf in compiled.influences(i, j, labelling.weights))
    if hand_grammar is not None:
        compiled = _CompiledSentence(labelling, hand_grammar, params)
        c = sum(inf for _, inf in compiled.influences(i, j, labelling.weights))
    return b * (1.0 + t) * (1.0 + c)


def _sequence_b(i: int, j: int, labelling: Labelling, model: SequenceModel) -> float:
    tags = [
        labelling.candidates[k][arg].pos
        for k, arg in enumerate(labelling.argmax_indices())
    ]
    tags[i] = labelling.candidates[i][j].pos
    return model.chain_score(labelling.sentence, tags)


def normalize_support(s: float, norm_factor: float) -> float:
    """Linear scaling clamped into [-1, 1]; out-of-domain values map to
    the extreme support."""
    if norm_factor <= 0:
        raise ValueError("norm_factor must be positive")
    return min(max(s / norm_factor, -1.0), 1.0)


# ---------------------------------------------------------------------------
# Updating


def update(
    labelling: Labelling,
    supports,
    fn: UpdateFn,
    rng: np.random.Generator | None = None,
) -> Labelling:
    """Synchronous weight update; new weights depend only on old ones.

    CENTERED takes supports in [-1,1] and multiplies by (1+s); POSITIVE
    takes nonnegative multiplicative factors directly; BOLTZMANN maps
    supports through a softmax at the current temperature.
    """
    new_weights = []
    temperature = None
    if fn.kind is UpdateKind.BOLTZMANN:
        temperature = fn.t0 * (fn.cooling ** labelling.iteration)
    for i, vector in enumerate(labelling.weights):
        s = np.asarray(supports[i], dtype=float)
        if s.shape != vector.shape:
            raise ValueError("supports shaped differently from weights")
        if fn.kind is UpdateKind.CENTERED:
            if (np.abs(s) > 1.0 + 1e-9).any():
                raise DomainViolation("CENTERED requires supports in [-1, 1]")
            factors = 1.0 + np.clip(s, -1.0, 1.0)
            new = vector * factors
            total = new.sum()
            new_weights.append(new / total if total > 0 else vector.copy())
        elif fn.kind is UpdateKind.POSITIVE:
            if (s < -1e-9).any():
                raise DomainViolation("POSITIVE requires nonnegative factors")
            new = vector * np.clip(s, 0.0, None)
            total = new.sum()
            new_weights.append(new / total if total > 0 else vector.copy())
        else:
            z = s / temperature
            z = np.exp(z - z.max())
            dist = z / z.sum()
            if fn.stochastic:
                if rng is None:
                    raise ValueError("stochastic Boltzmann update needs an rng")
                choice = rng.choice(len(dist), p=dist)
                dist = np.zeros_like(dist)
                dist[choice] = 1.0
            new_weights.append(dist)
    return replace(labelling, weights=tuple(new_weights), iteration=labelling.iteration + 1)


# ---------------------------------------------------------------------------
# Diagnostics


@dataclass
class IterationDiagnostics:
    """Per-iteration trajectory measurements of a relaxation run."""

    global_distance: list[float] = field(default_factory=list)
    avg_distance_per_word: list[float] = field(default_factory=list)
    avg_support_variation: list[float] = field(default_factory=list)
    max_support_variation: list[float] = field(default_factory=list)
    avg_variable_support: list[float] = field(default_factory=list)
    converged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.global_distance)

    @staticmethod
    def _first_differences(series: list[float]) -> list[float]:
        return [0.0] + [b - a for a, b in zip(series, series[1:])]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(
            [
                "iteration",
                "global_distance",
                "avg_distance_per_word",
                "avg_support_variation",
                "max_support_variation",
                "avg_variable_support",
                "d_global_distance",
                "d_avg_distance_per_word",
                "d_avg_support_variation",
                "d_max_support_variation",
            ]
        )
        d1 = self._first_differences(self.global_distance)
        d2 = self._first_differences(self.avg_distance_per_word)
        d3 = self._first_differences(self.avg_support_variation)
        d4 = self._first_differences(self.max_support_variation)
        for it in range(self.iterations):
            writer.writerow(
                [
                    it + 1,
                    self.global_distance[it],
                    self.avg_distance_per_word[it],
                    self.avg_support_variation[it],
                    self.max_support_variation[it],
                    self.avg_variable_support[it],
                    d1[it],
                    d2[it],
                    d3[it],
                    d4[it],
                ]
            )
        return buf.getvalue()


# ---------------------------------------------------------------------------
# The solver


def relax(
    sentence: Sentence,
    lexicon: Lexicon,
    grammar: Grammar | None,
    params: RelaxParams,
    model: SequenceModel | None = None,
    tri_grammar: Grammar | None = None,
    hand_grammar: Grammar | None = None,
) -> tuple[Labelling, IterationDiagnostics]:
    """Iterate support/normalize/update until quiescence.

    Requires a desugared grammar (weighted constraints only).  SEQUENCE
    support ignores ``grammar`` and scores against ``model`` plus the
    optional trigram/hand grammars.  Non-convergence within max_iters is
    reported in the diagnostics, not raised.
    """
    if params.support is SupportFn.SEQUENCE and model is None:
        raise ValueError("SEQUENCE support requires a sequence model")
    labelling = init_labelling(sentence, lexicon, params.init, params.init_seed)
    diagnostics = IterationDiagnostics()
    rng = np.random.default_rng(params.stochastic_seed)

    compiled = tri_compiled = hand_compiled = None
    if params.support is SupportFn.SEQUENCE:
        if tri_grammar is not None:
            tri_compiled = _CompiledSentence(labelling, tri_grammar, params)
        if hand_grammar is not None:
            hand_compiled = _CompiledSentence(labelling, hand_grammar, params)
    else:
        compiled = _CompiledSentence(labelling, grammar, params)

    previous_supports = None
    for _ in range(params.max_iters):
        weights = labelling.weights
        raw: list[np.ndarray] = []
        for i in range(len(sentence)):
            row = np.empty(len(labelling.candidates[i]))
            for j in range(len(row)):
                if params.support is SupportFn.SEQUENCE:
                    b = _sequence_b(i, j, labelling, model)
                    t = c = 0.0
                    if tri_compiled is not None:
                        t = sum(inf for _, inf in tri_compiled.influences(i, j, weights))
                    if hand_compiled is not None:
                        c = sum(inf for _, inf in hand_compiled.influences(i, j, weights))
                    row[j] = b * (1.0 + t) * (1.0 + c)
                else:
                    row[j] = compiled.support(i, j, weights, params.support)
            raw.append(row)

        normalized = [np.clip(row / params.norm_factor, -1.0, 1.0) for row in raw]
        if params.update.kind is UpdateKind.POSITIVE:
            step_supports = [1.0 + row for row in normalized]
        else:
            step_supports = normalized
        new_labelling = update(labelling, step_supports, params.update, rng)

        _record(diagnostics, labelling, new_labelling, raw, previous_supports)
        previous_supports = raw
        max_change = max(
            float(np.abs(a - b).max())
            for a, b in zip(labelling.weights, new_labelling.weights)
        )
        labelling = new_labelling
        if max_change < params.epsilon:
            diagnostics.converged = True
            break
    return labelling, diagnostics


def _record(diagnostics, old, new, supports, previous_supports):
    per_word = [
        float(np.linalg.norm(a - b)) for a, b in zip(old.weights, new.weights)
    ]
    diagnostics.global_distance.append(math.sqrt(sum(d * d for d in per_word)))
    diagnostics.avg_distance_per_word.append(sum(per_word) / len(per_word))
    if previous_supports is None:
        diagnostics.avg_support_variation.append(0.0)
        diagnostics.max_support_variation.append(0.0)
    else:
        deltas = np.concatenate(
            [np.abs(a - b).ravel() for a, b in zip(supports, previous_supports)]
        )
        diagnostics.avg_support_variation.append(float(deltas.mean()))
        diagnostics.max_support_variation.append(float(deltas.max()))
    avg_support = float(
        np.mean([float(np.dot(w, s)) for w, s in zip(old.weights, supports)])
    )
    if diagnostics.avg_variable_support and avg_support < diagnostics.avg_variable_support[-1] - 1e-12:
        log.debug(
            "average variable support decreased: %.6g -> %.6g",
            diagnostics.avg_variable_support[-1],
            avg_support,
        )
    diagnostics.avg_variable_support.append(avg_support)


# ---------------------------------------------------------------------------
# Decoding


@dataclass(frozen=True)
class Argmax:
    pass


@dataclass(frozen=True)
class Threshold:
    theta: float

    def __post_init__(self):
        if not 0 < self.theta <= 1:
            raise ValueError("theta must be in (0, 1]")


@dataclass(frozen=True)
class Forced:
    seed: int = 0
    theta: float = 0.5

    def __post_init__(self):
        if not 0 < self.theta <= 1:
            raise ValueError("theta must be in (0, 1]")


DecodeMode = Argmax | Threshold | Forced


def decode(labelling: Labelling, mode: DecodeMode = Argmax()) -> list[list[Reading]]:
    """Pick output readings per token.

    Argmax keeps the single best reading (ties break to the lowest
    candidate index); Threshold keeps every reading within a factor
    theta of the best; Forced makes a seeded uniform choice among the
    Threshold survivors.
    """
    rng = np.random.default_rng(mode.seed) if isinstance(mode, Forced) else None
    out: list[list[Reading]] = []
    for readings, vector in zip(labelling.candidates, labelling.weights):
        if isinstance(mode, Argmax):
            out.append([readings[int(np.argmax(vector))]])
            continue
        cut = mode.theta * float(vector.max())
        survivors = [k for k in range(len(readings)) if vector[k] >= cut]
        if isinstance(mode, Threshold):
            out.append([readings[k] for k in survivors])
        else:
            out.append([readings[survivors[int(rng.integers(len(survivors)))]]])
    return out
