"""Event counting, probability estimation and compatibility measures.

A compatibility value expresses how (in)compatible the occurrence of a
focus event H (a word/tag pair) is with the occurrence of a context
event E.  Five measures are supported; mutual information is the usual
choice because it is signed, so incompatibility can be modelled as well
as compatibility.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass


class DegenerateDistribution(ValueError):
    """Raised when a measure is undefined for the estimated probabilities.

    Happens with MLE when an event has probability 0 or 1; callers that
    cannot rule this out should use Lidstone smoothing instead.
    """


@dataclass(frozen=True)
class EventCounts:
    """Joint occurrence counts for a focus event H and a context event E."""

    n_h: int
    n_e: int
    n_he: int
    total: int

    def __post_init__(self):
        if self.total <= 0:
            raise ValueError("total must be positive")
        if min(self.n_h, self.n_e, self.n_he) < 0:
            raise ValueError("counts must be nonnegative")
        if self.n_he > min(self.n_h, self.n_e):
            raise ValueError("joint count exceeds a marginal count")
        if max(self.n_h, self.n_e) > self.total:
            raise ValueError("marginal count exceeds total")


class SmoothingKind(enum.Enum):
    MLE = "mle"
    LIDSTONE = "lidstone"


@dataclass(frozen=True)
class SmoothingSpec:
    """Estimation rule: plain relative frequency or Lidstone's law.

    Lidstone adds ``lam`` to every count and ``lam * vocab_size`` to the
    total, so no estimated probability is ever exactly 0 or 1.
    """

    kind: SmoothingKind = SmoothingKind.MLE
    lam: float = 0.5
    vocab_size: int = 1

    def __post_init__(self):
        if self.kind is SmoothingKind.LIDSTONE:
            if self.lam <= 0:
                raise ValueError("Lidstone lambda must be positive")
            if self.vocab_size <= 0:
                raise ValueError("vocab_size must be positive")

    @classmethod
    def mle(cls) -> "SmoothingSpec":
        return cls(SmoothingKind.MLE)

    @classmethod
    def lidstone(cls, lam: float = 0.5, vocab_size: int = 1) -> "SmoothingSpec":
        return cls(SmoothingKind.LIDSTONE, lam, vocab_size)

    def probability(self, n: int, total: int) -> float:
        if self.kind is SmoothingKind.MLE:
            return n / total
        return (n + self.lam) / (total + self.lam * self.vocab_size)


class CompatibilityMeasure(enum.Enum):
    COND_PROB = "cond-prob"
    MUTUAL_INFO = "mutual-info"
    ASSOC_SCORE = "assoc-score"
    REL_ENTROPY = "rel-entropy"
    CORRELATION = "correlation"


def estimate(counts: EventCounts, smoothing: SmoothingSpec) -> tuple[float, float, float]:
    """Estimate (pH, pE, pHE) from counts under the given smoothing."""
    return (
        smoothing.probability(counts.n_h, counts.total),
        smoothing.probability(counts.n_e, counts.total),
        smoothing.probability(counts.n_he, counts.total),
    )


def _log(x: float, base: float) -> float:
    return math.log(x) / math.log(base)


def compatibility_from_probs(
    p_h: float,
    p_e: float,
    p_he: float,
    measure: CompatibilityMeasure,
    log_base: float = 2.0,
) -> float:
    """Evaluate a compatibility measure on already-estimated probabilities."""
    if log_base <= 1.0:
        raise ValueError("log_base must exceed 1")

    if measure is CompatibilityMeasure.COND_PROB:
        if p_e == 0.0:
            raise DegenerateDistribution("P(E) = 0, conditional probability undefined")
        return p_he / p_e

    if measure is CompatibilityMeasure.MUTUAL_INFO:
        if p_he == 0.0 or p_h == 0.0 or p_e == 0.0:
            raise DegenerateDistribution(
                "mutual information undefined on zero probabilities; use Lidstone"
            )
        return _log(p_he / (p_h * p_e), log_base)

    if measure is CompatibilityMeasure.ASSOC_SCORE:
        mi = compatibility_from_probs(p_h, p_e, p_he, CompatibilityMeasure.MUTUAL_INFO, log_base)
        cond = compatibility_from_probs(p_h, p_e, p_he, CompatibilityMeasure.COND_PROB, log_base)
        return cond * mi

    if measure is CompatibilityMeasure.REL_ENTROPY:
        # Four-cell joint table over {H, not-H} x {E, not-E}; empty cells
        # contribute nothing by the usual 0*log(0) = 0 convention.
        cells = (
            (p_he, p_h, p_e),
            (p_h - p_he, p_h, 1.0 - p_e),
            (p_e - p_he, 1.0 - p_h, p_e),
            (1.0 - p_h - p_e + p_he, 1.0 - p_h, 1.0 - p_e),
        )
        acc = 0.0
        for p_xy, p_x, p_y in cells:
            if p_xy <= 0.0:
                continue
            acc += p_xy * _log(p_xy / (p_x * p_y), log_base)
        return acc

    if measure is CompatibilityMeasure.CORRELATION:
        var_h = p_h - p_h * p_h
        var_e = p_e - p_e * p_e
        if var_h <= 0.0 or var_e <= 0.0:
            raise DegenerateDistribution(
                "correlation undefined when P(H) or P(E) is 0 or 1; use Lidstone"
            )
        return (p_he - p_h * p_e) / math.sqrt(var_e * var_h)

    raise ValueError(f"unknown measure {measure!r}")


def compatibility(
    counts: EventCounts,
    measure: CompatibilityMeasure,
    smoothing: SmoothingSpec,
    log_base: float = 2.0,
) -> float:
    """Compatibility of the focus event with the context event.

    COND_PROB lies in [0,1], CORRELATION in [-1,1], REL_ENTROPY is
    nonnegative and MUTUAL_INFO / ASSOC_SCORE may take any sign.
    """
    p_h, p_e, p_he = estimate(counts, smoothing)
    return compatibility_from_probs(p_h, p_e, p_he, measure, log_base)
