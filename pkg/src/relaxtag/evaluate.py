"""Scoring of tagger output and the reported-accuracy distortion model.

Accuracy of fully disambiguated output is reported overall and over
ambiguous tokens only; partially disambiguated output (several readings
kept per token) is scored as precision (correct proposed readings over
all proposed readings) and recall (tokens whose gold reading is among
the proposed ones).

The distortion model quantifies how a tagger's measured accuracy on a
noisy test corpus deviates from its true accuracy, as a function of the
corpus error rate, the tagger's behaviour on correctly and incorrectly
annotated tokens, and the corpus ambiguity ratio.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

from .corpus import Corpus, Lexicon, Reading


class LengthMismatch(ValueError):
    pass


@dataclass(frozen=True)
class EvalReport:
    overall_accuracy: float
    ambiguous_accuracy: float | None
    precision: float
    recall: float
    total: int
    ambiguous: int
    correct: int
    proposed_readings: int

    def fields(self) -> list[tuple[str, object]]:
        return [
            ("overall_accuracy", self.overall_accuracy),
            ("ambiguous_accuracy", self.ambiguous_accuracy),
            ("precision", self.precision),
            ("recall", self.recall),
            ("total", self.total),
            ("ambiguous", self.ambiguous),
            ("correct", self.correct),
            ("proposed_readings", self.proposed_readings),
        ]

    def to_text(self) -> str:
        lines = []
        for key, value in self.fields():
            lines.append(f"{key}=" + ("" if value is None else repr(value)))
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow([k for k, _ in self.fields()])
        writer.writerow(["" if v is None else v for _, v in self.fields()])
        return buf.getvalue()


def _gold_readings(gold: Corpus) -> list[tuple[str, Reading]]:
    return [(tok.wordform, tok.gold) for tok in gold.tokens()]


def evaluate_full(gold: Corpus, predicted: list[Reading], lexicon: Lexicon) -> EvalReport:
    """Score one predicted reading per token against the gold corpus.

    Ambiguous accuracy covers tokens with at least two lexicon
    candidates (unknown words count as ambiguous: they fall back to the
    open-class readings); when no token is ambiguous it is None rather
    than zero.  For fully disambiguated output precision and recall both
    equal the overall accuracy.
    """
    gold_tokens = _gold_readings(gold)
    if len(gold_tokens) != len(predicted):
        raise LengthMismatch(f"{len(gold_tokens)} gold vs {len(predicted)} predicted tokens")
    total = len(gold_tokens)
    correct = ambiguous = ambiguous_correct = 0
    for (wordform, gold_reading), pred in zip(gold_tokens, predicted):
        hit = pred == gold_reading
        correct += hit
        if len(lexicon.candidates(wordform)) >= 2:
            ambiguous += 1
            ambiguous_correct += hit
    overall = correct / total
    return EvalReport(
        overall_accuracy=overall,
        ambiguous_accuracy=(ambiguous_correct / ambiguous) if ambiguous else None,
        precision=overall,
        recall=overall,
        total=total,
        ambiguous=ambiguous,
        correct=correct,
        proposed_readings=total,
    )


def evaluate_partial(
    gold: Corpus,
    predicted_sets: list[list[Reading]],
    lexicon: Lexicon | None = None,
) -> EvalReport:
    """Score sets of proposed readings per token.

    Recall: fraction of tokens whose gold reading is among the proposed
    ones.  Precision: correct proposed readings over all proposed
    readings.
    """
    gold_tokens = _gold_readings(gold)
    if len(gold_tokens) != len(predicted_sets):
        raise LengthMismatch(
            f"{len(gold_tokens)} gold vs {len(predicted_sets)} predicted tokens"
        )
    total = len(gold_tokens)
    proposed = hits = ambiguous = ambiguous_correct = 0
    fully = True
    for (wordform, gold_reading), readings in zip(gold_tokens, predicted_sets):
        if not readings:
            raise ValueError("every proposed reading set must be nonempty")
        proposed += len(readings)
        hit = gold_reading in readings
        hits += hit
        fully = fully and len(readings) == 1
        if lexicon is not None and len(lexicon.candidates(wordform)) >= 2:
            ambiguous += 1
            ambiguous_correct += hit and len(readings) == 1
    recall = hits / total
    precision = hits / proposed
    return EvalReport(
        overall_accuracy=hits / total if fully else precision,
        ambiguous_accuracy=(ambiguous_correct / ambiguous) if ambiguous else None,
        precision=precision,
        recall=recall,
        total=total,
        ambiguous=ambiguous,
        correct=hits,
        proposed_readings=proposed,
    )


@dataclass(frozen=True)
class DistortionParams:
    """Inputs of the reported-accuracy model.

    corpus_correct: fraction of the test corpus that is annotated right;
    q1/q2: probability the tagger picks the truly right tag on tokens the
    corpus annotates right/wrong; ambiguity_ratio: average candidate
    tags per ambiguous token (> 1).
    """

    corpus_correct: float
    q1: float
    q2: float
    ambiguity_ratio: float

    def __post_init__(self):
        for name in ("corpus_correct", "q1", "q2"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be a probability")
        if self.ambiguity_ratio <= 1.0:
            raise ValueError("ambiguity_ratio must exceed 1")


def distortion_model(params: DistortionParams) -> float:
    """Accuracy a scorer would report against the noisy corpus.

    Tokens right in the corpus and tagged right count as correct; tokens
    wrong in the corpus count as correct only when the tagger reproduces
    the same wrong tag, which among the remaining wrong candidates
    happens with chance 1/(ambiguity_ratio - 1).
    """
    c, q1, q2, a = (
        params.corpus_correct,
        params.q1,
        params.q2,
        params.ambiguity_ratio,
    )
    return c * q1 + (1.0 - c) * (1.0 - q2) / (a - 1.0)
