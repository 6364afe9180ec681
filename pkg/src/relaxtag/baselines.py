"""Reference taggers: most-likely, bigram Viterbi, and exhaustive search.

Sequence scoring uses the same start/lexical/transition chain as the
sequence-probability support of the relaxation engine, so baseline and
relaxation numbers are directly comparable.  Viterbi and the exhaustive
oracle accumulate log terms in the same left-to-right order and break
ties toward the lexicographically smallest tag sequence, so they agree
exactly wherever the search-space guard admits enumeration.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

from .corpus import Lexicon, Reading, Sentence
from .engine import NoCandidates, SequenceModel
from .stats import SmoothingSpec


class SearchSpaceTooLarge(ValueError):
    pass


BRUTE_FORCE_LIMIT = 10**6


@dataclass(frozen=True)
class HmmModel(SequenceModel):
    """Sequence model plus a record of the smoothing that built it."""

    smoothing: SmoothingSpec = SmoothingSpec.mle()


def build_hmm_model(corpus, lexicon: Lexicon, lam: float = 0.5) -> HmmModel:
    from .engine import build_sequence_model

    base = build_sequence_model(corpus, lexicon, lam)
    smoothing = SmoothingSpec.lidstone(lam, len(corpus.tagset))
    return HmmModel(base.start, base.transition, base.lexicon, smoothing)


def most_likely_tag(sentence: Sentence, lexicon: Lexicon) -> list[Reading]:
    """Per word, the reading with the highest lexical count (ties break
    to the lexicographically smallest pos)."""
    out = []
    for token in sentence:
        entry = lexicon.candidates(token.wordform)
        if not entry:
            raise NoCandidates(token.wordform)
        out.append(min(entry, key=lambda rc: (-rc[1], rc[0].pos, rc[0].features))[0])
    return out


def _candidate_tags(sentence: Sentence, lexicon: Lexicon) -> list[list[str]]:
    tags = []
    for token in sentence:
        entry = lexicon.candidates(token.wordform)
        if not entry:
            raise NoCandidates(token.wordform)
        tags.append(sorted({r.pos for r, _ in entry}))
    return tags


def _reading_for(lexicon: Lexicon, wordform: str, tag: str) -> Reading:
    """Representative reading for a chosen tag: highest count, then
    lexicographic features."""
    entry = [rc for rc in lexicon.candidates(wordform) if rc[0].pos == tag]
    return min(entry, key=lambda rc: (-rc[1], rc[0].features))[0]


def _log(p: float) -> float:
    return math.log(p) if p > 0.0 else float("-inf")


def _sequence_log_score(model: SequenceModel, sentence: Sentence, tags) -> float:
    """Log chain score folded left to right: start, then per position the
    lexical term and the outgoing transition."""
    score = _log(model.start.get(tags[0], 0.0))
    for k, token in enumerate(sentence):
        score += _log(model.lexical(token.wordform, tags[k]))
        if k + 1 < len(sentence):
            score += _log(model.transition.get((tags[k], tags[k + 1]), 0.0))
    return score


def viterbi_tag(sentence: Sentence, lexicon: Lexicon, model: SequenceModel) -> list[Reading]:
    """Argmax tag sequence under the chain score, by dynamic programming.

    Ties resolve to the lexicographically smallest sequence; prefix
    scores are folded in the same operation order as the exhaustive
    scorer so both decoders agree bit for bit.
    """
    tags = _candidate_tags(sentence, lexicon)
    n = len(sentence)
    # state -> (score, path); paths kept explicitly for exact tie-breaking
    frontier: dict[str, tuple[float, tuple[str, ...]]] = {}
    for t in tags[0]:
        score = _log(model.start.get(t, 0.0)) + _log(model.lexical(sentence[0].wordform, t))
        frontier[t] = (score, (t,))
    for k in range(1, n):
        nxt: dict[str, tuple[float, tuple[str, ...]]] = {}
        lex = {t: _log(model.lexical(sentence[k].wordform, t)) for t in tags[k]}
        for t in tags[k]:
            best = None
            for prev in tags[k - 1]:
                p_score, p_path = frontier[prev]
                score = p_score + _log(model.transition.get((prev, t), 0.0)) + lex[t]
                candidate = (score, p_path + (t,))
                if (
                    best is None
                    or candidate[0] > best[0]
                    or (candidate[0] == best[0] and candidate[1] < best[1])
                ):
                    best = candidate
            nxt[t] = best
        frontier = nxt
    best_score = max(score for score, _ in frontier.values())
    path = min(p for score, p in frontier.values() if score == best_score)
    return [_reading_for(lexicon, tok.wordform, t) for tok, t in zip(sentence, path)]


def brute_force_tag(sentence: Sentence, lexicon: Lexicon, model: SequenceModel) -> list[Reading]:
    """Exact enumeration over all candidate tag sequences.

    Guarded: raises SearchSpaceTooLarge beyond 10^6 sequences.  Ties
    resolve to the lexicographically smallest sequence.
    """
    tags = _candidate_tags(sentence, lexicon)
    size = 1
    for options in tags:
        size *= len(options)
        if size > BRUTE_FORCE_LIMIT:
            raise SearchSpaceTooLarge(f"more than {BRUTE_FORCE_LIMIT} tag sequences")
    best_score = float("-inf")
    best_path = None
    for path in itertools.product(*tags):  # lexicographic order
        score = _sequence_log_score(model, sentence, path)
        if score > best_score:
            best_score, best_path = score, path
    return [_reading_for(lexicon, tok.wordform, t) for tok, t in zip(sentence, best_path)]
