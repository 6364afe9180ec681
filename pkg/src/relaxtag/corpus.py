"""Tagged corpora, lexica, ambiguity classes and synthetic corpus sampling.

File formats
------------
Corpus: one token per line, ``wordform<TAB>pos(<TAB>key=value)*``; blank
line ends a sentence; lines starting with ``#`` are comments.

Lexicon: ``wordform<TAB>pos:count(,key=value)*(<SPACE>pos:count...)*``
one wordform per line; a ``#open`` directive line lists the open-class
readings used as fallback for unknown words.

Markov chain spec: sections ``[start]``, ``[transitions]``, ``[emissions]``
and optionally ``[tags]``; see ``parse_hmm_spec``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

#: Reserved pos value of the virtual sentence-boundary token.  It pads
#: both sentence ends for context matching and n-gram windows but is
#: never emitted in output.
BOUNDARY = "<<<"


class MalformedLine(ValueError):
    def __init__(self, line_no: int, message: str = ""):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}" if message else f"line {line_no}")


class EmptyCorpus(ValueError):
    pass


class InvalidDistribution(ValueError):
    pass


_IDENT = re.compile(r"[a-z][a-z0-9_]*$")


@dataclass(frozen=True)
class Reading:
    """One candidate analysis of a word: a bundle of named feature values.

    ``pos`` is required; arbitrary further features (lemma, syn, sense,
    ...) may be present.  Two readings are equal iff their feature maps
    are equal.
    """

    features: tuple[tuple[str, str], ...]

    def __init__(self, features=None, **kw):
        items = dict(features or {})
        items.update(kw)
        for name, value in items.items():
            if not _IDENT.match(name):
                raise ValueError(f"bad feature name {name!r}")
            if not value:
                raise ValueError(f"empty value for feature {name!r}")
        if "pos" not in items:
            raise ValueError("reading requires a 'pos' feature")
        object.__setattr__(self, "features", tuple(sorted(items.items())))

    @property
    def pos(self) -> str:
        return self.get("pos")

    def get(self, name: str, default: str | None = None) -> str | None:
        for key, value in self.features:
            if key == name:
                return value
        return default

    def as_dict(self) -> dict[str, str]:
        return dict(self.features)

    def extras(self) -> list[tuple[str, str]]:
        """Features other than pos, in canonical order."""
        return [(k, v) for k, v in self.features if k != "pos"]

    def __repr__(self):
        inner = " ".join(f"{k}={v}" for k, v in self.features)
        return f"<Reading {inner}>"


#: Virtual reading carried by the boundary pseudo-token.
BOUNDARY_READING = Reading(pos=BOUNDARY)


@dataclass(frozen=True)
class Token:
    wordform: str
    gold: Reading | None = None

    def __post_init__(self):
        if not self.wordform:
            raise ValueError("empty wordform")


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[Token, ...]

    def __init__(self, tokens):
        tokens = tuple(tokens)
        if not tokens:
            raise ValueError("sentence must contain at least one token")
        object.__setattr__(self, "tokens", tokens)

    def __len__(self):
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)

    def __getitem__(self, i):
        return self.tokens[i]


@dataclass(frozen=True)
class Corpus:
    sentences: tuple[Sentence, ...]
    tagset: frozenset[str]

    def __init__(self, sentences):
        sentences = tuple(sentences)
        if not sentences:
            raise EmptyCorpus("corpus contains no sentences")
        tags = frozenset(
            tok.gold.pos for s in sentences for tok in s if tok.gold is not None
        )
        object.__setattr__(self, "sentences", sentences)
        object.__setattr__(self, "tagset", tags)

    def __len__(self):
        return len(self.sentences)

    def __iter__(self):
        return iter(self.sentences)

    def tokens(self):
        for sentence in self.sentences:
            yield from sentence

    @property
    def n_tokens(self) -> int:
        return sum(len(s) for s in self.sentences)


class CorpusFormat:
    """Supported corpus dialects (only the TSV one for now)."""

    TSV = "tsv"


def _parse_features(fields: list[str], line_no: int) -> dict[str, str]:
    feats = {}
    for item in fields:
        key, eq, value = item.partition("=")
        if not eq or not key or not value:
            raise MalformedLine(line_no, f"expected key=value, got {item!r}")
        feats[key] = value
    return feats


def parse_tagged_corpus(text: str, fmt: str = CorpusFormat.TSV) -> Corpus:
    """Parse a tagged corpus; one sentence per blank-line-delimited block."""
    if fmt != CorpusFormat.TSV:
        raise ValueError(f"unknown corpus format {fmt!r}")
    sentences: list[Sentence] = []
    current: list[Token] = []
    for line_no, raw in enumerate(text.split("\n"), start=1):
        line = raw.rstrip("\r")
        if line.startswith("#"):
            continue
        if not line.strip():
            if current:
                sentences.append(Sentence(current))
                current = []
            continue
        fields = line.split("\t")
        if len(fields) < 2:
            raise MalformedLine(line_no, "expected at least wordform<TAB>pos")
        wordform, pos = fields[0], fields[1]
        if not wordform or not pos:
            raise MalformedLine(line_no, "empty wordform or pos column")
        feats = _parse_features(fields[2:], line_no)
        feats["pos"] = pos
        current.append(Token(wordform, Reading(feats)))
    if current:
        sentences.append(Sentence(current))
    if not sentences:
        raise EmptyCorpus("no sentences found")
    return Corpus(sentences)


def serialize_corpus(corpus: Corpus) -> str:
    """Inverse of parse_tagged_corpus (parse . serialize is identity)."""
    blocks = []
    for sentence in corpus:
        lines = []
        for token in sentence:
            cols = [token.wordform, token.gold.pos]
            cols.extend(f"{k}={v}" for k, v in token.gold.extras())
            lines.append("\t".join(cols))
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


# ---------------------------------------------------------------------------
# Lexicon

#: Tags treated as closed-class by default when deriving the open-class
#: fallback: determiner/preposition/conjunction-like tags plus anything
#: punctuation-looking.  Override per tagset via build_lexicon().
DEFAULT_CLOSED_CLASS = frozenset({"DT", "PDT", "WDT", "IN", "CC", "TO", "POS", "MD"})


def _looks_closed(tag: str) -> bool:
    return tag in DEFAULT_CLOSED_CLASS or not any(ch.isalnum() for ch in tag.strip("<>@"))


@dataclass(frozen=True)
class Lexicon:
    """Candidate readings per wordform with their training counts."""

    entries: dict[str, tuple[tuple[Reading, int], ...]]
    open_class_readings: tuple[Reading, ...]

    def __post_init__(self):
        if not self.open_class_readings:
            raise ValueError("open_class_readings must be nonempty")

    def candidates(self, wordform: str) -> list[tuple[Reading, int]]:
        """Readings with counts for a wordform; open-class fallback if unknown."""
        entry = self.entries.get(wordform)
        if entry is not None:
            return list(entry)
        return [(r, 1) for r in self.open_class_readings]

    def is_known(self, wordform: str) -> bool:
        return wordform in self.entries

    def is_ambiguous(self, wordform: str) -> bool:
        """True when the wordform resolves to more than one candidate."""
        return len(self.candidates(wordform)) > 1

    def pos_set(self, wordform: str) -> frozenset[str]:
        return frozenset(r.pos for r, _ in self.candidates(wordform))

    def format_entry(self, wordform: str) -> str:
        """Human-readable rendering, e.g. ``the: CD 1, DT 47715``."""
        parts = sorted(self.entries.get(wordform, ()), key=lambda rc: rc[0].pos)
        return f"{wordform}: " + ", ".join(f"{r.pos} {c}" for r, c in parts)


def build_lexicon(
    corpus: Corpus,
    min_count: int = 1,
    closed_class_tags: frozenset[str] | None = None,
) -> Lexicon:
    """Collect candidate readings and counts from a gold-tagged corpus.

    Readings seen fewer than ``min_count`` times are dropped (the entry
    survives if at least one reading does).  Open-class fallback readings
    are the corpus tags minus the closed-class tags, with uniform counts.
    """
    counts: dict[str, dict[Reading, int]] = {}
    for token in corpus.tokens():
        per_word = counts.setdefault(token.wordform, {})
        per_word[token.gold] = per_word.get(token.gold, 0) + 1

    entries = {}
    for wordform, per_word in counts.items():
        kept = [(r, c) for r, c in per_word.items() if c >= min_count]
        if not kept:
            continue
        kept.sort(key=lambda rc: (-rc[1], rc[0].pos, rc[0].features))
        entries[wordform] = tuple(kept)

    if closed_class_tags is None:
        closed = frozenset(t for t in corpus.tagset if _looks_closed(t))
    else:
        closed = frozenset(closed_class_tags)
    open_tags = sorted(corpus.tagset - closed)
    if not open_tags:  # degenerate tagset: everything closed
        open_tags = sorted(corpus.tagset)
    return Lexicon(entries, tuple(Reading(pos=t) for t in open_tags))


def serialize_lexicon(lexicon: Lexicon) -> str:
    lines = []
    open_part = " ".join(f"{r.pos}:1" for r in lexicon.open_class_readings)
    lines.append(f"#open\t{open_part}")
    for wordform in sorted(lexicon.entries):
        parts = []
        for reading, count in lexicon.entries[wordform]:
            rendered = f"{reading.pos}:{count}"
            for key, value in reading.extras():
                rendered += f",{key}={value}"
            parts.append(rendered)
        lines.append(wordform + "\t" + " ".join(parts))
    return "\n".join(lines) + "\n"


def _parse_reading_count(item: str, line_no: int) -> tuple[Reading, int]:
    head, *featparts = item.split(",")
    pos, colon, count = head.partition(":")
    if not colon or not pos:
        raise MalformedLine(line_no, f"expected pos:count, got {item!r}")
    try:
        n = int(count)
    except ValueError:
        raise MalformedLine(line_no, f"bad count in {item!r}") from None
    feats = _parse_features(featparts, line_no)
    feats["pos"] = pos
    return Reading(feats), n


def parse_lexicon(text: str) -> Lexicon:
    entries = {}
    open_readings: tuple[Reading, ...] = ()
    for line_no, raw in enumerate(text.split("\n"), start=1):
        line = raw.rstrip("\r")
        if not line.strip():
            continue
        if line.startswith("#open\t"):
            items = line.split("\t", 1)[1].split()
            open_readings = tuple(_parse_reading_count(i, line_no)[0] for i in items)
            continue
        if line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 2:
            raise MalformedLine(line_no, "expected wordform<TAB>readings")
        readings = tuple(_parse_reading_count(i, line_no) for i in fields[1].split())
        entries[fields[0]] = readings
    if not open_readings:
        raise MalformedLine(0, "lexicon file lacks a #open directive")
    return Lexicon(entries, open_readings)


# ---------------------------------------------------------------------------
# Ambiguity classes


@dataclass(frozen=True)
class AmbiguityClass:
    """Wordforms sharing an identical candidate pos-set (e.g. IN-RB)."""

    readings: tuple[str, ...]
    members: frozenset[str]

    @property
    def name(self) -> str:
        return "-".join(self.readings)


def ambiguity_classes(lexicon: Lexicon) -> list[AmbiguityClass]:
    """Group ambiguous wordforms by identical pos-sets.

    Classes are sorted by descending total member occurrence count.
    """
    groups: dict[tuple[str, ...], list[str]] = {}
    weight: dict[tuple[str, ...], int] = {}
    for wordform, entry in lexicon.entries.items():
        pos_set = tuple(sorted({r.pos for r, _ in entry}))
        if len(pos_set) < 2:
            continue
        groups.setdefault(pos_set, []).append(wordform)
        weight[pos_set] = weight.get(pos_set, 0) + sum(c for _, c in entry)
    classes = [
        AmbiguityClass(readings, frozenset(members)) for readings, members in groups.items()
    ]
    classes.sort(key=lambda c: (-weight[c.readings], c.readings))
    return classes


# ---------------------------------------------------------------------------
# Synthetic corpora


@dataclass(frozen=True)
class HmmSpec:
    """Generating Markov chain for seeded synthetic corpora.

    ``transitions`` rows may give mass to the boundary symbol ``<<<``,
    which ends the sentence.  ``state_tags`` optionally maps a state to
    the pos it emits (defaults to the state name), so chains with more
    states than surface tags can induce higher-order tag dependencies.
    """

    start: dict[str, float]
    transitions: dict[str, dict[str, float]]
    emissions: dict[str, dict[str, float]]
    state_tags: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        _check_distribution("[start]", self.start)
        for state, row in self.transitions.items():
            _check_distribution(f"[transitions] {state}", row)
        for state, row in self.emissions.items():
            if not row:
                raise InvalidDistribution(f"[emissions] {state}: empty support")
            _check_distribution(f"[emissions] {state}", row)

    def tag_of(self, state: str) -> str:
        return self.state_tags.get(state, state)


def _check_distribution(label: str, row: dict[str, float]) -> None:
    if not row:
        raise InvalidDistribution(f"{label}: empty distribution")
    total = sum(row.values())
    if abs(total - 1.0) > 1e-9:
        raise InvalidDistribution(f"{label}: probabilities sum to {total}, not 1")
    if any(p < 0 for p in row.values()):
        raise InvalidDistribution(f"{label}: negative probability")


def _draw(rng: np.random.Generator, row: dict[str, float]) -> str:
    keys = sorted(row)
    probs = np.array([row[k] for k in keys], dtype=float)
    probs = probs / probs.sum()
    return keys[rng.choice(len(keys), p=probs)]


def sample_synthetic_corpus(
    spec: HmmSpec, n_sentences: int, seed: int, max_len: int = 200
) -> Corpus:
    """Sample a gold-tagged corpus; pure function of (spec, n, seed).

    Sentences end when the chain transitions to ``<<<`` or at ``max_len``
    tokens (a guard against non-terminating chains).
    """
    if n_sentences <= 0:
        raise ValueError("n_sentences must be positive")
    rng = np.random.default_rng(seed)
    sentences = []
    for _ in range(n_sentences):
        state = _draw(rng, spec.start)
        tokens = []
        while len(tokens) < max_len:
            word = _draw(rng, spec.emissions[state])
            tokens.append(Token(word, Reading(pos=spec.tag_of(state))))
            nxt = _draw(rng, spec.transitions[state])
            if nxt == BOUNDARY:
                break
            state = nxt
        sentences.append(Sentence(tokens))
    return Corpus(sentences)


_SECTION = re.compile(r"\[(start|transitions|emissions|tags)\]$")


def parse_hmm_spec(text: str) -> HmmSpec:
    """Parse the sectioned chain-spec format.

    ``[start]`` lines: ``state prob``; ``[transitions]`` and
    ``[emissions]`` lines: ``state target prob``; optional ``[tags]``
    lines: ``state tag``.
    """
    start: dict[str, float] = {}
    transitions: dict[str, dict[str, float]] = {}
    emissions: dict[str, dict[str, float]] = {}
    tags: dict[str, str] = {}
    section = None
    for line_no, raw in enumerate(text.split("\n"), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        m = _SECTION.match(line)
        if m:
            section = m.group(1)
            continue
        fields = line.split()
        if section == "start" and len(fields) == 2:
            start[fields[0]] = float(fields[1])
        elif section == "transitions" and len(fields) == 3:
            transitions.setdefault(fields[0], {})[fields[1]] = float(fields[2])
        elif section == "emissions" and len(fields) == 3:
            emissions.setdefault(fields[0], {})[fields[1]] = float(fields[2])
        elif section == "tags" and len(fields) == 2:
            tags[fields[0]] = fields[1]
        else:
            raise MalformedLine(line_no, f"unexpected line in section {section}: {line!r}")
    return HmmSpec(start, transitions, emissions, tags)


def serialize_hmm_spec(spec: HmmSpec) -> str:
    out = ["[start]"]
    out += [f"{s} {p}" for s, p in sorted(spec.start.items())]
    out.append("[transitions]")
    for state in sorted(spec.transitions):
        out += [f"{state} {t} {p}" for t, p in sorted(spec.transitions[state].items())]
    out.append("[emissions]")
    for state in sorted(spec.emissions):
        out += [f"{state} {w} {p}" for w, p in sorted(spec.emissions[state].items())]
    if spec.state_tags:
        out.append("[tags]")
        out += [f"{s} {t}" for s, t in sorted(spec.state_tags.items())]
    return "\n".join(out) + "\n"
