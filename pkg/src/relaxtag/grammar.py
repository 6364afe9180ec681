"""Extended Constraint Grammar: weighted context rules, parser and matcher.

Rules carry a signed numeric compatibility value instead of the classic
binary SELECT/REMOVE verdict; SELECT/REMOVE are kept as sugar for very
strong values.  Rule application is graded: a rule is always applied
with an influence proportional to the current weights of the context
readings it mentions.

Grammar file dialect (EBNF)::

    grammar    = { statement } ;
    statement  = "SETS"                          (* decorative marker *)
               | "STRICT" number number ";"      (* select/remove values *)
               | name "=" pattern ";"            (* set definition *)
               | weight pattern { condition } ";" ;
    weight     = number | "?" | "SELECT" | "REMOVE" ;
    condition  = "(" [ "NOT" ] position pattern [ "BARRIER" pattern ] ")" ;
    position   = [ "*" ] integer [ "C" ] ;
    pattern    = group { "+" group } ;           (* "+" = all groups match *)
    group      = atom { "OR" atom } ;
    atom       = "(" literal { literal } ")" | "<<<" | name ;
    literal    = '"' wordform '"' | tag | key "=" value | "&" name ;

A bare ``name`` in a pattern references a set; ``<<<`` is the sentence
boundary tag.  Inside an atom the literals are conjoined: ``("as" RB)``
matches a reading with wordform *as* and pos *RB*.  ``#`` starts a
comment.  Weights keep full float precision through serialization.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field, replace

from .corpus import BOUNDARY, Reading


class GrammarSyntaxError(ValueError):
    def __init__(self, line: int, col: int, expected: str):
        self.line = line
        self.col = col
        self.expected = expected
        super().__init__(f"line {line}, col {col}: expected {expected}")


class UnknownSet(ValueError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"reference to undefined set {name!r}")


# ---------------------------------------------------------------------------
# Pattern model


@dataclass(frozen=True)
class FeatureTest:
    """Single feature equality test; ``wordform`` tests the surface form."""

    feature: str
    value: str


@dataclass(frozen=True)
class SetTest:
    """The named set's pattern must match the reading."""

    name: str


Conjunction = tuple  # of FeatureTest | SetTest


@dataclass(frozen=True)
class FeaturePattern:
    """Disjunction of conjunctions of feature tests (DNF)."""

    disjuncts: tuple[Conjunction, ...]

    def __post_init__(self):
        if not self.disjuncts:
            raise ValueError("pattern needs at least one disjunct")

    @classmethod
    def tag(cls, pos: str) -> "FeaturePattern":
        return cls(((FeatureTest("pos", pos),),))

    @classmethod
    def tags(cls, *pos: str) -> "FeaturePattern":
        return cls(tuple((FeatureTest("pos", p),) for p in pos))

    def conjoin(self, other: "FeaturePattern") -> "FeaturePattern":
        return FeaturePattern(
            tuple(a + b for a in self.disjuncts for b in other.disjuncts)
        )

    def alternate(self, other: "FeaturePattern") -> "FeaturePattern":
        return FeaturePattern(self.disjuncts + other.disjuncts)

    def set_names(self):
        for conj in self.disjuncts:
            for test in conj:
                if isinstance(test, SetTest):
                    yield test.name


def pattern_matches(
    pattern: FeaturePattern,
    reading: Reading,
    wordform: str,
    sets: dict[str, FeaturePattern] | None = None,
) -> bool:
    """True when some disjunct's tests all hold for the reading."""
    for conj in pattern.disjuncts:
        if _conjunction_matches(conj, reading, wordform, sets):
            return True
    return False


def _conjunction_matches(conj, reading, wordform, sets) -> bool:
    for test in conj:
        if isinstance(test, SetTest):
            if sets is None or test.name not in sets:
                raise UnknownSet(test.name)
            if not pattern_matches(sets[test.name], reading, wordform, sets):
                return False
        elif test.feature == "wordform":
            if wordform != test.value and reading.get("wordform") != test.value:
                return False
        elif reading.get(test.feature) != test.value:
            return False
    return True


# ---------------------------------------------------------------------------
# Conditions and constraints


@dataclass(frozen=True)
class Condition:
    """Context test at a fixed offset or along a star scan.

    ``position`` is the offset from the focus word; when ``star`` is set
    the scan starts there and walks away from the focus (sign gives the
    direction), stopping at the first position where the pattern is
    present, or aborting at a barrier match or the sentence boundary.
    """

    position: int
    pattern: FeaturePattern
    star: bool = False
    careful: bool = False
    negated: bool = False
    barrier: FeaturePattern | None = None

    def __post_init__(self):
        if self.barrier is not None and not self.star:
            raise ValueError("BARRIER is only allowed with star-scan conditions")
        if self.star and self.position == 0:
            raise ValueError("star scan needs a nonzero start offset")

    def offset_key(self):
        """Grouping key: the syntactic position of this condition."""
        return ("*", self.position) if self.star else self.position


class ConstraintKind(enum.Enum):
    WEIGHTED = "weighted"
    SELECT = "SELECT"
    REMOVE = "REMOVE"


@dataclass(frozen=True)
class Constraint:
    """A compatibility value for a target reading in a context.

    ``weight`` is None for hand rules written with a ``?`` weight, to be
    filled in from corpus counts before application.
    """

    kind: ConstraintKind
    target: FeaturePattern
    conditions: tuple[Condition, ...] = ()
    weight: float | None = None

    def __post_init__(self):
        if self.kind is ConstraintKind.WEIGHTED and self.weight is not None:
            if not (self.weight == self.weight and abs(self.weight) != float("inf")):
                raise ValueError("constraint weight must be finite")

    def group_key(self):
        """Multiset of condition offsets; identifies the context shape."""
        return tuple(sorted((c.offset_key() for c in self.conditions), key=repr))


@dataclass(frozen=True)
class Grammar:
    sets: dict[str, FeaturePattern] = field(default_factory=dict)
    constraints: tuple[Constraint, ...] = ()
    strict_select: float = 60.0
    strict_remove: float = -50.0

    def __post_init__(self):
        if not (self.strict_select > 0 > self.strict_remove):
            raise ValueError("need strict_select > 0 > strict_remove")
        for constraint in self.constraints:
            for name in constraint.target.set_names():
                self._check_set(name)
            for cond in constraint.conditions:
                for name in cond.pattern.set_names():
                    self._check_set(name)
                if cond.barrier is not None:
                    for name in cond.barrier.set_names():
                        self._check_set(name)
        for pattern in self.sets.values():
            for name in pattern.set_names():
                self._check_set(name)

    def _check_set(self, name: str, _trail: tuple[str, ...] = ()) -> None:
        if name not in self.sets:
            raise UnknownSet(name)
        if name in _trail:
            raise ValueError(f"set definitions form a cycle: {' -> '.join(_trail + (name,))}")
        for inner in self.sets[name].set_names():
            self._check_set(inner, _trail + (name,))

    def combine(self, other: "Grammar") -> "Grammar":
        """Concatenate constraint sets (model combination)."""
        sets = dict(self.sets)
        sets.update(other.sets)
        return Grammar(sets, self.constraints + other.constraints,
                       self.strict_select, self.strict_remove)


def desugar_strict(grammar: Grammar) -> Grammar:
    """Rewrite SELECT/REMOVE as strong weighted constraints.

    A SELECT only raises its own target; competing readings fall through
    normalization of the weight vector rather than by an explicit
    negative twin.  Idempotent, preserves constraint count.
    """
    out = []
    for c in grammar.constraints:
        if c.kind is ConstraintKind.SELECT:
            out.append(replace(c, kind=ConstraintKind.WEIGHTED, weight=grammar.strict_select))
        elif c.kind is ConstraintKind.REMOVE:
            out.append(replace(c, kind=ConstraintKind.WEIGHTED, weight=grammar.strict_remove))
        else:
            out.append(c)
    return replace(grammar, constraints=tuple(out))


# ---------------------------------------------------------------------------
# Matching against a weighted labelling


@dataclass(frozen=True)
class MatchResult:
    applicable: bool
    context_weight: float


_BOUNDARY_CANDIDATES = (Reading(pos=BOUNDARY),)


def _position_view(sentence, candidates, weights, pos: int):
    """Readings/weights/wordform at pos; boundary pseudo-token outside."""
    if 0 <= pos < len(sentence):
        return candidates[pos], weights[pos], sentence[pos].wordform
    return _BOUNDARY_CANDIDATES, (1.0,), BOUNDARY


def _matched_mass(pattern, readings, wts, wordform, sets) -> float:
    mass = 0.0
    for reading, w in zip(readings, wts):
        if pattern_matches(pattern, reading, wordform, sets):
            mass += w
    return mass


def _present(pattern, readings, wts, wordform, sets, threshold) -> bool:
    for reading, w in zip(readings, wts):
        if w > threshold and pattern_matches(pattern, reading, wordform, sets):
            return True
    return False


def _resolve_condition(
    cond, sentence, candidates, weights, focus, sets, presence_threshold
):
    """Locate the position a condition refers to.

    Returns (resolved, mass): for fixed offsets the position always
    resolves (to the boundary pseudo-token when out of range); star
    scans may fail to resolve.
    """
    if not cond.star:
        view = _position_view(sentence, candidates, weights, focus + cond.position)
        return True, _matched_mass(cond.pattern, *view, sets)

    step = 1 if cond.position > 0 else -1
    pos = focus + cond.position
    n = len(sentence)
    while -1 <= pos <= n:
        view = _position_view(sentence, candidates, weights, pos)
        if _present(cond.pattern, *view, sets, presence_threshold):
            return True, _matched_mass(cond.pattern, *view, sets)
        if cond.barrier is not None and _present(
            cond.barrier, *view, sets, presence_threshold
        ):
            return False, 0.0
        if pos in (-1, n):  # boundary reached, nothing beyond
            break
        pos += step
    return False, 0.0


def evaluate_context(
    constraint: Constraint,
    sentence,
    candidates,
    weights,
    focus: int,
    *,
    sets: dict[str, FeaturePattern] | None = None,
    presence_threshold: float = 0.0,
    careful_mass: float = 0.99,
) -> tuple[bool, float]:
    """Context applicability and weight, independent of the target.

    The context weight is the product over conditions of the matched
    probability mass (or 1 - mass for negated conditions).
    """
    product = 1.0
    for cond in constraint.conditions:
        resolved, mass = _resolve_condition(
            cond, sentence, candidates, weights, focus, sets, presence_threshold
        )
        if resolved and cond.careful and mass < careful_mass:
            resolved, mass = False, 0.0
        factor = mass if resolved else 0.0
        if cond.negated:
            factor = 1.0 - factor
        elif not resolved:
            return False, 0.0
        product *= min(max(factor, 0.0), 1.0)
    return True, product


def target_matches(
    constraint: Constraint,
    reading: Reading,
    wordform: str,
    sets: dict[str, FeaturePattern] | None = None,
) -> bool:
    return pattern_matches(constraint.target, reading, wordform, sets)


def match_constraint(
    constraint: Constraint,
    sentence,
    candidates,
    weights,
    focus: int,
    focus_reading: int,
    presence_threshold: float = 0.0,
    careful_mass: float = 0.99,
    sets: dict[str, FeaturePattern] | None = None,
) -> MatchResult:
    """Match a weighted constraint against reading ``focus_reading`` of
    token ``focus`` under the current labelling weights."""
    if constraint.kind is not ConstraintKind.WEIGHTED:
        raise ValueError("match_constraint requires a desugared (WEIGHTED) constraint")
    reading = candidates[focus][focus_reading]
    if not target_matches(constraint, reading, sentence[focus].wordform, sets):
        return MatchResult(False, 0.0)
    ok, weight = evaluate_context(
        constraint,
        sentence,
        candidates,
        weights,
        focus,
        sets=sets,
        presence_threshold=presence_threshold,
        careful_mass=careful_mass,
    )
    return MatchResult(ok, weight if ok else 0.0)


# ---------------------------------------------------------------------------
# Tokenizer


@dataclass(frozen=True)
class _Tok:
    kind: str  # 'word' | 'str' | 'punct'
    text: str
    line: int
    col: int


_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<comment>\#[^\n]*)
  | (?P<str>"(?:[^"\\]|\\.)*")
  | (?P<punct>[();])
  | (?P<word>[^\s();"#]+)
    """,
    re.VERBOSE,
)


def _tokenize(text: str) -> list[_Tok]:
    tokens = []
    line, col = 1, 1
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise GrammarSyntaxError(line, col, "a recognizable token")
        kind = m.lastgroup
        raw = m.group()
        if kind == "str":
            tokens.append(_Tok("str", raw[1:-1].replace('\\"', '"'), line, col))
        elif kind == "punct":
            tokens.append(_Tok("punct", raw, line, col))
        elif kind == "word":
            tokens.append(_Tok("word", raw, line, col))
        newlines = raw.count("\n")
        if newlines:
            line += newlines
            col = len(raw) - raw.rfind("\n")
        else:
            col += len(raw)
        pos = m.end()
    return tokens


_NUMBER = re.compile(r"[+-]?\d+(\.\d+)?([eE][+-]?\d+)?$")
_POSITION = re.compile(r"(\*?)([+-]?\d+)(C?)$")
_KEYWORDS = {"SELECT", "REMOVE", "SETS", "STRICT", "OR", "NOT", "BARRIER", "+", "?"}


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    def _err(self, expected: str):
        if self.i < len(self.tokens):
            tok = self.tokens[self.i]
            raise GrammarSyntaxError(tok.line, tok.col, expected)
        last = self.tokens[-1] if self.tokens else _Tok("punct", "", 1, 1)
        raise GrammarSyntaxError(last.line, last.col + len(last.text), expected)

    def peek(self, ahead: int = 0) -> _Tok | None:
        j = self.i + ahead
        return self.tokens[j] if j < len(self.tokens) else None

    def next(self, expected: str) -> _Tok:
        tok = self.peek()
        if tok is None:
            self._err(expected)
        self.i += 1
        return tok

    def expect(self, text: str):
        tok = self.next(repr(text))
        if tok.text != text:
            self.i -= 1
            self._err(repr(text))

    def parse(self) -> Grammar:
        sets: dict[str, FeaturePattern] = {}
        constraints: list[Constraint] = []
        strict_select, strict_remove = 60.0, -50.0
        while self.peek() is not None:
            tok = self.peek()
            if tok.kind == "word" and tok.text == "SETS":
                self.i += 1
                continue
            if tok.kind == "word" and tok.text == "STRICT":
                self.i += 1
                strict_select = self._number("strict SELECT value")
                strict_remove = self._number("strict REMOVE value")
                self.expect(";")
                continue
            nxt = self.peek(1)
            if (
                tok.kind == "word"
                and tok.text not in _KEYWORDS
                and not _NUMBER.match(tok.text)
                and nxt is not None
                and nxt.text == "="
            ):
                self.i += 2
                sets[tok.text] = self._pattern()
                self.expect(";")
                continue
            constraints.append(self._constraint())
        return Grammar(sets, tuple(constraints), strict_select, strict_remove)

    def _number(self, what: str) -> float:
        tok = self.next(what)
        if tok.kind != "word" or not _NUMBER.match(tok.text):
            self.i -= 1
            self._err(what)
        return float(tok.text)

    def _constraint(self) -> Constraint:
        tok = self.next("a weight, '?', SELECT or REMOVE")
        kind, weight = ConstraintKind.WEIGHTED, None
        if tok.text == "SELECT":
            kind = ConstraintKind.SELECT
        elif tok.text == "REMOVE":
            kind = ConstraintKind.REMOVE
        elif tok.text == "?":
            pass
        elif tok.kind == "word" and _NUMBER.match(tok.text):
            weight = float(tok.text)
        else:
            self.i -= 1
            self._err("a weight, '?', SELECT or REMOVE")
        target = self._pattern()
        conditions = []
        while True:
            tok = self.peek()
            if tok is None:
                self._err("a condition or ';'")
            if tok.text == ";":
                self.i += 1
                break
            conditions.append(self._condition())
        return Constraint(kind, target, tuple(conditions), weight)

    def _condition(self) -> Condition:
        self.expect("(")
        negated = False
        tok = self.peek()
        if tok is not None and tok.text == "NOT":
            negated = True
            self.i += 1
        postok = self.next("a position like -1, 1C or *-1")
        m = _POSITION.match(postok.text) if postok.kind == "word" else None
        if m is None:
            self.i -= 1
            self._err("a position like -1, 1C or *-1")
        star = bool(m.group(1))
        position = int(m.group(2))
        careful = bool(m.group(3))
        if star and position == 0:
            self.i -= 1
            self._err("a nonzero star-scan start offset")
        pattern = self._pattern()
        barrier = None
        tok = self.peek()
        if tok is not None and tok.text == "BARRIER":
            if not star:
                self._err("BARRIER only after a star-scan position")
            self.i += 1
            barrier = self._pattern()
        self.expect(")")
        return Condition(position, pattern, star, careful, negated, barrier)

    def _pattern(self) -> FeaturePattern:
        pattern = self._group()
        while True:
            tok = self.peek()
            if tok is not None and tok.text == "+":
                self.i += 1
                pattern = pattern.conjoin(self._group())
            else:
                return pattern

    def _group(self) -> FeaturePattern:
        pattern = self._atom()
        while True:
            tok = self.peek()
            if tok is not None and tok.text == "OR":
                self.i += 1
                pattern = pattern.alternate(self._atom())
            else:
                return pattern

    def _atom(self) -> FeaturePattern:
        tok = self.next("a pattern atom")
        if tok.kind == "word" and tok.text == BOUNDARY:
            return FeaturePattern.tag(BOUNDARY)
        if tok.kind == "word" and tok.text not in _KEYWORDS and tok.text != "(":
            return FeaturePattern(((SetTest(tok.text),),))
        if tok.text != "(":
            self.i -= 1
            self._err("a pattern atom")
        tests: list = []
        while True:
            inner = self.next("a literal or ')'")
            if inner.text == ")" and inner.kind == "punct":
                break
            tests.append(self._literal(inner))
        if not tests:
            self._err("at least one literal in the atom")
        return FeaturePattern((tuple(tests),))

    def _literal(self, tok: _Tok):
        if tok.kind == "str":
            return FeatureTest("wordform", tok.text)
        if tok.kind != "word":
            self.i -= 1
            self._err("a literal")
        if tok.text.startswith("&"):
            return SetTest(tok.text[1:])
        if "=" in tok.text:
            key, _, value = tok.text.partition("=")
            return FeatureTest(key, value)
        return FeatureTest("pos", tok.text)


def parse_grammar(text: str) -> Grammar:
    """Parse grammar text; raises GrammarSyntaxError / UnknownSet."""
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# Serialization


def _format_weight(w: float) -> str:
    return repr(w)


def _serialize_conjunction(conj) -> str:
    parts = []
    for test in conj:
        if isinstance(test, SetTest):
            parts.append(f"&{test.name}")
        elif test.feature == "wordform":
            parts.append(f'"{test.value}"')
        elif test.feature == "pos":
            parts.append(test.value)
        else:
            parts.append(f"{test.feature}={test.value}")
    return "(" + " ".join(parts) + ")"


def serialize_pattern(pattern: FeaturePattern) -> str:
    return " OR ".join(_serialize_conjunction(c) for c in pattern.disjuncts)


def _serialize_condition(cond: Condition) -> str:
    pos = f"{'*' if cond.star else ''}{cond.position}{'C' if cond.careful else ''}"
    inner = f"{'NOT ' if cond.negated else ''}{pos} {serialize_pattern(cond.pattern)}"
    if cond.barrier is not None:
        inner += f" BARRIER {serialize_pattern(cond.barrier)}"
    return f"({inner})"


def serialize_grammar(grammar: Grammar) -> str:
    """Emit grammar text; parse(serialize(g)) structurally equals g."""
    lines = []
    if (grammar.strict_select, grammar.strict_remove) != (60.0, -50.0):
        lines.append(
            f"STRICT {_format_weight(grammar.strict_select)} "
            f"{_format_weight(grammar.strict_remove)};"
        )
    if grammar.sets:
        lines.append("SETS")
        for name in sorted(grammar.sets):
            lines.append(f"{name} = {serialize_pattern(grammar.sets[name])};")
        lines.append("")
    for c in grammar.constraints:
        if c.kind is ConstraintKind.WEIGHTED:
            head = "?" if c.weight is None else _format_weight(c.weight)
        else:
            head = c.kind.value
        lines.append(f"{head} {serialize_pattern(c.target)}")
        for cond in c.conditions:
            lines.append(f"    {_serialize_condition(cond)}")
        lines[-1] += ";"
    return "\n".join(lines) + "\n"
