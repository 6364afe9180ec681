"""Tests for the extended CG parser, serializer and weighted matcher."""

import pytest
from hypothesis import given, strategies as st

from relaxtag.corpus import Reading, Sentence, Token
from relaxtag.grammar import (
    Condition,
    Constraint,
    ConstraintKind,
    FeaturePattern,
    FeatureTest,
    Grammar,
    GrammarSyntaxError,
    UnknownSet,
    desugar_strict,
    match_constraint,
    parse_grammar,
    serialize_grammar,
)

BIGRAM_RULE = "4.846532 (VB)\n          (-1 (MD));\n"

REMOVE_RULE = (
    "REMOVE (@>N)\n"
    "       (NOT 0 (DET) OR (NUM) OR (A))\n"
    "       (1C (CC))\n"
    "       (2C (DET));\n"
)


def sent(*words):
    return Sentence([Token(w) for w in words])


def readings(*poses):
    return tuple(Reading(pos=p) for p in poses)


class TestParse:
    def test_weighted_bigram_constraint(self):
        g = parse_grammar(BIGRAM_RULE)
        assert len(g.constraints) == 1
        c = g.constraints[0]
        assert c.kind is ConstraintKind.WEIGHTED
        assert c.weight == 4.846532
        assert c.target == FeaturePattern.tag("VB")
        assert len(c.conditions) == 1
        cond = c.conditions[0]
        assert cond.position == -1 and not cond.star and not cond.careful
        assert cond.pattern == FeaturePattern.tag("MD")

    def test_remove_with_negation_and_careful(self):
        g = parse_grammar(REMOVE_RULE)
        c = g.constraints[0]
        assert c.kind is ConstraintKind.REMOVE
        assert c.target == FeaturePattern.tag("@>N")
        negated, careful1, careful2 = c.conditions
        assert negated.negated and negated.position == 0
        assert negated.pattern == FeaturePattern.tags("DET", "NUM", "A")
        assert careful1.careful and careful1.position == 1
        assert careful2.careful and careful2.position == 2

    def test_unterminated_statement_is_syntax_error(self):
        with pytest.raises(GrammarSyntaxError):
            parse_grammar("10 (VBN) (-1 (MD)")

    def test_syntax_error_carries_location(self):
        with pytest.raises(GrammarSyntaxError) as err:
            parse_grammar("10 (VBN)\n(oops (MD));")
        assert err.value.line == 2

    def test_unknown_set_reference(self):
        with pytest.raises(UnknownSet) as err:
            parse_grammar("10 (VBN) (*-1 VAUX);")
        assert err.value.name == "VAUX"

    def test_star_scan_with_barrier_and_set_arithmetic(self):
        text = (
            "SETS\n"
            'VAUX = ("have") OR ("be");\n'
            "10 (VBN)\n"
            "   (*-1 VAUX + (VBD) OR (VB) BARRIER (VBN) OR (IN));\n"
        )
        g = parse_grammar(text)
        cond = g.constraints[0].conditions[0]
        assert cond.star and cond.position == -1
        assert cond.barrier is not None
        # VAUX + (A OR B) distributes into two conjunctions
        assert len(cond.pattern.disjuncts) == 2
        assert all(len(conj) == 2 for conj in cond.pattern.disjuncts)

    def test_quoted_wordform_targets(self):
        g = parse_grammar('10 ("as" RB)\n   (2 ("as"));\n-10 (DT "all")\n   (1 (RB));')
        first, second = g.constraints
        assert FeatureTest("wordform", "as") in first.target.disjuncts[0]
        assert FeatureTest("pos", "RB") in first.target.disjuncts[0]
        assert FeatureTest("wordform", "all") in second.target.disjuncts[0]

    def test_question_mark_weight_parses_as_pending(self):
        g = parse_grammar("? (NN)\n  (-1 (DT));")
        assert g.constraints[0].kind is ConstraintKind.WEIGHTED
        assert g.constraints[0].weight is None

    def test_strict_directive(self):
        g = parse_grammar("STRICT 8.0 -4.0;\nSELECT (A);")
        assert g.strict_select == 8.0
        assert g.strict_remove == -4.0

    def test_boundary_literal_in_scan(self):
        g = parse_grammar("REMOVE (@>N)\n  (*1C <<< OR (@V) OR (@CS) BARRIER (@NH));")
        cond = g.constraints[0].conditions[0]
        assert cond.careful and cond.star and cond.position == 1
        assert FeatureTest("pos", "<<<") in cond.pattern.disjuncts[0]


class TestSerialize:
    def test_paper_examples_roundtrip_structurally(self):
        for text in (BIGRAM_RULE, REMOVE_RULE):
            g = parse_grammar(text)
            assert parse_grammar(serialize_grammar(g)) == g

    def test_sets_block_precedes_constraints(self):
        g = parse_grammar('SETS\nDET = (DT) OR (PDT);\n1.5 (NN) (-1 DET);')
        out = serialize_grammar(g)
        assert out.index("SETS") < out.index("1.5")
        assert parse_grammar(out) == g

    def test_weight_precision_survives(self):
        g = parse_grammar(BIGRAM_RULE)
        assert "4.846532" in serialize_grammar(g)

    def test_pending_weight_roundtrip(self):
        g = parse_grammar("? (NN)\n  (-1 (DT));")
        assert parse_grammar(serialize_grammar(g)) == g

    def test_nondefault_strict_values_roundtrip(self):
        g = parse_grammar("STRICT 8.0 -4.0;\nSELECT (A);")
        again = parse_grammar(serialize_grammar(g))
        assert (again.strict_select, again.strict_remove) == (8.0, -4.0)


class TestDesugar:
    def test_select_becomes_strong_positive(self):
        g = parse_grammar("SELECT (@NH);")
        out = desugar_strict(g)
        assert out.constraints[0].kind is ConstraintKind.WEIGHTED
        assert out.constraints[0].weight == 60.0

    def test_remove_becomes_weaker_negative(self):
        g = parse_grammar("REMOVE (@>N);")
        out = desugar_strict(g)
        assert out.constraints[0].weight == -50.0

    def test_identity_without_strict_rules(self):
        g = parse_grammar(BIGRAM_RULE)
        assert desugar_strict(g) == g

    def test_idempotent_and_count_preserving(self):
        g = parse_grammar("SELECT (A);\nREMOVE (B);\n1.0 (C);")
        once = desugar_strict(g)
        assert desugar_strict(once) == once
        assert len(once.constraints) == len(g.constraints)


def weighted(target_pos, conditions, weight=1.0):
    return Constraint(
        ConstraintKind.WEIGHTED, FeaturePattern.tag(target_pos), tuple(conditions), weight
    )


class TestMatch:
    def test_certain_context_gives_full_weight(self):
        c = weighted("VB", [Condition(-1, FeaturePattern.tag("MD"))])
        s = sent("can", "run")
        candidates = (readings("MD"), readings("VB", "NN"))
        weights = ((1.0,), (0.6, 0.4))
        result = match_constraint(c, s, candidates, weights, 1, 0)
        assert result.applicable
        assert result.context_weight == pytest.approx(1.0)

    def test_context_weight_is_product_of_masses(self):
        c = weighted(
            "X",
            [Condition(-1, FeaturePattern.tag("A")), Condition(1, FeaturePattern.tag("B"))],
        )
        s = sent("l", "m", "r")
        candidates = (readings("A", "C"), readings("X"), readings("B", "C"))
        weights = ((0.5, 0.5), (1.0,), (0.8, 0.2))
        result = match_constraint(c, s, candidates, weights, 1, 0)
        assert result.context_weight == pytest.approx(0.40)

    def test_nonmatching_target_is_inapplicable(self):
        c = weighted("VB", [])
        s = sent("cat")
        result = match_constraint(c, s, (readings("NN"),), ((1.0,),), 0, 0)
        assert not result.applicable and result.context_weight == 0.0

    def test_barrier_blocks_scan(self):
        # auxiliary two words left, but a VBN-bearing token in between
        g = parse_grammar(
            'SETS\nVAUX = ("have");\n'
            "10 (VBN) (*-1 VAUX BARRIER (VBN));"
        )
        c = g.constraints[0]
        s = sent("have", "broken", "broken")
        candidates = (readings("VBP"), readings("VBN", "JJ"), readings("VBN", "JJ"))
        weights = ((1.0,), (0.5, 0.5), (0.5, 0.5))
        blocked = match_constraint(c, s, candidates, weights, 2, 0, sets=g.sets)
        assert not blocked.applicable
        # without the offending middle token the scan reaches the auxiliary
        s2 = sent("have", "quickly", "broken")
        candidates2 = (readings("VBP"), readings("RB"), readings("VBN", "JJ"))
        weights2 = ((1.0,), (1.0,), (0.5, 0.5))
        found = match_constraint(c, s2, candidates2, weights2, 2, 0, sets=g.sets)
        assert found.applicable
        assert found.context_weight == pytest.approx(1.0)

    def test_out_of_range_offset_matches_only_boundary(self):
        hits = weighted("X", [Condition(-1, FeaturePattern.tag("<<<"))])
        misses = weighted("X", [Condition(-1, FeaturePattern.tag("A"))])
        s = sent("w")
        candidates = (readings("X"),)
        weights = ((1.0,),)
        assert match_constraint(hits, s, candidates, weights, 0, 0).context_weight == 1.0
        assert match_constraint(misses, s, candidates, weights, 0, 0).context_weight == 0.0

    def test_negated_condition_inverts_mass(self):
        c = weighted(
            "X", [Condition(-1, FeaturePattern.tag("A"), negated=True)]
        )
        s = sent("l", "r")
        candidates = (readings("A", "B"), readings("X"))
        weights = ((0.3, 0.7), (1.0,))
        result = match_constraint(c, s, candidates, weights, 1, 0)
        assert result.context_weight == pytest.approx(0.7)

    def test_fully_matched_negative_condition_zeroes_influence(self):
        c = weighted("X", [Condition(-1, FeaturePattern.tag("A"), negated=True)])
        s = sent("l", "r")
        result = match_constraint(c, s, (readings("A"), readings("X")), ((1.0,), (1.0,)), 1, 0)
        assert result.applicable
        assert result.context_weight == 0.0

    def test_careful_requires_high_mass(self):
        c = weighted("X", [Condition(-1, FeaturePattern.tag("A"), careful=True)])
        s = sent("l", "r")
        candidates = (readings("A", "B"), readings("X"))
        sure = match_constraint(c, s, candidates, ((0.995, 0.005), (1.0,)), 1, 0)
        unsure = match_constraint(c, s, candidates, ((0.6, 0.4), (1.0,)), 1, 0)
        assert sure.applicable and sure.context_weight == pytest.approx(0.995)
        assert not unsure.applicable

    def test_one_hot_weights_recover_classical_cg(self):
        # star-scan presence <=> the unique (weight-1) reading matches,
        # careful <=> unambiguous match
        c = parse_grammar("10 (X) (*1C (B));").constraints[0]
        s = sent("x", "a", "b")
        candidates = (readings("X"), readings("A", "B"), readings("B", "C"))
        one_hot_on_b = ((1.0,), (0.0, 1.0), (1.0, 0.0))
        r = match_constraint(c, s, candidates, one_hot_on_b, 0, 0)
        assert r.applicable and r.context_weight == 1.0
        one_hot_off = ((1.0,), (1.0, 0.0), (0.0, 1.0))
        # scan skips position 1 (B weightless), stops at position 2? No:
        # B at position 2 has weight 0 there too, so nothing matches.
        r2 = match_constraint(c, s, candidates, one_hot_off, 0, 0)
        assert not r2.applicable


def naive_match(constraint, sentence, candidates, weights, focus, focus_reading, sets=None):
    """Reference matcher rewritten directly from the documented
    semantics, kept independent of the production code paths."""
    from relaxtag.grammar import pattern_matches

    def view(pos):
        if 0 <= pos < len(sentence):
            return candidates[pos], weights[pos], sentence[pos].wordform
        return (Reading(pos="<<<"),), (1.0,), "<<<"

    def mass_at(pattern, pos):
        rs, ws, wf = view(pos)
        return sum(w for r, w in zip(rs, ws) if pattern_matches(pattern, r, wf, sets))

    def present_at(pattern, pos):
        rs, ws, wf = view(pos)
        return any(w > 0.0 and pattern_matches(pattern, r, wf, sets) for r, w in zip(rs, ws))

    reading = candidates[focus][focus_reading]
    if not pattern_matches(constraint.target, reading, sentence[focus].wordform, sets):
        return False, 0.0
    product = 1.0
    for cond in constraint.conditions:
        if cond.star:
            pos = focus + cond.position
            step = 1 if cond.position > 0 else -1
            resolved = False
            while -1 <= pos <= len(sentence):
                if present_at(cond.pattern, pos):
                    resolved = True
                    break
                if cond.barrier is not None and present_at(cond.barrier, pos):
                    break
                if pos == -1 or pos == len(sentence):
                    break
                pos += step
            mass = mass_at(cond.pattern, pos) if resolved else 0.0
        else:
            resolved, mass = True, mass_at(cond.pattern, focus + cond.position)
        if resolved and cond.careful and mass < 0.99:
            resolved, mass = False, 0.0
        factor = mass if resolved else 0.0
        if cond.negated:
            factor = 1.0 - factor
        elif not resolved:
            return False, 0.0
        product *= factor
    return True, product


@given(data=st.data())
def test_matcher_agrees_with_naive_reference(data):
    tags = ["A", "B", "C"]
    n = data.draw(st.integers(min_value=2, max_value=5))
    words = sent(*[f"w{i}" for i in range(n)])
    candidates = []
    weights = []
    for _ in range(n):
        m = data.draw(st.integers(min_value=1, max_value=3))
        chosen = data.draw(st.permutations(tags))[:m]
        raw = [data.draw(st.floats(min_value=0.01, max_value=1.0)) for _ in range(m)]
        total = sum(raw)
        candidates.append(readings(*chosen))
        weights.append(tuple(v / total for v in raw))
    conditions = []
    for _ in range(data.draw(st.integers(min_value=0, max_value=2))):
        star = data.draw(st.booleans())
        position = data.draw(st.sampled_from([-2, -1, 1, 2]))
        pattern = FeaturePattern.tag(data.draw(st.sampled_from(tags)))
        barrier = None
        if star and data.draw(st.booleans()):
            barrier = FeaturePattern.tag(data.draw(st.sampled_from(tags)))
        conditions.append(
            Condition(
                position,
                pattern,
                star=star,
                careful=data.draw(st.booleans()),
                negated=data.draw(st.booleans()),
                barrier=barrier,
            )
        )
    constraint = weighted(data.draw(st.sampled_from(tags)), conditions)
    focus = data.draw(st.integers(min_value=0, max_value=n - 1))
    focus_reading = data.draw(st.integers(min_value=0, max_value=len(candidates[focus]) - 1))
    result = match_constraint(constraint, words, candidates, weights, focus, focus_reading)
    expected_ok, expected_weight = naive_match(
        constraint, words, candidates, weights, focus, focus_reading
    )
    assert result.applicable == expected_ok
    assert result.context_weight == pytest.approx(expected_weight, abs=1e-12)
    assert 0.0 <= result.context_weight <= 1.0


@given(data=st.data())
def test_roundtrip_on_generated_grammars(data):
    tags = ["NN", "VB", "DT", "@>N"]
    n_constraints = data.draw(st.integers(min_value=1, max_value=4))
    constraints = []
    for _ in range(n_constraints):
        kind = data.draw(st.sampled_from(list(ConstraintKind)))
        weight = None
        if kind is ConstraintKind.WEIGHTED:
            weight = data.draw(
                st.floats(min_value=-100, max_value=100, allow_nan=False).map(
                    lambda x: round(x, 6)
                )
            )
        conditions = []
        for _ in range(data.draw(st.integers(min_value=0, max_value=2))):
            star = data.draw(st.booleans())
            conditions.append(
                Condition(
                    data.draw(st.sampled_from([-2, -1, 1, 2])),
                    FeaturePattern.tags(*data.draw(st.permutations(tags))[:2]),
                    star=star,
                    careful=data.draw(st.booleans()),
                    negated=data.draw(st.booleans()),
                    barrier=FeaturePattern.tag(data.draw(st.sampled_from(tags)))
                    if star and data.draw(st.booleans())
                    else None,
                )
            )
        constraints.append(
            Constraint(kind, FeaturePattern.tag(data.draw(st.sampled_from(tags))),
                       tuple(conditions), weight)
        )
    grammar = Grammar(constraints=tuple(constraints))
    assert parse_grammar(serialize_grammar(grammar)) == grammar
