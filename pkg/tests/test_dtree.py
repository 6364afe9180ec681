"""Tests for decision-tree learning, pruning and constraint translation."""

import itertools

import pytest

from relaxtag.corpus import AmbiguityClass, parse_tagged_corpus
from relaxtag.dtree import (
    EmptyClass,
    Example,
    InsufficientExamples,
    Leaf,
    Split,
    TreeParams,
    accuracy,
    classify,
    dump_tree,
    extract_examples,
    learn_tree,
    node_count,
    parse_tree,
    prune_tree,
    split_examples,
    tree_to_grammar,
)
from relaxtag.grammar import parse_grammar, serialize_grammar
from relaxtag.stats import CompatibilityMeasure

IN_RB = AmbiguityClass(("IN", "RB"), frozenset({"as", "once"}))


def in_rb_corpus():
    # one sentence mirroring the classic IN-RB training context
    text = "v\tVB\nd\tDT\nn\tNN\nas\tIN\nd2\tDT\nj\tJJ\n"
    return parse_tagged_corpus(text)


class TestExtract:
    def test_context_window_shape(self):
        examples = extract_examples(in_rb_corpus(), IN_RB)
        assert len(examples) == 1
        ex = examples[0]
        assert ex.klass == "IN"
        assert ex.get("form") == "as"
        assert [ex.get(a) for a in ("-3", "-2", "-1", "1", "2")] == [
            "VB", "DT", "NN", "DT", "JJ",
        ]

    def test_sentence_start_pads_with_boundary(self):
        corpus = parse_tagged_corpus("as\tRB\nsoon\tRB\n")
        ex = extract_examples(corpus, IN_RB)[0]
        assert [ex.get(a) for a in ("-3", "-2", "-1")] == ["<<<", "<<<", "<<<"]
        assert ex.get("2") == "<<<"

    def test_one_example_per_occurrence(self):
        text = "as\tIN\nx\tNN\n\nonce\tRB\ny\tNN\n\nas\tRB\nz\tNN\n"
        examples = extract_examples(parse_tagged_corpus(text), IN_RB)
        assert len(examples) == 3

    def test_empty_class_raises(self):
        with pytest.raises(EmptyClass):
            extract_examples(parse_tagged_corpus("x\tNN\n"), IN_RB)


def xor_examples(repeats=2):
    examples = []
    for a, b in itertools.product("01", repeat=2):
        klass = "E" if a == b else "O"
        for _ in range(repeats):
            examples.append(Example.make({"-1": a, "1": b}, klass))
    return examples


def table_classifier(examples):
    """Brute-force lookup oracle: memorize every attribute combination."""
    table = {ex.attributes: ex.klass for ex in examples}
    return lambda ex: table[ex.attributes]


class TestLearn:
    def test_pure_node_is_single_leaf(self):
        examples = [Example.make({"-1": "DT", "1": "NN"}, "IN")] * 5
        tree = learn_tree(examples, TreeParams(min_leaf=1))
        assert isinstance(tree, Leaf)
        assert tree.probability("IN") > 0.9

    def test_xor_needs_depth_two_and_memorizes(self):
        examples = xor_examples()
        tree = learn_tree(examples, TreeParams(min_leaf=1, purity_stop=1.0))
        assert isinstance(tree, Split)
        assert any(isinstance(child, Split) for _, child in tree.branches)
        oracle = table_classifier(examples)
        assert all(classify(tree, ex) == oracle(ex) for ex in examples)
        assert accuracy(tree, examples) == 1.0

    def test_insufficient_examples(self):
        with pytest.raises(InsufficientExamples):
            learn_tree(xor_examples()[:3], TreeParams(min_leaf=10))

    def test_branches_partition_observed_values(self):
        corpus = make_noisy_corpus(seed=0)
        examples = extract_examples(corpus, IN_RB)
        tree = learn_tree(examples, TreeParams(min_leaf=2))

        def check(node, examples_here):
            if isinstance(node, Leaf):
                return
            observed = {ex.get(node.attr) for ex in examples_here}
            groups = [values for values, _ in node.branches]
            union = set().union(*groups)
            assert observed <= union
            for g1, g2 in itertools.combinations(groups, 2):
                assert not (g1 & g2)
            for values, child in node.branches:
                check(child, [ex for ex in examples_here if ex.get(node.attr) in values])

        check(tree, examples)

    def test_deterministic(self):
        examples = xor_examples(repeats=3)
        t1 = learn_tree(examples, TreeParams(min_leaf=1))
        t2 = learn_tree(list(reversed(examples)), TreeParams(min_leaf=1))
        assert t1 == t2

    def test_leaf_distributions_sum_to_one(self):
        corpus = make_noisy_corpus(seed=1)
        tree = learn_tree(extract_examples(corpus, IN_RB), TreeParams(min_leaf=2))

        def walk(node):
            if isinstance(node, Leaf):
                assert sum(p for _, p in node.distribution) == pytest.approx(1.0, abs=1e-9)
                return
            for _, child in node.branches:
                walk(child)

        walk(tree)


def make_noisy_corpus(seed, n=120):
    """Corpus where 'as' is IN after a verbish left tag, RB otherwise,
    with some label noise to make pruning worthwhile."""
    import numpy as np

    rng = np.random.RandomState(seed)
    blocks = []
    for _ in range(n):
        left = rng.choice(["VB", "NN", "DT"])
        right = rng.choice(["DT", "JJ"])
        true = "IN" if left == "VB" else "RB"
        if rng.rand() < 0.15:
            true = "RB" if true == "IN" else "IN"
        blocks.append(f"l\t{left}\nas\t{true}\nr\t{right}")
    return parse_tagged_corpus("\n\n".join(blocks) + "\n")


class TestPrune:
    def test_leaf_stays_leaf(self):
        leaf = learn_tree([Example.make({"-1": "A", "1": "B"}, "X")] * 4, TreeParams(min_leaf=1))
        holdout = [Example.make({"-1": "A", "1": "B"}, "X")]
        assert prune_tree(leaf, holdout) == leaf

    def test_pruned_is_never_larger(self):
        corpus = make_noisy_corpus(seed=3)
        examples = extract_examples(corpus, IN_RB)
        params = TreeParams(min_leaf=2, purity_stop=1.0)
        train, holdout = split_examples(examples, params)
        tree = learn_tree(train, params)
        pruned = prune_tree(tree, holdout)
        assert node_count(pruned) <= node_count(tree)

    def test_holdout_accuracy_never_drops(self):
        for seed in range(4):
            corpus = make_noisy_corpus(seed=seed)
            examples = extract_examples(corpus, IN_RB)
            params = TreeParams(min_leaf=2, purity_stop=1.0, seed=seed)
            train, holdout = split_examples(examples, params)
            tree = learn_tree(train, params)
            pruned = prune_tree(tree, holdout)
            assert accuracy(pruned, holdout) >= accuracy(tree, holdout)


def count_leaf_classes(node):
    """Independent oracle: (leaf, class-with-nonzero-count) pairs."""
    if isinstance(node, Leaf):
        return sum(1 for _, n in node.counts if n > 0)
    return sum(count_leaf_classes(child) for _, child in node.branches)


class TestToGrammar:
    def test_single_leaf_single_class(self):
        tree = learn_tree([Example.make({"-1": "DT", "1": "NN"}, "IN")] * 4,
                          TreeParams(min_leaf=1))
        grammar = tree_to_grammar(tree, {"IN": 0.7, "RB": 0.3}, IN_RB)
        assert len(grammar.constraints) == 1
        assert grammar.constraints[0].conditions == ()

    def test_constraint_count_equals_nonzero_leaf_classes(self):
        corpus = make_noisy_corpus(seed=5)
        examples = extract_examples(corpus, IN_RB)
        tree = learn_tree(examples, TreeParams(min_leaf=2))
        counts = {"IN": 0, "RB": 0}
        for ex in examples:
            counts[ex.klass] += 1
        priors = {c: n / len(examples) for c, n in counts.items()}
        grammar = tree_to_grammar(tree, priors, IN_RB)
        assert len(grammar.constraints) == count_leaf_classes(tree)

    def test_weight_sign_tracks_leaf_vs_prior(self):
        corpus = make_noisy_corpus(seed=6)
        examples = extract_examples(corpus, IN_RB)
        tree = learn_tree(examples, TreeParams(min_leaf=2))
        counts = {"IN": 0, "RB": 0}
        for ex in examples:
            counts[ex.klass] += 1
        priors = {c: n / len(examples) for c, n in counts.items()}
        grammar = tree_to_grammar(tree, priors, IN_RB, CompatibilityMeasure.MUTUAL_INFO)

        def leaf_for(node, conditions):
            # replay the constraint path against the tree
            if isinstance(node, Leaf):
                return node
            offset = None
            for cond in conditions:
                if (cond.position, cond.star) == (int(node.attr), False):
                    offset = cond
            values = {t.value for t in offset.pattern.disjuncts[0]} | {
                t.value for conj in offset.pattern.disjuncts for t in conj
            }
            for group, child in node.branches:
                if values <= group:
                    return leaf_for(child, conditions)
            raise AssertionError("no branch matched the constraint path")

        for c in grammar.constraints:
            klass = c.target.disjuncts[0][0].value
            leaf = leaf_for(tree, c.conditions)
            if leaf.probability(klass) > priors[klass]:
                assert c.weight > 0
            elif leaf.probability(klass) < priors[klass]:
                assert c.weight < 0

    def test_form_attribute_becomes_position_zero_wordform(self):
        # two distinct forms pushed to behave differently
        blocks = []
        for _ in range(30):
            blocks.append("as\tIN\nx\tDT")
            blocks.append("once\tRB\nx\tDT")
        corpus = parse_tagged_corpus("\n\n".join(blocks) + "\n")
        examples = extract_examples(corpus, IN_RB)
        tree = learn_tree(examples, TreeParams(min_leaf=2))
        grammar = tree_to_grammar(tree, {"IN": 0.5, "RB": 0.5}, IN_RB)
        zero_conditions = [
            cond
            for c in grammar.constraints
            for cond in c.conditions
            if cond.position == 0
        ]
        assert zero_conditions, "form split should appear as 0-position conditions"
        features = {t.feature for cond in zero_conditions for conj in cond.pattern.disjuncts for t in conj}
        assert features == {"wordform"}

    def test_condition_offsets_stay_in_window(self):
        corpus = make_noisy_corpus(seed=7)
        examples = extract_examples(corpus, IN_RB)
        tree = learn_tree(examples, TreeParams(min_leaf=2))
        grammar = tree_to_grammar(tree, {"IN": 0.5, "RB": 0.5}, IN_RB)
        for c in grammar.constraints:
            for cond in c.conditions:
                assert cond.position in (-3, -2, -1, 0, 1, 2)

    def test_emitted_grammar_survives_roundtrip(self):
        corpus = make_noisy_corpus(seed=8)
        examples = extract_examples(corpus, IN_RB)
        tree = learn_tree(examples, TreeParams(min_leaf=2))
        grammar = tree_to_grammar(tree, {"IN": 0.5, "RB": 0.5}, IN_RB)
        assert parse_grammar(serialize_grammar(grammar)) == grammar


def test_dump_parse_roundtrip():
    corpus = make_noisy_corpus(seed=9)
    examples = extract_examples(corpus, IN_RB)
    tree = learn_tree(examples, TreeParams(min_leaf=2))
    again = parse_tree(dump_tree(tree))
    assert again == tree
