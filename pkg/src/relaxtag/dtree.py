"""Statistical decision trees per ambiguity class, translated to constraints.

One tree is learned per ambiguity class from the gold contexts of its
member words (pos tags at offsets -3..-1,+1,+2 plus the wordform).
Branches split on all values of the chosen attribute, then value groups
whose class distributions show no significant difference under a
chi-squared test are joined.  Trees are post-pruned on a holdout split
by the minimal cost-complexity sequence, and every root-to-leaf path
becomes one weighted constraint per class present at the leaf.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

from scipy.stats import chi2 as _chi2

from .corpus import BOUNDARY, AmbiguityClass, Corpus
from .grammar import (
    Condition,
    Constraint,
    ConstraintKind,
    FeaturePattern,
    FeatureTest,
    Grammar,
)
from .stats import CompatibilityMeasure, compatibility_from_probs

#: Context attributes: pos at these offsets, plus the focus wordform.
WINDOW = (-3, -2, -1, 1, 2)
FORM_ATTR = "form"
ATTRIBUTES = tuple(str(o) for o in WINDOW) + (FORM_ATTR,)

LEAF_LAMBDA = 0.5  # Lidstone smoothing of leaf class distributions


class EmptyClass(ValueError):
    pass


class InsufficientExamples(ValueError):
    pass


@dataclass(frozen=True)
class Example:
    """One disambiguation case: context attribute values and the gold tag."""

    attributes: tuple[tuple[str, str], ...]
    klass: str

    @classmethod
    def make(cls, attributes: dict[str, str], klass: str) -> "Example":
        return cls(tuple(sorted(attributes.items())), klass)

    def get(self, attr: str) -> str:
        for key, value in self.attributes:
            if key == attr:
                return value
        raise KeyError(attr)


@dataclass(frozen=True)
class Leaf:
    distribution: tuple[tuple[str, float], ...]
    support: int
    counts: tuple[tuple[str, int], ...]

    def probability(self, klass: str) -> float:
        return dict(self.distribution).get(klass, 0.0)


@dataclass(frozen=True)
class Split:
    attr: str
    branches: tuple[tuple[frozenset, "TreeNode"], ...]
    counts: tuple[tuple[str, int], ...]


TreeNode = Leaf | Split


@dataclass(frozen=True)
class TreeParams:
    min_leaf: int = 10
    chi2_confidence: float = 0.95
    purity_stop: float = 0.99
    holdout_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be positive")
        if not 0 < self.chi2_confidence < 1:
            raise ValueError("chi2_confidence must be in (0,1)")
        if not 0.5 < self.purity_stop <= 1:
            raise ValueError("purity_stop must be in (0.5,1]")
        if not 0 < self.holdout_fraction < 1:
            raise ValueError("holdout_fraction must be in (0,1)")


def extract_examples(corpus: Corpus, cls: AmbiguityClass) -> list[Example]:
    """One example per corpus occurrence of a member wordform, with pos
    context padded by ``<<<`` at sentence boundaries."""
    examples = []
    for sentence in corpus:
        gold = [tok.gold.pos for tok in sentence]
        for i, token in enumerate(sentence):
            if token.wordform not in cls.members:
                continue
            attrs = {FORM_ATTR: token.wordform}
            for offset in WINDOW:
                k = i + offset
                attrs[str(offset)] = gold[k] if 0 <= k < len(gold) else BOUNDARY
            examples.append(Example.make(attrs, gold[i]))
    if not examples:
        raise EmptyClass(f"no occurrences of class {cls.name}")
    return examples


def split_examples(
    examples: list[Example], params: TreeParams
) -> tuple[list[Example], list[Example]]:
    """Seeded stratified train/holdout split (about 90/10 by default)."""
    import numpy as np

    rng = np.random.default_rng(params.seed)
    by_class: dict[str, list[int]] = {}
    for idx, ex in enumerate(examples):
        by_class.setdefault(ex.klass, []).append(idx)
    holdout_idx = set()
    for klass in sorted(by_class):
        idx = by_class[klass]
        k = max(1, round(len(idx) * params.holdout_fraction)) if len(idx) > 1 else 0
        picked = rng.permutation(len(idx))[:k]
        holdout_idx.update(idx[p] for p in picked)
    train = [ex for i, ex in enumerate(examples) if i not in holdout_idx]
    holdout = [ex for i, ex in enumerate(examples) if i in holdout_idx]
    return train, holdout


# ---------------------------------------------------------------------------
# Attribute selection


def _entropy(counts) -> float:
    total = sum(counts)
    h = 0.0
    for n in counts:
        if n:
            p = n / total
            h -= p * math.log2(p)
    return h


def gain_ratio(examples: list[Example], attr: str) -> float | None:
    """Information gain of splitting on attr, normalized by split info.

    None when the attribute cannot split (fewer than two values).
    """
    by_value: dict[str, Counter] = {}
    for ex in examples:
        by_value.setdefault(ex.get(attr), Counter())[ex.klass] += 1
    if len(by_value) < 2:
        return None
    root = Counter(ex.klass for ex in examples)
    total = len(examples)
    gain = _entropy(root.values())
    for counter in by_value.values():
        gain -= sum(counter.values()) / total * _entropy(counter.values())
    split_info = _entropy([sum(c.values()) for c in by_value.values()])
    return gain / split_info if split_info > 0 else None


# ---------------------------------------------------------------------------
# Chi-squared group merging


def _chi2_pvalue(a: Counter, b: Counter) -> float:
    """Homogeneity test p-value between two class-count rows."""
    classes = sorted(set(a) | set(b))
    cols = [(a.get(c, 0), b.get(c, 0)) for c in classes]
    cols = [col for col in cols if col[0] + col[1] > 0]
    if len(cols) < 2:
        return 1.0
    row_a = sum(col[0] for col in cols)
    row_b = sum(col[1] for col in cols)
    total = row_a + row_b
    if row_a == 0 or row_b == 0:
        return 1.0
    stat = 0.0
    for col in cols:
        col_total = col[0] + col[1]
        for observed, row in ((col[0], row_a), (col[1], row_b)):
            expected = row * col_total / total
            if expected > 0:
                stat += (observed - expected) ** 2 / expected
    dof = len(cols) - 1
    return float(_chi2.sf(stat, dof))


def _merge_groups(by_value: dict[str, list[Example]], confidence: float):
    """Greedily join the most similar value groups while their class
    distributions are not significantly different; a split always keeps
    at least two groups."""
    groups: list[tuple[set, list[Example]]] = [
        ({v}, list(exs)) for v, exs in sorted(by_value.items())
    ]
    counters = [Counter(ex.klass for ex in exs) for _, exs in groups]
    while len(groups) > 2:
        best = None
        for i in range(len(groups)):
            for j in range(i + 1, len(groups)):
                p = _chi2_pvalue(counters[i], counters[j])
                if best is None or p > best[0]:
                    best = (p, i, j)
        p, i, j = best
        if p < 1.0 - confidence:
            break  # every remaining pair differs significantly
        groups[i] = (groups[i][0] | groups[j][0], groups[i][1] + groups[j][1])
        counters[i] = counters[i] + counters[j]
        del groups[j], counters[j]
    return [(frozenset(values), exs) for values, exs in groups]


# ---------------------------------------------------------------------------
# Tree construction


def _leaf(examples: list[Example], classes: tuple[str, ...]) -> Leaf:
    counts = Counter(ex.klass for ex in examples)
    n = len(examples)
    k = len(classes)
    dist = tuple(
        (c, (counts.get(c, 0) + LEAF_LAMBDA) / (n + LEAF_LAMBDA * k)) for c in classes
    )
    return Leaf(dist, n, tuple((c, counts.get(c, 0)) for c in classes))


def learn_tree(
    examples: list[Example],
    params: TreeParams,
    selector=gain_ratio,
) -> TreeNode:
    """Top-down induction with chi-squared branch merging.

    Recursion stops on purity, node size below min_leaf, or exhausted
    attributes; leaves hold Lidstone-smoothed class distributions over
    the classes observed at the root.
    """
    if len(examples) < params.min_leaf:
        raise InsufficientExamples(
            f"{len(examples)} examples, need at least {params.min_leaf}"
        )
    classes = tuple(sorted({ex.klass for ex in examples}))
    attributes = {name for name, _ in examples[0].attributes}
    return _build(examples, attributes, classes, params, selector)


def _build(examples, available, classes, params, selector) -> TreeNode:
    counts = Counter(ex.klass for ex in examples)
    purity = max(counts.values()) / len(examples)
    if (
        len(examples) < params.min_leaf
        or purity >= params.purity_stop
        or not available
    ):
        return _leaf(examples, classes)

    best_attr, best_score = None, None
    for attr in sorted(available):
        score = selector(examples, attr)
        if score is None:
            continue
        if best_score is None or score > best_score:
            best_attr, best_score = attr, score
    if best_attr is None:
        return _leaf(examples, classes)

    by_value: dict[str, list[Example]] = {}
    for ex in examples:
        by_value.setdefault(ex.get(best_attr), []).append(ex)
    merged = _merge_groups(by_value, params.chi2_confidence)
    remaining = available - {best_attr}
    branches = tuple(
        (values, _build(exs, remaining, classes, params, selector))
        for values, exs in merged
    )
    node_counts = tuple((c, counts.get(c, 0)) for c in classes)
    return Split(best_attr, branches, node_counts)


# ---------------------------------------------------------------------------
# Classification and pruning


def _argmax_class(counts: tuple[tuple[str, int], ...]) -> str:
    return min(counts, key=lambda cn: (-cn[1], cn[0]))[0]


def classify(tree: TreeNode, example: Example) -> str:
    node = tree
    while isinstance(node, Split):
        value = example.get(node.attr)
        for values, child in node.branches:
            if value in values:
                node = child
                break
        else:
            return _argmax_class(node.counts)  # unseen value: back off here
    return _argmax_class(node.counts)


def accuracy(tree: TreeNode, examples: list[Example]) -> float:
    if not examples:
        return 0.0
    hits = sum(classify(tree, ex) == ex.klass for ex in examples)
    return hits / len(examples)


def node_count(tree: TreeNode) -> int:
    if isinstance(tree, Leaf):
        return 1
    return 1 + sum(node_count(child) for _, child in tree.branches)


def _leaf_error(node: TreeNode) -> int:
    """Training misclassifications of the subtree's leaves."""
    if isinstance(node, Leaf):
        return node.support - max(n for _, n in node.counts)
    return sum(_leaf_error(child) for _, child in node.branches)


def _own_error(node: TreeNode) -> int:
    """Training misclassifications if the node were collapsed to a leaf."""
    total = sum(n for _, n in node.counts)
    return total - max(n for _, n in node.counts)


def _leaves(node: TreeNode) -> int:
    if isinstance(node, Leaf):
        return 1
    return sum(_leaves(child) for _, child in node.branches)


def _collapse(node: TreeNode, targets: set[int]) -> TreeNode:
    if id(node) in targets:
        counts = node.counts
        n = sum(c for _, c in counts)
        k = len(counts)
        dist = tuple((c, (m + LEAF_LAMBDA) / (n + LEAF_LAMBDA * k)) for c, m in counts)
        return Leaf(dist, n, counts)
    if isinstance(node, Leaf):
        return node
    return Split(
        node.attr,
        tuple((values, _collapse(child, targets)) for values, child in node.branches),
        node.counts,
    )


def cost_complexity_sequence(tree: TreeNode) -> list[TreeNode]:
    """Nested sequence from the full tree down to a single leaf, pruning
    the weakest links (smallest error increase per saved leaf) first."""
    sequence = [tree]
    current = tree
    while isinstance(current, Split):
        alphas: list[tuple[float, int]] = []

        def visit(node):
            if isinstance(node, Leaf):
                return
            leaves = _leaves(node)
            g = (_own_error(node) - _leaf_error(node)) / (leaves - 1)
            alphas.append((g, id(node)))
            for _, child in node.branches:
                visit(child)

        visit(current)
        weakest = min(g for g, _ in alphas)
        targets = {node_id for g, node_id in alphas if g <= weakest + 1e-12}
        current = _collapse(current, targets)
        sequence.append(current)
    return sequence


def prune_tree(tree: TreeNode, holdout: list[Example]) -> TreeNode:
    """Member of the cost-complexity sequence with the best holdout
    accuracy; ties go to the smaller tree."""
    if not holdout:
        raise ValueError("holdout must be nonempty")
    best, best_acc = tree, accuracy(tree, holdout)
    for candidate in cost_complexity_sequence(tree)[1:]:
        acc = accuracy(candidate, holdout)
        if acc >= best_acc:  # sequence shrinks, so >= prefers smaller trees
            best, best_acc = candidate, acc
    return best


# ---------------------------------------------------------------------------
# Translation to constraints


def tree_to_grammar(
    tree: TreeNode,
    priors: dict[str, float],
    cls: AmbiguityClass,
    measure: CompatibilityMeasure = CompatibilityMeasure.MUTUAL_INFO,
    log_base: float = 2.0,
) -> Grammar:
    """One constraint per root-to-leaf path and class present at the leaf.

    Path tests become conditions at their context offsets (the wordform
    attribute becomes a 0-position test; merged value groups become OR
    lists); the weight compares the leaf class probability against the
    class prior.
    """
    total_prior = sum(priors.values())
    if abs(total_prior - 1.0) > 1e-9 or any(p <= 0 for p in priors.values()):
        raise ValueError("priors must be positive and sum to 1")
    total = sum(n for _, n in tree.counts)
    constraints: list[Constraint] = []

    def walk(node: TreeNode, path):
        if isinstance(node, Split):
            for values, child in node.branches:
                walk(child, path + [(node.attr, values)])
            return
        p_e = node.support / total if total else 0.0
        for klass, count in node.counts:
            if count == 0:
                continue
            p_leaf = node.probability(klass)
            p_h = priors[klass]
            weight = compatibility_from_probs(p_h, p_e, p_leaf * p_e, measure, log_base)
            conditions = []
            for attr, values in path:
                if attr == FORM_ATTR:
                    pattern = FeaturePattern(
                        tuple((FeatureTest("wordform", v),) for v in sorted(values))
                    )
                    conditions.append(Condition(0, pattern))
                else:
                    pattern = FeaturePattern.tags(*sorted(values))
                    conditions.append(Condition(int(attr), pattern))
            conditions.sort(key=lambda c: c.position)
            constraints.append(
                Constraint(
                    ConstraintKind.WEIGHTED,
                    FeaturePattern.tag(klass),
                    tuple(conditions),
                    weight,
                )
            )

    walk(tree, [])
    return Grammar(constraints=tuple(constraints))


def constraints_per_tree(tree: TreeNode) -> int:
    """Independent count of what tree_to_grammar will emit: the number of
    (leaf, class-with-nonzero-count) pairs."""
    if isinstance(tree, Leaf):
        return sum(1 for _, n in tree.counts if n > 0)
    return sum(constraints_per_tree(child) for _, child in tree.branches)


# ---------------------------------------------------------------------------
# Text dump (re-parseable)


def dump_tree(tree: TreeNode, indent: int = 0) -> str:
    pad = "  " * indent
    if isinstance(tree, Leaf):
        pairs = " ".join(f"{c}:{p!r}" for c, p in tree.distribution)
        return f"{pad}leaf support={tree.support} {pairs}\n"
    out = f"{pad}split {tree.attr}\n"
    for values, child in tree.branches:
        out += f"{pad}  group {'|'.join(sorted(values))}\n"
        out += dump_tree(child, indent + 2)
    return out


def parse_tree(text: str) -> TreeNode:
    lines = [l for l in text.split("\n") if l.strip()]
    node, rest = _parse_node(lines, 0)
    if rest:
        raise ValueError("trailing content after tree")
    return node


def _depth(line: str) -> int:
    return (len(line) - len(line.lstrip(" "))) // 2


def _parse_node(lines: list[str], depth: int):
    head = lines[0].strip()
    if head.startswith("leaf "):
        fields = head.split()
        support = int(fields[1].split("=")[1])
        dist = []
        for pair in fields[2:]:
            klass, _, prob = pair.rpartition(":")
            dist.append((klass, float(prob)))
        k = len(dist)
        counts = tuple(
            (c, round(p * (support + LEAF_LAMBDA * k) - LEAF_LAMBDA)) for c, p in dist
        )
        return Leaf(tuple(dist), support, counts), lines[1:]
    if not head.startswith("split "):
        raise ValueError(f"unexpected line: {head!r}")
    attr = head.split(" ", 1)[1]
    rest = lines[1:]
    branches = []
    while rest and _depth(rest[0]) == depth + 1 and rest[0].strip().startswith("group "):
        values = frozenset(rest[0].strip().split(" ", 1)[1].split("|"))
        child, rest = _parse_node(rest[1:], depth + 2)
        branches.append((values, child))
    counts: Counter = Counter()
    for _, child in branches:
        for klass, n in child.counts:
            counts[klass] += n
    node_counts = tuple(sorted(counts.items()))
    return Split(attr, tuple(branches), node_counts), rest
