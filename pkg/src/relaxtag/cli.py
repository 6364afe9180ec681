"""Command-line surface: training, tagging, evaluation and sweeps.

Subcommands: gen-synthetic, train-ngrams, learn-trees, weight-grammar,
tag, eval, sweep-norm.  Exit status is 0 on success, 1 on usage errors
and 2 on data errors.  A plain key=value config file can preload any
flag's default; explicit flags win.

Fully disambiguated output mirrors the corpus TSV.  When several
readings survive (threshold decoding) their pos values are joined by
``|`` in the pos column, followed by one feature column per reading
(``-`` when a reading has no extra features).
"""

from __future__ import annotations

import argparse
import sys
import warnings
from dataclasses import replace

import numpy as np

from . import baselines, dtree, engine, evaluate, figures, ngrams
from .corpus import (
    Corpus,
    EmptyCorpus,
    InvalidDistribution,
    Lexicon,
    MalformedLine,
    Reading,
    Sentence,
    Token,
    ambiguity_classes,
    build_lexicon,
    parse_hmm_spec,
    parse_lexicon,
    parse_tagged_corpus,
    sample_synthetic_corpus,
    serialize_corpus,
    serialize_lexicon,
)
from .grammar import Grammar, GrammarSyntaxError, UnknownSet, desugar_strict, parse_grammar, serialize_grammar
from .stats import CompatibilityMeasure, SmoothingSpec

SUBCOMMANDS = (
    "train-ngrams",
    "learn-trees",
    "weight-grammar",
    "tag",
    "eval",
    "sweep-norm",
    "gen-synthetic",
)

_DATA_ERRORS = (
    MalformedLine,
    EmptyCorpus,
    InvalidDistribution,
    GrammarSyntaxError,
    UnknownSet,
    evaluate.LengthMismatch,
    baselines.SearchSpaceTooLarge,
    ngrams.MissingFeature,
    dtree.EmptyClass,
    dtree.InsufficientExamples,
    engine.NoCandidates,
    engine.DomainViolation,
    ValueError,
    OSError,
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# Shared IO helpers


def _read(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    with open(path, encoding="utf-8") as handle:
        return handle.read()


def _write(path: str, text: str) -> None:
    if path == "-":
        sys.stdout.write(text)
        return
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(text)


def _load_corpus(path: str) -> Corpus:
    return parse_tagged_corpus(_read(path))


def _load_lexicon(args, corpus: Corpus | None = None) -> Lexicon:
    if getattr(args, "lexicon", None):
        return parse_lexicon(_read(args.lexicon))
    if getattr(args, "lexicon_corpus", None):
        return build_lexicon(_load_corpus(args.lexicon_corpus))
    if corpus is None:
        raise UsageError("--lexicon or --lexicon-corpus is required here")
    return build_lexicon(corpus)


def _load_grammars(paths: list[str]) -> Grammar:
    grammar = None
    for path in paths:
        g = parse_grammar(_read(path))
        grammar = g if grammar is None else grammar.combine(g)
    if grammar is None:
        raise UsageError("at least one --grammar is required")
    return grammar


def _measure(args) -> CompatibilityMeasure:
    return CompatibilityMeasure(args.measure)


def _smoothing(args, vocab: int) -> SmoothingSpec:
    if getattr(args, "mle", False):
        return SmoothingSpec.mle()
    return SmoothingSpec.lidstone(args.lidstone, vocab)


def _parse_sentences(text: str) -> list[Sentence]:
    """Input sentences for tagging: corpus TSV, or bare wordforms one per
    line with blank-line sentence breaks."""
    if "\t" in text:
        return list(parse_tagged_corpus(text).sentences)
    sentences, current = [], []
    for raw in text.split("\n"):
        line = raw.strip()
        if line.startswith("#"):
            continue
        if not line:
            if current:
                sentences.append(Sentence(current))
                current = []
            continue
        current.append(Token(line))
    if current:
        sentences.append(Sentence(current))
    if not sentences:
        raise EmptyCorpus("no input sentences")
    return sentences


def render_predictions(sentences: list[Sentence], decoded: list[list[list[Reading]]]) -> str:
    lines = []
    for sentence, readings_per_token in zip(sentences, decoded):
        for token, readings in zip(sentence, readings_per_token):
            if len(readings) == 1:
                cols = [token.wordform, readings[0].pos]
                cols.extend(f"{k}={v}" for k, v in readings[0].extras())
            else:
                cols = [token.wordform, "|".join(r.pos for r in readings)]
                for reading in readings:
                    extras = ",".join(f"{k}={v}" for k, v in reading.extras())
                    cols.append(extras or "-")
            lines.append("\t".join(cols))
        lines.append("")
    return "\n".join(lines)


def parse_predictions(text: str) -> list[list[Reading]]:
    """Per-token proposed reading sets from a prediction file."""
    out: list[list[Reading]] = []
    for line_no, raw in enumerate(text.split("\n"), start=1):
        line = raw.rstrip("\r")
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) < 2:
            raise MalformedLine(line_no, "expected wordform<TAB>pos")
        if "|" not in fields[1]:
            feats = {}
            for item in fields[2:]:
                key, eq, value = item.partition("=")
                if not eq:
                    raise MalformedLine(line_no, f"expected key=value, got {item!r}")
                feats[key] = value
            feats["pos"] = fields[1]
            out.append([Reading(feats)])
            continue
        poses = fields[1].split("|")
        readings = []
        for k, pos in enumerate(poses):
            feats = {"pos": pos}
            col = fields[2 + k] if 2 + k < len(fields) else "-"
            if col not in ("-", ""):
                for item in col.split(","):
                    key, eq, value = item.partition("=")
                    if not eq:
                        raise MalformedLine(line_no, f"expected key=value, got {item!r}")
                    feats[key] = value
            readings.append(Reading(feats))
        out.append(readings)
    return out


# ---------------------------------------------------------------------------
# Subcommand implementations


def _cmd_gen_synthetic(args) -> int:
    spec = parse_hmm_spec(_read(args.spec))
    corpus = sample_synthetic_corpus(spec, args.sentences, args.seed, args.max_len)
    _write(args.out, serialize_corpus(corpus))
    return 0


def _cmd_train_ngrams(args) -> int:
    corpus = _load_corpus(args.corpus)
    measure = _measure(args)
    if args.lexicon_out:
        _write(args.lexicon_out, serialize_lexicon(build_lexicon(corpus)))

    def table(order):
        return ngrams.collect_ngrams(corpus, order, args.feature)

    if args.order == "both":
        bi, tri = table(2), table(3)
        if args.backoff_k is None:
            raise UsageError("--order both needs --backoff-k")
        smoothing = _smoothing(args, len(tri.unigram) ** 3)
        grammar = ngrams.build_backoff_grammar(
            bi, tri, ngrams.BackoffSpec(args.backoff_k), measure, smoothing
        )
    else:
        order = int(args.order)
        tbl = table(order)
        smoothing = _smoothing(args, len(tbl.unigram) ** order)
        grammar = ngrams.acquire_ngram_grammar(tbl, measure, smoothing)
        if args.table_out:
            _write(args.table_out, ngrams.serialize_ngram_table(tbl))
    _write(args.out, serialize_grammar(grammar))
    return 0


def _cmd_learn_trees(args) -> int:
    corpus = _load_corpus(args.corpus)
    lexicon = build_lexicon(corpus)
    classes = ambiguity_classes(lexicon)
    if args.top:
        classes = classes[: args.top]
    params = dtree.TreeParams(
        min_leaf=args.min_leaf,
        chi2_confidence=args.chi2_confidence,
        purity_stop=args.purity_stop,
        holdout_fraction=args.holdout,
        seed=args.seed,
    )
    grammar = Grammar()
    learned = 0
    for cls in classes:
        examples = dtree.extract_examples(corpus, cls)
        if len(examples) < 2 * params.min_leaf:
            continue
        train, holdout = dtree.split_examples(examples, params)
        if len(train) < params.min_leaf:
            continue
        tree = dtree.learn_tree(train, params)
        if holdout:
            tree = dtree.prune_tree(tree, holdout)
        counts = {}
        for ex in examples:
            counts[ex.klass] = counts.get(ex.klass, 0) + 1
        priors = {c: n / len(examples) for c, n in counts.items()}
        grammar = grammar.combine(dtree.tree_to_grammar(tree, priors, cls, _measure(args)))
        learned += 1
        if args.dump_dir:
            _write(f"{args.dump_dir}/{cls.name}.tree", dtree.dump_tree(tree))
    if learned == 0:
        raise EmptyCorpus("no ambiguity class had enough examples")
    _write(args.out, serialize_grammar(grammar))
    return 0


def _cmd_weight_grammar(args) -> int:
    grammar = parse_grammar(_read(args.grammar))
    corpus = _load_corpus(args.corpus)
    smoothing = _smoothing(args, max(len(corpus.tagset), 2))
    with warnings.catch_warnings():
        warnings.simplefilter("always")
        weighted = ngrams.weight_hand_grammar(grammar, corpus, _measure(args), smoothing)
    _write(args.out, serialize_grammar(weighted))
    return 0


def _relax_params(args) -> engine.RelaxParams:
    update = engine.UpdateFn(
        kind=engine.UpdateKind(args.update),
        t0=args.boltzmann_t0,
        cooling=args.boltzmann_cooling,
        stochastic=args.stochastic,
    )
    return engine.RelaxParams(
        support=engine.SupportFn(args.support),
        update=update,
        norm_factor=args.norm_factor,
        epsilon=args.epsilon,
        max_iters=args.max_iters,
        presence_threshold=args.presence_threshold,
        careful_mass=args.careful_mass,
        init=engine.InitMode(args.init),
        init_seed=args.seed,
        stochastic_seed=args.seed,
        influence_threshold=args.influence_threshold,
    )


def _decode_mode(args) -> engine.DecodeMode:
    if args.decode == "argmax":
        return engine.Argmax()
    if args.decode == "threshold":
        return engine.Threshold(args.theta)
    return engine.Forced(args.seed, args.theta)


def _cmd_tag(args) -> int:
    sentences = _parse_sentences(_read(args.infile))
    lexicon = _load_lexicon(args)
    params = _relax_params(args)
    mode = _decode_mode(args)

    model = None
    if args.model_corpus:
        model = engine.build_sequence_model(_load_corpus(args.model_corpus), lexicon)
    if params.support is engine.SupportFn.SEQUENCE and model is None:
        raise UsageError("--support sequence needs --model-corpus")
    if args.method in ("viterbi", "brute-force") and model is None:
        raise UsageError(f"--method {args.method} needs --model-corpus")

    grammar = tri = hand = None
    if args.method == "relax" and params.support is not engine.SupportFn.SEQUENCE:
        grammar = desugar_strict(_load_grammars(args.grammar))
    elif args.method == "relax":
        if args.tri_grammar:
            tri = desugar_strict(parse_grammar(_read(args.tri_grammar)))
        if args.hand_grammar:
            hand = desugar_strict(parse_grammar(_read(args.hand_grammar)))

    decoded = []
    diag_list: list[engine.IterationDiagnostics] = []
    for sentence in sentences:
        if args.method == "most-likely":
            readings = [[r] for r in baselines.most_likely_tag(sentence, lexicon)]
        elif args.method == "viterbi":
            readings = [[r] for r in baselines.viterbi_tag(sentence, lexicon, model)]
        elif args.method == "brute-force":
            readings = [[r] for r in baselines.brute_force_tag(sentence, lexicon, model)]
        else:
            labelling, diagnostics = engine.relax(
                sentence, lexicon, grammar, params, model, tri, hand
            )
            readings = engine.decode(labelling, mode)
            diag_list.append(diagnostics)
        decoded.append(readings)
    _write(args.out, render_predictions(sentences, decoded))
    if args.diagnostics_csv and diag_list:
        rows = []
        header = ""
        for index, diagnostics in enumerate(diag_list):
            lines = diagnostics.to_csv().splitlines()
            header = "sentence," + lines[0]
            rows.extend(f"{index},{line}" for line in lines[1:])
        _write(args.diagnostics_csv, header + "\n" + "\n".join(rows) + "\n")
    if args.figure and diag_list:
        figures.plot_diagnostics(diag_list[0], args.figure)
    return 0


def _cmd_eval(args) -> int:
    gold = _load_corpus(args.gold)
    predicted = parse_predictions(_read(args.pred))
    lexicon = _load_lexicon(args, gold)
    if all(len(readings) == 1 for readings in predicted):
        report = evaluate.evaluate_full(gold, [r[0] for r in predicted], lexicon)
    else:
        report = evaluate.evaluate_partial(gold, predicted, lexicon)
    sys.stdout.write(report.to_text())
    if args.csv:
        _write(args.csv, report.to_csv())
    if args.figure:
        figures.plot_eval_report(report, args.figure)
    return 0


def _cmd_sweep_norm(args) -> int:
    corpus = _load_corpus(args.corpus)
    rng = np.random.default_rng(args.seed)
    order = rng.permutation(len(corpus.sentences))
    n_tuning = max(1, int(len(corpus.sentences) * args.tuning_fraction))
    tuning_idx = set(order[:n_tuning].tolist())
    tuning = [corpus.sentences[i] for i in sorted(tuning_idx)]
    training = Corpus([s for i, s in enumerate(corpus.sentences) if i not in tuning_idx])

    lexicon = _load_lexicon(args, training) if not args.lexicon else _load_lexicon(args)
    if args.grammar:
        grammar = desugar_strict(_load_grammars(args.grammar))
    else:
        table = ngrams.collect_ngrams(training, 2)
        grammar = ngrams.acquire_ngram_grammar(table, _measure(args))

    kappas = args.kappas
    if isinstance(kappas, str):  # value came from a config file
        kappas = [float(x) for x in kappas.split(",")]
    rows = []
    for kappa in kappas:
        params = replace(_relax_params(args), norm_factor=kappa)
        iters, converged, predicted = [], 0, []
        for sentence in tuning:
            labelling, diagnostics = engine.relax(sentence, lexicon, grammar, params)
            iters.append(diagnostics.iterations)
            converged += diagnostics.converged
            predicted.extend(r[0] for r in engine.decode(labelling, engine.Argmax()))
        gold_tuning = Corpus(tuning)
        report = evaluate.evaluate_full(gold_tuning, predicted, lexicon)
        accuracy = (
            report.ambiguous_accuracy
            if report.ambiguous_accuracy is not None
            else report.overall_accuracy
        )
        rows.append(
            {
                "kappa": kappa,
                "iterations": sum(iters) / len(iters),
                "converged_fraction": converged / len(tuning),
                "accuracy": accuracy,
            }
        )
    lines = ["kappa,iterations,converged_fraction,accuracy"]
    for row in rows:
        lines.append(
            f"{row['kappa']},{row['iterations']},{row['converged_fraction']},{row['accuracy']}"
        )
    _write(args.out, "\n".join(lines) + "\n")
    if args.figure:
        figures.plot_norm_sweep(rows, args.figure)
    return 0


# ---------------------------------------------------------------------------
# Argument parsing


def _add_measure_flags(parser):
    parser.add_argument(
        "--measure",
        default="mutual-info",
        choices=[m.value for m in CompatibilityMeasure],
        help="compatibility measure (default: %(default)s)",
    )
    parser.add_argument("--lidstone", type=float, default=0.5,
                        help="Lidstone lambda (default: %(default)s)")
    parser.add_argument("--mle", action="store_true",
                        help="use plain MLE instead of Lidstone smoothing")


def _add_relax_flags(parser):
    parser.add_argument("--support", default="sum",
                        choices=[f.value for f in engine.SupportFn])
    parser.add_argument("--update", default="centered",
                        choices=[k.value for k in engine.UpdateKind])
    parser.add_argument("--norm-factor", type=float, default=10.0,
                        help="support normalization factor kappa (default: %(default)s)")
    parser.add_argument("--epsilon", type=float, default=1e-4)
    parser.add_argument("--max-iters", type=int, default=500)
    parser.add_argument("--presence-threshold", type=float, default=0.0)
    parser.add_argument("--careful-mass", type=float, default=0.99)
    parser.add_argument("--influence-threshold", type=float, default=0.0)
    parser.add_argument("--init", default="lexical",
                        choices=[m.value for m in engine.InitMode])
    parser.add_argument("--boltzmann-t0", type=float, default=1.0)
    parser.add_argument("--boltzmann-cooling", type=float, default=0.9)
    parser.add_argument("--stochastic", action="store_true",
                        help="sample one-hot labellings in the Boltzmann update")
    parser.add_argument("--seed", type=int, default=0)


def build_parser(config: dict | None = None) -> _Parser:
    parser = _Parser(prog="relaxtag", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="sample a gold corpus from a chain spec")
    p.add_argument("--spec", required=True)
    p.add_argument("--sentences", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-len", type=int, default=200)
    p.add_argument("--out", default="-")
    p.set_defaults(func=_cmd_gen_synthetic)

    p = sub.add_parser("train-ngrams", help="corpus to n-gram constraint grammar")
    p.add_argument("--corpus", required=True)
    p.add_argument("--order", default="2", choices=["2", "3", "both"])
    p.add_argument("--feature", default="pos")
    p.add_argument("--backoff-k", type=int, default=None,
                   help="with --order both: trigram attestation threshold")
    p.add_argument("--table-out", default=None, help="also dump the raw count table")
    p.add_argument("--lexicon-out", default=None,
                   help="also write the lexicon derived from the corpus")
    p.add_argument("--out", default="-")
    _add_measure_flags(p)
    p.set_defaults(func=_cmd_train_ngrams)

    p = sub.add_parser("learn-trees", help="decision-tree constraints per ambiguity class")
    p.add_argument("--corpus", required=True)
    p.add_argument("--top", type=int, default=0, help="learn only the N largest classes")
    p.add_argument("--min-leaf", type=int, default=10)
    p.add_argument("--chi2-confidence", type=float, default=0.95)
    p.add_argument("--purity-stop", type=float, default=0.99)
    p.add_argument("--holdout", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dump-dir", default=None, help="also dump one .tree file per class")
    p.add_argument("--out", default="-")
    _add_measure_flags(p)
    p.set_defaults(func=_cmd_learn_trees)

    p = sub.add_parser("weight-grammar", help="fill ? weights of a hand grammar from a corpus")
    p.add_argument("--grammar", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", default="-")
    _add_measure_flags(p)
    p.set_defaults(func=_cmd_weight_grammar)

    p = sub.add_parser("tag", help="disambiguate input sentences")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--lexicon", default=None)
    p.add_argument("--lexicon-corpus", default=None,
                   help="derive the lexicon from this gold corpus instead")
    p.add_argument("--grammar", action="append", default=[],
                   help="constraint grammar file; repeatable, sets concatenate")
    p.add_argument("--method", default="relax",
                   choices=["relax", "most-likely", "viterbi", "brute-force"])
    p.add_argument("--model-corpus", default=None,
                   help="training corpus for the sequence model (sequence support, HMM baselines)")
    p.add_argument("--tri-grammar", default=None)
    p.add_argument("--hand-grammar", default=None)
    p.add_argument("--decode", default="argmax", choices=["argmax", "threshold", "forced"])
    p.add_argument("--theta", type=float, default=0.5)
    p.add_argument("--diagnostics-csv", default=None)
    p.add_argument("--figure", default=None,
                   help="render iteration diagnostics of the first sentence to this file")
    p.add_argument("--out", default="-")
    _add_relax_flags(p)
    p.set_defaults(func=_cmd_tag)

    p = sub.add_parser("eval", help="score predictions against a gold corpus")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--lexicon", default=None)
    p.add_argument("--lexicon-corpus", default=None,
                   help="derive the lexicon from this corpus (default: the gold file)")
    p.add_argument("--csv", default=None)
    p.add_argument("--figure", default=None)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("sweep-norm", help="normalization-factor grid on a tuning split")
    p.add_argument("--corpus", required=True)
    p.add_argument("--lexicon", default=None)
    p.add_argument("--grammar", action="append", default=[])
    p.add_argument("--kappas", type=lambda s: [float(x) for x in s.split(",")],
                   default=[5.0, 10.0, 20.0, 50.0, 100.0])
    p.add_argument("--tuning-fraction", type=float, default=0.1)
    p.add_argument("--out", default="-")
    p.add_argument("--figure", default=None)
    _add_measure_flags(p)
    _add_relax_flags(p)
    p.set_defaults(func=_cmd_sweep_norm)

    if config:
        for subparser in sub.choices.values():
            subparser.set_defaults(**config)
            for action in subparser._actions:
                if action.required and action.dest in config:
                    action.required = False
    return parser


def _coerce(value: str):
    lowered = value.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    for converter in (int, float):
        try:
            return converter(value)
        except ValueError:
            continue
    return value


def _load_config(argv: list[str]) -> dict:
    path = None
    for i, arg in enumerate(argv):
        if arg == "--config" and i + 1 < len(argv):
            path = argv[i + 1]
        elif arg.startswith("--config="):
            path = arg.split("=", 1)[1]
    if path is None:
        return {}
    config = {}
    for raw in _read(path).split("\n"):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, eq, value = line.partition("=")
        if not eq:
            raise MalformedLine(0, f"config line is not key=value: {line!r}")
        config[key.strip().replace("-", "_")] = _coerce(value.strip())
    return config


def _strip_config(argv: list[str]) -> list[str]:
    out, skip = [], False
    for arg in argv:
        if skip:
            skip = False
            continue
        if arg == "--config":
            skip = True
            continue
        if arg.startswith("--config="):
            continue
        out.append(arg)
    return out


def dispatch(argv: list[str]) -> int:
    """Run one subcommand; returns the process exit status."""
    try:
        config = _load_config(argv)
        parser = build_parser(config)
        args = parser.parse_args(_strip_config(argv))
        return args.func(args)
    except UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return 1
    except _DATA_ERRORS as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
