"""
N-best Reranking Toolkit - command-line entry point.

Counts corpora, trains the language models, adds LM features to N-best
lists, tunes log-linear weights with MERT and selects the best
hypotheses. Run ``python app.py <command> --help`` for per-command flags
and file formats.
"""
import os
import sys
import json
import logging
import argparse
from typing import Dict, List, Optional, Sequence, Tuple

import pandas as pd
import plotly.graph_objects as go

from utils.config_utils import MODEL_TYPES, PipelineConfig
from utils.corpus_utils import (NGramCountTable, NormalizationPolicy, TokenSequence, Vocabulary, apply_cutoff,
                                count_corpus_parallel, merge_tables, normalize, read_count_files,
                                read_text_corpus, sniff_count_order, token_frequencies, write_count_file)
from utils.countlm_utils import CountLM, estimate_jm_weights, read_weight_buckets, write_weight_buckets
from utils.chunkparse_utils import (ParserLM, load_basenp_model, load_link_model, read_gold_file,
                                    save_model_json, train_basenp, train_linkmodel)
from utils.errors import IllConditionedFitError, RerankToolkitError, UsageError
from utils.io_utils import atomic_write, export_manifest_to_json, open_text
from utils.mert_utils import (MertProblem, bleu, optimize, read_references, read_weights,
                              write_mert_log, write_weights)
from utils.rerank_utils import (DECODER_SCORE, WeightVector, add_lm_feature, attach_sources,
                                loglinear_select, read_nbest, read_selection, write_nbest, write_selection)
from utils.smoothing_utils import (CountOfCounts, SentenceScorer, UniformModel, estimate_alpha,
                                   extrapolate_count_of_counts, perplexity, read_arpa, read_coc_file,
                                   train_kn, write_arpa, write_coc_file)
from utils.taglm_utils import (TagInventory, estimate_static_weights, load_joint_model, mix_components,
                                read_tagged_corpus, save_joint_model, train_joint)

logger = logging.getLogger(__name__)

COUNT_SUFFIX = ".counts"
VOCAB_SUFFIX = ".vocab"


def count_file_path(prefix: str, order: int) -> str:
    return f"{prefix}.{order}{COUNT_SUFFIX}"


def _policy(config: PipelineConfig) -> NormalizationPolicy:
    return NormalizationPolicy(lowercase=config.lowercase, map_numbers=config.map_numbers)


def _manifest(command: str, config: PipelineConfig, inputs: Sequence[str], outputs: Sequence[str],
              parameters: Optional[Dict] = None):
    export_manifest_to_json(outputs[0], command, [p for p in inputs if p], outputs,
                            config.seed, config.threads, parameters)


def _load_counts(config: PipelineConfig, vocab: Vocabulary) -> NGramCountTable:
    """Read count files of any orders (several shards per order allowed) into one table."""
    by_order: Dict[int, List[str]] = {}
    for path in config.counts:
        by_order.setdefault(sniff_count_order(path), []).append(path)
    tables = []
    for order in sorted(by_order):
        table, reports = read_count_files(by_order[order], order, vocab, config.max_reject_ratio)
        for report in reports:
            logger.info(f"{report.path}: {report.accepted} of {report.lines} lines accepted")
        tables.append(table)
    return merge_tables(tables)


def _vocabulary(config: PipelineConfig) -> Vocabulary:
    return Vocabulary.load(config.vocab) if config.vocab else Vocabulary()


def _training_vocabulary(config: PipelineConfig) -> Vocabulary:
    """Given vocabulary, else the corpus types seen more than ``unk_threshold`` times (the rest become <unk>)."""
    if config.vocab or config.unk_threshold <= 0:
        return _vocabulary(config)
    return Vocabulary.build_open_vocabulary(token_frequencies(config.corpus, _policy(config)), config.unk_threshold)


def _count_text(config: PipelineConfig, vocab: Vocabulary) -> NGramCountTable:
    sequences = read_text_corpus(config.corpus, vocab, _policy(config))
    table = count_corpus_parallel(sequences, config.order, config.threads)
    if config.cutoff > 1:
        table = apply_cutoff(table, config.cutoff, orders=range(2, config.order + 1))
    return table


def _load_cocs(config: PipelineConfig) -> Dict[int, CountOfCounts]:
    if config.coc:
        return read_coc_file(config.coc)
    table = _load_counts(config, Vocabulary())
    return {k: CountOfCounts.from_table(table, k) for k in range(1, table.order + 1)}


MIXTURE_COMPONENT_TYPES = ("arpa", "countlm", "taglm", "uniform")


def _parse_component(spec: str) -> Tuple[str, str]:
    kind, sep, path = spec.partition(":")
    if not sep or kind not in MIXTURE_COMPONENT_TYPES:
        raise UsageError(f"Mixture component {spec!r} is not type:path with type in "
                         f"{', '.join(MIXTURE_COMPONENT_TYPES)}")
    if kind != "uniform" and not os.path.exists(path):
        raise UsageError(f"Input paths not found: components={path}")
    return kind, path


def _load_component(kind: str, path: str, config: PipelineConfig, vocab: Vocabulary) -> SentenceScorer:
    if kind == "arpa":
        return read_arpa(path, vocab)[0]
    if kind == "taglm":
        return load_joint_model(path, vocab, config.beam_threshold)
    config.require("counts")
    table = _load_counts(config, vocab)
    order, boundaries, weights = read_weight_buckets(path)
    return CountLM(table, order, boundaries, weights, vocab=vocab)


def _is_selection_file(path: str) -> bool:
    with open_text(path) as f:
        return " ||| " in f.readline()


def read_one_best(path: str, vocab: Vocabulary, policy: NormalizationPolicy) -> Dict[str, TokenSequence]:
    """
    Per-segment 1-best sequences for dynamic mixtures.

    A ``segment_id ||| tokens`` file keys each line by its segment id; a plain
    text file keys the i-th non-empty line as ``str(i)``.
    """
    if not _is_selection_file(path):
        return {str(i): sequence for i, sequence in enumerate(read_text_corpus(path, vocab, policy))}
    one_best = {}
    for segment_id, tokens in read_selection(path):
        sequence = normalize(" ".join(tokens), vocab, policy)
        if sequence is not None:
            one_best[segment_id] = sequence
    return one_best


def _component_paths(config: PipelineConfig) -> List[str]:
    return [spec.partition(":")[2] for spec in config.components] if config.model_type == "mixture" else []


def _load_mixture(config: PipelineConfig) -> Tuple[SentenceScorer, Vocabulary]:
    """
    Interpolate ``type:path`` components over one shared vocabulary.

    Weights come from ``--mixture-weights``, else from EM on ``--heldout``,
    else uniform. Dynamic mode refits them per segment on ``--one-best``.
    """
    config.require("components")
    specs = [_parse_component(spec) for spec in config.components]
    vocab = Vocabulary()
    # uniform components are sized after every other component has filled the vocabulary
    components = [None if kind == "uniform" else _load_component(kind, path, config, vocab) for kind, path in specs]
    components = [c if c is not None else UniformModel(range(vocab.eos_id, len(vocab))) for c in components]
    vocab.freeze()
    policy = _policy(config)
    weights = config.mixture_weights or None
    if weights is None and config.heldout:
        tuning = read_text_corpus(config.heldout, vocab, policy)
        result = estimate_static_weights(components, tuning, max_iterations=config.em_iterations)
        weights = result.weights
        logger.info(f"Mixture weights {[round(float(w), 6) for w in weights]} from {config.heldout}")
    adaptation_text = None
    if config.mixture_mode == "dynamic":
        config.require("one_best")
        adaptation_text = read_one_best(config.one_best, vocab, policy)
    return mix_components(components, config.mixture_mode, weights, adaptation_text), vocab


def load_scorer(config: PipelineConfig) -> Tuple[SentenceScorer, Vocabulary]:
    """
    Build the scorer named by ``model_type`` and the frozen vocabulary its ids refer to.

    Args:
        config (PipelineConfig): Resolved configuration

    Returns:
        tuple: (scorer, vocabulary)
    """
    kind = config.model_type
    if kind == "arpa":
        config.require("model")
        model, vocab = read_arpa(config.model)
        return model, vocab.freeze()
    if kind == "uniform":
        config.require("vocab")
        vocab = Vocabulary.load(config.vocab)
        return UniformModel(range(vocab.eos_id, len(vocab))), vocab
    if kind == "countlm":
        config.require("model", "counts")
        vocab = _vocabulary(config)
        table = _load_counts(config, vocab)
        order, boundaries, weights = read_weight_buckets(config.model)
        return CountLM(table, order, boundaries, weights, vocab=vocab), vocab.freeze()
    if kind == "taglm":
        config.require("model")
        vocab = Vocabulary()
        model = load_joint_model(config.model, vocab, config.beam_threshold)
        return model, vocab.freeze()
    if kind == "parser":
        config.require("tag_model", "basenp_model", "link_model")
        vocab = Vocabulary()
        tag_model = load_joint_model(config.tag_model, vocab, config.beam_threshold)
        scorer = ParserLM(tag_model, load_basenp_model(config.basenp_model),
                          load_link_model(config.link_model), config.beam_width)
        return scorer, vocab.freeze()
    if kind == "mixture":
        return _load_mixture(config)
    raise UsageError(f"Unknown model type {kind!r}")


def cmd_count(config: PipelineConfig) -> int:
    config.require("corpus", "output")
    config.validate_paths("corpus", "vocab")
    vocab = _training_vocabulary(config)
    table = _count_text(config, vocab)
    outputs = []
    for k in range(1, config.order + 1):
        path = count_file_path(config.output, k)
        write_count_file(table, k, path, vocab)
        outputs.append(path)
    vocab_path = config.output + VOCAB_SUFFIX
    vocab.save(vocab_path)
    outputs.append(vocab_path)
    _manifest("count", config, [config.corpus, config.vocab], outputs,
              {"order": config.order, "cutoff": config.cutoff, "unk_threshold": config.unk_threshold})
    logger.info(f"Counted {table.sentences} sentences, {table.total_tokens} tokens, {len(vocab)} types")
    return 0


def cmd_merge_counts(config: PipelineConfig) -> int:
    config.require("counts", "output")
    config.validate_paths("counts", "vocab")
    vocab = _vocabulary(config)
    table = _load_counts(config, vocab)
    outputs = []
    for k in range(1, table.order + 1):
        if table.num_entries(k):
            path = count_file_path(config.output, k)
            write_count_file(table, k, path, vocab)
            outputs.append(path)
    _manifest("merge-counts", config, config.counts, outputs)
    return 0


def cmd_train_kn(config: PipelineConfig) -> int:
    config.require("output")
    if not config.corpus and not config.counts:
        raise UsageError("train-kn needs --corpus or --counts")
    config.validate_paths("corpus", "counts", "coc", "vocab")
    vocab = _training_vocabulary(config) if config.corpus else _vocabulary(config)
    table = _count_text(config, vocab) if config.corpus else _load_counts(config, vocab)
    coc_override = read_coc_file(config.coc) if config.coc else None
    model = train_kn(table, vocab, coc_override=coc_override, fallback_discount=config.fallback_discount)
    write_arpa(model, config.output)
    _manifest("train-kn", config, [config.corpus, config.coc, config.vocab] + config.counts, [config.output],
              {"order": table.order, "fallback_discount": config.fallback_discount, **model.metadata})
    return 0


def cmd_coc_extrapolate(config: PipelineConfig) -> int:
    config.require("output")
    if not config.coc and not config.counts:
        raise UsageError("coc-extrapolate needs --coc or --counts")
    config.validate_paths("coc", "counts")
    cocs = _load_cocs(config)
    result, alphas = [], {}
    for order in sorted(cocs):
        coc = cocs[order]
        alpha = config.alpha if config.alpha is not None else estimate_alpha(coc, config.alpha_range).alpha
        alphas[order] = alpha
        result.append(extrapolate_count_of_counts(coc, alpha, config.target_count))
    write_coc_file(result, config.output)
    _manifest("coc-extrapolate", config, [config.coc] + config.counts, [config.output],
              {"alpha": alphas, "target_count": config.target_count})
    return 0


def cmd_train_countlm(config: PipelineConfig) -> int:
    config.require("counts", "heldout", "output")
    config.validate_paths("counts", "heldout", "vocab")
    vocab = _vocabulary(config)
    table = _load_counts(config, vocab)
    vocab.freeze()
    lm = CountLM(table, config.order, config.buckets, vocab=vocab)
    heldout = read_text_corpus(config.heldout, vocab, _policy(config))
    report = estimate_jm_weights(lm, heldout, max_iterations=config.em_iterations)
    write_weight_buckets(lm, config.output)
    _manifest("train-countlm", config, config.counts + [config.heldout, config.vocab], [config.output],
              {"order": lm.order, "buckets": list(lm.boundaries[:-1]), "events": report.events,
               "fallbacks": report.fallbacks})
    return 0


def cmd_train_taglm(config: PipelineConfig) -> int:
    config.require("corpus", "tag_inventory", "output")
    config.validate_paths("corpus", "tag_inventory")
    inventory = TagInventory.load(config.tag_inventory)
    vocab = Vocabulary()
    corpus = read_tagged_corpus(config.corpus, inventory, vocab, _policy(config))
    model = train_joint(corpus, config.order, config.fallback_discount, config.beam_threshold)
    save_joint_model(model, config.output)
    _manifest("train-taglm", config, [config.corpus, config.tag_inventory],
              [config.output, config.output + ".tags"], {"order": config.order})
    return 0


def cmd_train_chunker(config: PipelineConfig) -> int:
    config.require("gold", "output")
    config.validate_paths("gold")
    model, rejections = train_basenp(read_gold_file(config.gold))
    for sentence, position, message in rejections[:20]:
        logger.warning(f"{config.gold}: sentence {sentence} position {position}: {message}")
    save_model_json(model, config.output)
    _manifest("train-chunker", config, [config.gold], [config.output], {"rejected": len(rejections)})
    return 0


def cmd_train_linkmodel(config: PipelineConfig) -> int:
    config.require("gold", "output")
    config.validate_paths("gold")
    model = train_linkmodel(read_gold_file(config.gold))
    save_model_json(model, config.output)
    _manifest("train-linkmodel", config, [config.gold], [config.output])
    return 0


def _single(config: PipelineConfig, name: str) -> str:
    values = getattr(config, name)
    if len(values) != 1:
        raise UsageError(f"This command takes exactly one --{name} file")
    return values[0]


def cmd_score(config: PipelineConfig) -> int:
    config.require("nbest", "output")
    config.validate_paths("nbest", "sources", "model", "counts", "vocab", "tag_model", "basenp_model", "link_model",
                          "heldout", "one_best")
    scorer, vocab = load_scorer(config)
    feature = config.feature or scorer.name
    nbest_path = _single(config, "nbest")
    lists = read_nbest(nbest_path, config.nbest_limit)
    if config.sources:
        attach_sources(lists, config.sources)
    scored, diagnostics = add_lm_feature(lists, scorer, feature, vocab, _policy(config),
                                         config.failure_penalty, config.threads)
    write_nbest(scored, config.output)
    outputs = [config.output]
    if diagnostics:
        diagnostics_path = config.output + ".diagnostics.tsv"
        frame = pd.DataFrame([vars(d) for d in diagnostics], columns=["segment_id", "rank", "feature", "error"])
        with atomic_write(diagnostics_path) as f:
            frame.to_csv(f, sep="\t", index=False, lineterminator="\n")
        outputs.append(diagnostics_path)
    _manifest("score", config, [nbest_path, config.model, config.sources] + _component_paths(config), outputs,
              {"feature": feature, "model_type": config.model_type, "failures": len(diagnostics)})
    return 0


def cmd_ppl(config: PipelineConfig) -> int:
    config.require("corpus")
    config.validate_paths("corpus", "model", "counts", "vocab", "tag_model", "basenp_model", "link_model",
                          "heldout", "one_best")
    scorer, vocab = load_scorer(config)
    report = perplexity(scorer, read_text_corpus(config.corpus, vocab, _policy(config)), config.oov_mode)
    if config.output:
        with atomic_write(config.output) as f:
            f.write(json.dumps(vars(report), indent=2, sort_keys=True) + "\n")
        _manifest("ppl", config, [config.corpus, config.model] + _component_paths(config), [config.output],
                  {"oov_mode": config.oov_mode})
    else:
        print(f"ppl\t{report.perplexity!r}\tlogprob\t{report.logprob!r}\ttokens\t{report.tokens}\toovs\t{report.oovs}")
    return 0


def cmd_rerank(config: PipelineConfig) -> int:
    config.require("nbest", "weights", "output")
    config.validate_paths("nbest", "weights")
    nbest_path = _single(config, "nbest")
    weights = read_weights(config.weights)
    selections = [loglinear_select(nbest, weights) for nbest in read_nbest(nbest_path, config.nbest_limit)]
    write_selection(selections, config.output)
    _manifest("rerank", config, [nbest_path, config.weights], [config.output])
    return 0


def cmd_mert(config: PipelineConfig) -> int:
    config.require("nbest", "references", "output")
    config.validate_paths("nbest", "references", "weights")
    if len(config.nbest) != len(config.references):
        raise UsageError(f"{len(config.nbest)} N-best files for {len(config.references)} reference files")
    sets = [(read_nbest(n, config.nbest_limit), read_references(r)) for n, r in zip(config.nbest, config.references)]
    fixed = config.fixed_weight_map()
    if config.weights:
        initial = read_weights(config.weights)
    else:
        names = sets[0][0][0].feature_names() if sets[0][0] else [DECODER_SCORE]
        initial = WeightVector({name: fixed.get(name, 0.0) for name in names})
    problem = MertProblem.pooled(sets, initial, fixed=fixed, restarts=config.restarts, seed=config.seed,
                                 step=config.simplex_step, perturbation=config.perturbation,
                                 min_edge=config.min_edge)
    result = optimize(problem)
    if result.degenerate:
        logger.warning("Degenerate objective: initial weights returned unchanged")
    write_weights(result.weights, config.output,
                  comments=[f"dev BLEU {result.bleu!r} (initial {result.initial_bleu!r})", f"seed {config.seed}"])
    log_path = config.log_file or config.output + ".log"
    write_mert_log(result.trace, log_path)
    _manifest("mert", config, config.nbest + config.references + [config.weights], [config.output, log_path],
              {"bleu": result.bleu, "initial_bleu": result.initial_bleu, "degenerate": result.degenerate,
               "restarts": config.restarts, "fixed": fixed})
    return 0


def _read_candidates(path: str) -> List[List[str]]:
    if _is_selection_file(path):
        return [tokens for _, tokens in read_selection(path)]
    return read_references(path)


def cmd_bleu(config: PipelineConfig) -> int:
    config.require("candidates", "references")
    config.validate_paths("candidates", "references")
    score, stats = bleu(_read_candidates(config.candidates), read_references(_single(config, "references")))
    row = {"bleu": score, "matches": stats.matches, "totals": stats.totals,
           "cand_len": stats.cand_len, "ref_len": stats.ref_len}
    if config.output:
        with atomic_write(config.output) as f:
            f.write(json.dumps(row, indent=2, sort_keys=True) + "\n")
        _manifest("bleu", config, [config.candidates] + config.references, [config.output])
    else:
        print(f"BLEU\t{score!r}")
    return 0


def cmd_plot_coc(config: PipelineConfig) -> int:
    config.require("output")
    if not config.coc and not config.counts:
        raise UsageError("plot-coc needs --coc or --counts")
    config.validate_paths("coc", "counts")
    rows = []
    for order, coc in sorted(_load_cocs(config).items()):
        try:
            fit = estimate_alpha(coc, config.alpha_range)
        except IllConditionedFitError as e:
            logger.warning(f"Order {order}: no fit ({e})")
            continue
        rows.extend({"order": order, "c": c, "inverse_log_ratio": y, "alpha": fit.alpha, "fitted": c / fit.alpha}
                    for c, y in fit.points)
    if not rows:
        raise IllConditionedFitError(f"No order has usable counts-of-counts in {list(config.alpha_range)}")
    frame = pd.DataFrame(rows, columns=["order", "c", "inverse_log_ratio", "alpha", "fitted"])
    with atomic_write(config.output) as f:
        frame.to_csv(f, sep="\t", index=False, lineterminator="\n")
    outputs = [config.output]
    if config.html:
        fig = go.Figure()
        for order, group in frame.groupby("order"):
            fig.add_trace(go.Scatter(x=group["c"], y=group["inverse_log_ratio"], mode="markers",
                                     name=f"order {order}"))
            fig.add_trace(go.Scatter(x=group["c"], y=group["fitted"], mode="lines",
                                     name=f"order {order}: c / {group['alpha'].iloc[0]:.3f}"))
        fig.update_layout(title="Count-of-counts law", xaxis_title="c",
                          yaxis_title="1 / (log F(c) - log F(c+1))")
        with atomic_write(config.html) as f:
            f.write(fig.to_html(include_plotlyjs="cdn"))
        outputs.append(config.html)
    _manifest("plot-coc", config, [config.coc] + config.counts, outputs,
              {"alpha_range": list(config.alpha_range)})
    return 0


COMMANDS = {
    "count": (cmd_count, "Count N-grams of a text corpus into per-order count files (tokens<TAB>count, bytewise sorted)",
              ["corpus", "order", "output", "vocab", "unk_threshold", "cutoff", "lowercase", "map_numbers"]),
    "merge-counts": (cmd_merge_counts, "Merge count-file shards (any orders) into per-order count files",
                     ["counts", "output", "vocab", "max_reject_ratio"]),
    "train-kn": (cmd_train_kn, "Train a modified Kneser-Ney model and write it in ARPA format",
                 ["corpus", "counts", "coc", "vocab", "unk_threshold", "order", "cutoff", "fallback_discount", "output",
                  "lowercase", "map_numbers", "max_reject_ratio"]),
    "coc-extrapolate": (cmd_coc_extrapolate, "Fill missing low counts-of-counts (order<TAB>c<TAB>F<TAB>flag rows)",
                        ["coc", "counts", "alpha", "alpha_range", "target_count", "output"]),
    "train-countlm": (cmd_train_countlm, "Estimate bucketed interpolation weights of a count-LM on held-out text",
                      ["counts", "heldout", "vocab", "order", "buckets", "em_iterations", "output",
                       "lowercase", "map_numbers"]),
    "train-taglm": (cmd_train_taglm, "Train the joint word/tag model from word|||tag-id sentences",
                    ["corpus", "tag_inventory", "order", "fallback_discount", "beam_threshold", "output",
                     "lowercase", "map_numbers"]),
    "train-chunker": (cmd_train_chunker, "Train the baseNP gap-tag model from a gold chunk/dependency file",
                      ["gold", "output"]),
    "train-linkmodel": (cmd_train_linkmodel, "Train the dependency link model from a gold chunk/dependency file",
                        ["gold", "output"]),
    "score": (cmd_score, "Add an LM log-probability feature to an N-best file (seg ||| tokens ||| n=v ... ||| score)",
              ["nbest", "sources", "model_type", "model", "counts", "vocab", "tag_model", "basenp_model",
               "link_model", "components", "mixture_weights", "mixture_mode", "one_best", "heldout",
               "em_iterations", "feature", "failure_penalty", "nbest_limit", "beam_threshold", "beam_width",
               "output", "lowercase", "map_numbers"]),
    "ppl": (cmd_ppl, "Perplexity of a text under a model",
            ["corpus", "model_type", "model", "counts", "vocab", "tag_model", "basenp_model", "link_model",
             "components", "mixture_weights", "mixture_mode", "one_best", "heldout", "em_iterations",
             "oov_mode", "beam_threshold", "beam_width", "output", "lowercase", "map_numbers"]),
    "rerank": (cmd_rerank, "Select the best hypothesis per segment under a weights file (name<TAB>weight)",
               ["nbest", "weights", "nbest_limit", "output"]),
    "mert": (cmd_mert, "Tune weights to maximize corpus BLEU with restarted Nelder-Mead",
             ["nbest", "references", "weights", "fixed_weights", "restarts", "simplex_step", "perturbation",
              "min_edge", "nbest_limit", "output", "log_file"]),
    "bleu": (cmd_bleu, "Corpus BLEU-4 of candidates (plain or seg ||| tokens) against one reference per line",
             ["candidates", "references", "output"]),
    "plot-coc": (cmd_plot_coc, "Emit (c, 1/(log F(c) - log F(c+1))) points and the fitted alpha as TSV",
                 ["coc", "counts", "alpha_range", "output", "html"]),
}

FLAG_SPECS = {
    "counts": dict(nargs="+", help="Count files (orders are detected per file)"),
    "nbest": dict(nargs="+", help="N-best files"),
    "references": dict(nargs="+", help="Reference files, one tokenized reference per line"),
    "fixed_weights": dict(nargs="+", metavar="NAME=VALUE", help="Weights held constant during tuning"),
    "lowercase": dict(action=argparse.BooleanOptionalAction, help="Case-fold tokens"),
    "map_numbers": dict(action=argparse.BooleanOptionalAction, help="Map numeric tokens to $number"),
    "model_type": dict(choices=list(MODEL_TYPES)),
    "components": dict(nargs="+", metavar="TYPE:PATH", help="Mixture components (arpa, countlm, taglm or uniform:)"),
    "mixture_weights": dict(help="Comma-separated static mixture weights in component order"),
    "mixture_mode": dict(choices=["static", "dynamic"]),
    "one_best": dict(help="1-best file (plain or seg ||| tokens) that dynamic mixtures adapt to"),
    "oov_mode": dict(choices=["open", "skip"]),
    "buckets": dict(help="Comma-separated bucket lower bounds starting at 0"),
    "alpha_range": dict(help="Count range lo,hi for the alpha fit"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Settings file in dotenv syntax (RERANK_* keys)")
    common.add_argument("--seed", type=str, default=None)
    common.add_argument("--threads", type=str, default=None)
    common.add_argument("--log-level", type=str, default=None)

    parser = argparse.ArgumentParser(prog="app.py", description=__doc__.strip().splitlines()[0])
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text, flags) in COMMANDS.items():
        sub = subparsers.add_parser(name, parents=[common], help=help_text, description=help_text)
        for flag in flags:
            spec = dict(FLAG_SPECS.get(flag, {}))
            spec.setdefault("default", None)
            sub.add_argument("--" + flag.replace("_", "-"), dest=flag, **spec)
    return parser


def run(command: str, config: PipelineConfig) -> int:
    """Execute one subcommand; toolkit errors map to their exit status."""
    handler = COMMANDS[command][0]
    try:
        return handler(config)
    except RerankToolkitError as e:
        logger.error(f"{command}: {e}")
        return e.exit_status


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    flags = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    try:
        config = PipelineConfig.resolve(flags, args.config)
    except RerankToolkitError as e:
        logging.basicConfig(format="%(asctime)s - %(levelname)s - %(message)s")
        logger.error(str(e))
        return e.exit_status
    logging.basicConfig(level=getattr(logging, config.log_level.upper()),
                        format="%(asctime)s - %(levelname)s - %(message)s", stream=sys.stderr)
    return run(args.command, config)


if __name__ == "__main__":
    sys.exit(main())
