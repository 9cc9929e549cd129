"""Command-line interface: align, eval, correlate, loss-check."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import AmrAlignError
from .extraction import (
    ExtractionConfig,
    extract_alignments,
    read_alignments,
    write_alignments,
)
from .graph import (
    AmrGraph,
    GraphPosMap,
    Linearization,
    linearize,
    map_output_tokens,
    read_corpus,
)
from .loss import LossInput, PRE_SOFTMAX, POST_SOFTMAX, fit_mix, grad_check, mean_loss
from .matrices import (
    MixWeights,
    ScoreMatrix,
    find_bundle,
    load_matrices,
    merge_subword_columns,
    scalar_mix,
    sum_layers,
)
from .metrics import (
    HeadLayerCorrelation,
    build_align_matrix,
    evaluate,
    grid_csv,
    per_sentence_match_series,
    render_heatmap,
    wilcoxon_signed_rank,
)
from .rules import ALL_RULES
from .sentence import (
    SentenceTokens,
    SpanList,
    load_mwe_lexicon,
    map_input_tokens,
    read_span_file,
    segment_spans,
    spans_from_file_line,
    word_tokenize,
)


@dataclass
class SentenceContext:
    sentence_id: str
    graph: AmrGraph
    st: SentenceTokens
    spans: SpanList
    lin: Linearization
    gp: GraphPosMap
    matrices: list[ScoreMatrix]


def _parse_layer_range(text: str) -> tuple[int, int]:
    try:
        lo, hi = text.split(":")
        return int(lo), int(hi)
    except ValueError:
        raise AmrAlignError(f"bad layer range {text!r}, expected LO:HI")


def _parse_heads(text: str | None) -> tuple[int, ...] | None:
    if text is None:
        return None
    return tuple(int(h) for h in text.split(","))


def _load_contexts(args) -> list[SentenceContext]:
    graphs = read_corpus(Path(args.amr).read_text())
    if args.sents:
        sentences = [
            line for line in Path(args.sents).read_text().splitlines() if line.strip()
        ]
        if len(sentences) != len(graphs):
            raise AmrAlignError(
                f"{len(sentences)} sentences for {len(graphs)} graphs"
            )
    else:
        sentences = []
        for i, g in enumerate(graphs):
            if "snt" not in g.metadata:
                raise AmrAlignError(f"graph {i} has no ::snt metadata and no --sents file")
            sentences.append(g.metadata["snt"])

    lexicon = set()
    if getattr(args, "mwe_lexicon", None):
        lexicon = load_mwe_lexicon(Path(args.mwe_lexicon).read_text())
    span_groups = None
    if getattr(args, "spans", None):
        span_groups = read_span_file(Path(args.spans).read_text())
        if len(span_groups) != len(graphs):
            raise AmrAlignError("span file does not match the number of sentences")

    contexts = []
    for i, (g, sentence) in enumerate(zip(graphs, sentences)):
        sid = g.metadata.get("id", f"s{i}")
        mats = load_matrices(find_bundle(args.matrices, sid))
        first = mats[0]
        words = word_tokenize(sentence)
        st = map_input_tokens(first.encoder_tokens, words=words)
        spans = (
            spans_from_file_line(span_groups[i], words)
            if span_groups is not None
            else segment_spans(words, lexicon)
        )
        lin = linearize(g)
        gp = map_output_tokens(lin, first.decoder_tokens)
        contexts.append(SentenceContext(sid, g, st, spans, lin, gp, mats))
    return contexts


def _reduce_matrices(
    ctx: SentenceContext,
    layers: tuple[int, int],
    heads: tuple[int, ...] | None,
    mix: MixWeights | None,
) -> ScoreMatrix:
    lo, hi = layers
    mats = ctx.matrices
    if heads is not None:
        mats = [m for m in mats if m.head in heads]
    if mix is not None:
        mixed = []
        for layer in range(lo, hi):
            layer_mats = [m for m in mats if m.layer == layer]
            if layer_mats:
                mixed.append(scalar_mix(layer_mats, mix))
        if not mixed:
            raise AmrAlignError(f"no matrices in layer range [{lo}:{hi})")
        reduced = sum_layers(mixed, lo, hi) if len(mixed) > 1 else mixed[0]
    else:
        reduced = sum_layers(mats, lo, hi)
    return reduced


def cmd_align(args) -> int:
    contexts = _load_contexts(args)
    layers = _parse_layer_range(args.layers)
    heads = _parse_heads(args.heads)
    mix = None
    if args.mix_weights:
        mix = MixWeights.from_json(Path(args.mix_weights).read_text())
    rules = frozenset(args.rules.split(",")) if args.rules else None
    cfg = ExtractionConfig(
        standard=args.standard,
        use_rules=not args.no_rules,
        rules=rules,
    )
    sets = []
    for ctx in contexts:
        reduced = _reduce_matrices(ctx, layers, heads, mix)
        merged = merge_subword_columns(reduced, ctx.st)
        aset = extract_alignments(ctx.st, ctx.spans, ctx.lin, ctx.gp, merged, ctx.graph, cfg)
        aset.sentence_id = ctx.sentence_id
        sets.append(aset)
    document = write_alignments(sets, args.standard)
    Path(args.output).write_text(document)
    print(f"wrote {len(sets)} sentence alignments to {args.output}")
    return 0


def cmd_eval(args) -> int:
    preds = read_alignments(Path(args.pred).read_text(), args.standard)
    golds = read_alignments(Path(args.gold).read_text(), args.standard)
    graphs = read_corpus(Path(args.amr).read_text()) if args.amr else None
    report = evaluate(preds, golds, graphs=graphs)
    if args.compare:
        other = read_alignments(Path(args.compare).read_text(), args.standard)
        series_a = per_sentence_match_series(preds, golds, stat=args.sig_stat)
        series_b = per_sentence_match_series(other, golds, stat=args.sig_stat)
        result = wilcoxon_signed_rank(series_a, series_b)
        report.significance = {
            "statistic": result.statistic,
            "w_plus": result.w_plus,
            "n": result.n,
            "p": result.p_value,
            "method": result.method,
            "series": args.sig_stat,
        }
    sys.stdout.write(report.to_json() if args.report == "json" else report.to_text())
    return 0


def cmd_correlate(args) -> int:
    contexts = _load_contexts(args)
    golds = read_alignments(Path(args.gold).read_text(), args.standard)
    by_id = {g.sentence_id: g for g in golds}
    acc: HeadLayerCorrelation | None = None
    for ctx in contexts:
        if ctx.sentence_id not in by_id:
            raise AmrAlignError(f"no gold alignment for sentence {ctx.sentence_id!r}")
        am = build_align_matrix(by_id[ctx.sentence_id], ctx.st, ctx.gp, ctx.graph)
        if acc is None:
            n_layers = max(m.layer for m in ctx.matrices) + 1
            n_heads = max(m.head for m in ctx.matrices) + 1
            acc = HeadLayerCorrelation(n_layers, n_heads)
        acc.update(ctx.matrices, am)
    if acc is None:
        raise AmrAlignError("no sentences to correlate")
    grid = acc.grid()
    render_heatmap(grid, args.output)
    if args.csv:
        Path(args.csv).write_text(grid_csv(grid))
    best = np.unravel_index(np.nanargmax(grid), grid.shape)
    print(
        f"grid {grid.shape[0]} layers x {grid.shape[1]} heads; "
        f"best r={grid[best]:.4f} at layer {best[0]}, head {best[1]}; "
        f"heatmap written to {args.output}"
    )
    return 0


def cmd_loss_check(args) -> int:
    contexts = _load_contexts(args)
    golds = read_alignments(Path(args.gold).read_text(), args.standard)
    by_id = {g.sentence_id: g for g in golds}
    heads = _parse_heads(args.heads)
    dataset = []
    for ctx in contexts:
        if ctx.sentence_id not in by_id:
            raise AmrAlignError(f"no gold alignment for sentence {ctx.sentence_id!r}")
        layer_mats = [m for m in ctx.matrices if m.layer == args.layer]
        if not layer_mats:
            raise AmrAlignError(f"bundle has no matrices for layer {args.layer}")
        subset = heads if heads is not None else tuple(m.head for m in layer_mats)
        n_heads = max(m.head for m in layer_mats) + 1
        head_mats = [np.zeros_like(layer_mats[0].values) for _ in range(n_heads)]
        for m in layer_mats:
            head_mats[m.head] = m.values
        am = build_align_matrix(by_id[ctx.sentence_id], ctx.st, ctx.gp, ctx.graph)
        scores_are = args.scores or (
            POST_SOFTMAX if layer_mats[0].normalized else PRE_SOFTMAX
        )
        mix = MixWeights(raw=[0.0] * n_heads, gamma=1.0, head_subset=subset)
        dataset.append(
            LossInput(head_mats=head_mats, mix=mix, align=am.values, scores_are=scores_are)
        )
    value = mean_loss(dataset)
    max_err = max(grad_check(inp, eps=args.eps) for inp in dataset)
    manifest = {
        "loss": value,
        "max_grad_rel_err": max_err,
        "layer": args.layer,
        "scores": dataset[0].scores_are,
        "gamma": dataset[0].mix.gamma,
        "raw": list(dataset[0].mix.raw),
        "head_subset": list(dataset[0].mix.subset(len(dataset[0].head_mats))),
    }
    if args.fit:
        learned = fit_mix(dataset, steps=args.steps, lr=args.lr)
        manifest.update(
            {
                "loss_after_fit": mean_loss(dataset, learned),
                "gamma": learned.gamma,
                "raw": list(learned.raw),
                "head_subset": list(learned.head_subset),
                "softmax": [
                    learned.softmax_weights(len(learned.raw)).get(h, 0.0)
                    for h in range(len(learned.raw))
                ],
            }
        )
    text = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    sys.stdout.write(text)
    if args.output:
        Path(args.output).write_text(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="amralign",
        description="Extract, evaluate, and analyze AMR span-unit alignments "
        "from decoder-over-encoder score matrices.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("align", help="extract alignments from AAM1 score matrices")
    p.add_argument("--amr", required=True, help="Penman file, one graph per block")
    p.add_argument("--sents", help="sentence file, one per line (default: ::snt metadata)")
    p.add_argument("--matrices", required=True, help="directory of AAM1 bundles")
    p.add_argument("--layers", default="0:4", help="layer range LO:HI (default 0:4)")
    p.add_argument("--heads", help="comma-separated head subset")
    p.add_argument("--mix-weights", help="JSON mix-weight manifest (scalar head mix)")
    p.add_argument("--no-rules", action="store_true", help="disable the rule layer")
    p.add_argument("--rules", help=f"comma-separated rule subset of {','.join(ALL_RULES)}")
    p.add_argument("--spans", help="gold span file: spans '|'-separated, words spaced")
    p.add_argument("--mwe-lexicon", help="multiword-expression lexicon, one per line")
    p.add_argument("--standard", choices=["isi", "leamr"], default="leamr")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("eval", help="score predicted alignments against gold")
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--standard", choices=["isi", "leamr"], default="leamr")
    p.add_argument("--report", choices=["text", "json"], default="text")
    p.add_argument("--amr", help="Penman file, enables coverage")
    p.add_argument("--compare", help="second prediction file for a significance test")
    p.add_argument("--sig-stat", choices=["f1", "count"], default="f1",
                   help="per-graph series fed to the Wilcoxon test")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("correlate", help="layer/head Pearson correlation heatmap")
    p.add_argument("--matrices", required=True)
    p.add_argument("--amr", required=True)
    p.add_argument("--sents")
    p.add_argument("--gold", required=True)
    p.add_argument("--standard", choices=["isi", "leamr"], default="leamr")
    p.add_argument("-o", "--output", required=True, help=".svg, .png, or .pgm heatmap")
    p.add_argument("--csv", help="also write the grid as CSV")
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("loss-check", help="guided-loss value, gradient check, mix fitting")
    p.add_argument("--matrices", required=True)
    p.add_argument("--amr", required=True)
    p.add_argument("--sents")
    p.add_argument("--gold", required=True)
    p.add_argument("--standard", choices=["isi", "leamr"], default="leamr")
    p.add_argument("--layer", type=int, default=3, help="layer to mix (default 3)")
    p.add_argument("--heads", help="comma-separated head subset")
    p.add_argument("--scores", choices=[PRE_SOFTMAX, POST_SOFTMAX],
                   help="override the score declaration (default: from manifest)")
    p.add_argument("--eps", type=float, default=1e-5)
    p.add_argument("--fit", action="store_true", help="fit the scalar mix by gradient descent")
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("-o", "--output", help="write the manifest JSON here too")
    p.set_defaults(func=cmd_loss_check)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except AmrAlignError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
