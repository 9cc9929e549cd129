"""Evaluation of predicted against gold alignments (exact and partial match
with Jaccard credit, span F1, coverage), token-level alignment matrices,
Pearson correlation of score matrices against them, and the Wilcoxon
signed-rank test for system comparisons."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError
from .extraction import AlignmentSet
from .graph import AmrGraph, GraphPosMap
from .matrices import ScoreMatrix
from .sentence import SentenceTokens

ALIGNMENT_TYPES = ("subgraph", "relation", "reentrancy", "duplicate", "isi")


@dataclass(frozen=True)
class Scores:
    p: float
    r: float
    f1: float

    @staticmethod
    def from_counts(matched: float, n_pred: float, n_gold: float) -> "Scores":
        p = 100.0 * matched / n_pred if n_pred else 0.0
        r = 100.0 * matched / n_gold if n_gold else 0.0
        f1 = 2 * p * r / (p + r) if p + r else 0.0
        return Scores(p, r, f1)


def _records(aset: AlignmentSet) -> dict[str, list]:
    """Per alignment type, records as (identity key, node set, token set)."""
    out: dict[str, list] = {t: [] for t in ALIGNMENT_TYPES}
    for rec in aset.subgraph:
        out["subgraph"].append(
            ((rec.words, frozenset(rec.nodes)), frozenset(rec.nodes), frozenset(rec.words))
        )
    for rec in aset.relation:
        out["relation"].append(
            ((rec.words, rec.edge), frozenset({rec.edge}), frozenset(rec.words))
        )
    for rec in aset.reentrancy:
        out["reentrancy"].append(
            ((rec.words, rec.node), frozenset({rec.node}), frozenset(rec.words))
        )
    for rec in aset.duplicate:
        out["duplicate"].append(
            ((rec.words, frozenset(rec.nodes)), frozenset(rec.nodes), frozenset(rec.words))
        )
    for rec in aset.flat:
        out["isi"].append(
            ((rec.words, rec.unit), frozenset({rec.unit}), frozenset(rec.words))
        )
    return out


def _check_pairing(preds: list[AlignmentSet], golds: list[AlignmentSet]) -> None:
    if len(preds) != len(golds):
        raise ValueError(f"{len(preds)} predicted sentences vs {len(golds)} gold")
    for p, g in zip(preds, golds):
        if p.sentence_id != g.sentence_id:
            raise ValueError(
                f"sentence id mismatch: {p.sentence_id!r} vs {g.sentence_id!r}"
            )


def exact_scores(
    preds: list[AlignmentSet], golds: list[AlignmentSet]
) -> dict[str, Scores]:
    """Exact match: a predicted record scores iff some gold record of the
    same sentence has the identical span and identical unit set."""
    _check_pairing(preds, golds)
    matched = {t: 0.0 for t in ALIGNMENT_TYPES}
    n_pred = {t: 0 for t in ALIGNMENT_TYPES}
    n_gold = {t: 0 for t in ALIGNMENT_TYPES}
    for pset, gset in zip(preds, golds):
        pr, gr = _records(pset), _records(gset)
        for t in ALIGNMENT_TYPES:
            n_pred[t] += len(pr[t])
            n_gold[t] += len(gr[t])
            gold_keys: dict = {}
            for key, _, _ in gr[t]:
                gold_keys[key] = gold_keys.get(key, 0) + 1
            for key, _, _ in pr[t]:
                if gold_keys.get(key, 0) > 0:
                    gold_keys[key] -= 1
                    matched[t] += 1
    return {
        t: Scores.from_counts(matched[t], n_pred[t], n_gold[t])
        for t in ALIGNMENT_TYPES
        if n_pred[t] or n_gold[t]
    }


def jaccard(a: frozenset, b: frozenset) -> float:
    if not a and not b:
        return 1.0
    union = len(a | b)
    return len(a & b) / union if union else 0.0


def partial_scores(
    preds: list[AlignmentSet], golds: list[AlignmentSet]
) -> dict[str, Scores]:
    """Partial match: each predicted record earns the product of the Jaccard
    indices between its node set and token set and those of its best gold
    record, under a greedy one-to-one assignment by descending credit."""
    _check_pairing(preds, golds)
    credit = {t: 0.0 for t in ALIGNMENT_TYPES}
    n_pred = {t: 0 for t in ALIGNMENT_TYPES}
    n_gold = {t: 0 for t in ALIGNMENT_TYPES}
    for pset, gset in zip(preds, golds):
        pr, gr = _records(pset), _records(gset)
        for t in ALIGNMENT_TYPES:
            n_pred[t] += len(pr[t])
            n_gold[t] += len(gr[t])
            pairs = []
            for i, (_, pn, pt) in enumerate(pr[t]):
                for j, (_, gn, gt) in enumerate(gr[t]):
                    c = jaccard(pn, gn) * jaccard(pt, gt)
                    if c > 0:
                        pairs.append((-c, i, j))
            pairs.sort()
            used_p: set[int] = set()
            used_g: set[int] = set()
            for neg_c, i, j in pairs:
                if i in used_p or j in used_g:
                    continue
                used_p.add(i)
                used_g.add(j)
                credit[t] += -neg_c
    return {
        t: Scores.from_counts(credit[t], n_pred[t], n_gold[t])
        for t in ALIGNMENT_TYPES
        if n_pred[t] or n_gold[t]
    }


def span_f1(
    pred_spans: list[set[tuple[int, int]]],
    gold_spans: list[set[tuple[int, int]]],
) -> Scores:
    """Micro-averaged F1 of exact span boundaries, per sentence."""
    if len(pred_spans) != len(gold_spans):
        raise ValueError("span F1 needs the same number of sentences on both sides")
    tp = n_pred = n_gold = 0
    for p, g in zip(pred_spans, gold_spans):
        p, g = set(p), set(g)
        tp += len(p & g)
        n_pred += len(p)
        n_gold += len(g)
    return Scores.from_counts(tp, n_pred, n_gold)


def record_spans(aset: AlignmentSet) -> set[tuple[int, int]]:
    """Span boundaries mentioned by an alignment set's records."""
    spans: set[tuple[int, int]] = set()
    for rec in aset.subgraph + aset.duplicate:
        spans.add((rec.words[0], rec.words[-1] + 1))
    for rec in aset.relation + aset.reentrancy + aset.flat:
        spans.add((rec.words[0], rec.words[-1] + 1))
    return spans


def coverage(aset: AlignmentSet, g: AmrGraph) -> float:
    """Percentage of the graph's semantic units the alignment set covers.
    An empty graph counts as fully covered."""
    units = g.units().units
    if not units:
        return 100.0
    covered = aset.covered_units(g)
    return 100.0 * sum(1 for u in units if u.path in covered) / len(units)


def corpus_coverage(sets: list[AlignmentSet], graphs: list[AmrGraph]) -> float:
    total = covered = 0
    for aset, g in zip(sets, graphs):
        units = g.units().units
        total += len(units)
        got = aset.covered_units(g)
        covered += sum(1 for u in units if u.path in got)
    return 100.0 * covered / total if total else 100.0


# ---------------------------------------------------------------------------
# Token-level alignment matrix and correlation


@dataclass
class AlignMatrix:
    """Binary decoder-token x encoder-token alignment matrix with a mask of
    positions excluded from correlation (special/structural tokens and,
    optionally, punctuation columns)."""

    values: np.ndarray  # (n_d, n_e) of {0, 1}
    mask: np.ndarray  # bool, True = excluded

    @property
    def n_d(self) -> int:
        return self.values.shape[0]

    @property
    def n_e(self) -> int:
        return self.values.shape[1]


_PUNCT = set(".,;:!?'\"()[]{}<>-–—…`´‘’“”/\\")


def _is_punct_word(word: str) -> bool:
    return bool(word) and all(ch in _PUNCT for ch in word)


def build_align_matrix(
    aset: AlignmentSet,
    st: SentenceTokens,
    gp: GraphPosMap,
    g: AmrGraph | None = None,
    exclude_punct: bool = True,
) -> AlignMatrix:
    """Expand span <-> unit alignments to the token level: entry (d, e) is 1
    iff decoder token d belongs to an aligned unit and encoder token e to a
    word of its span. Special and structural positions are masked and zero."""
    n_d, n_e = len(gp.decoder_tokens), len(st.encoder_tokens)
    values = np.zeros((n_d, n_e), dtype=np.float64)
    tok_of_unit = gp.tokens_of_unit()
    tok_of_word = st.tokens_of_word()

    def mark(units, words):
        for u in units:
            for d in tok_of_unit.get(u, ()):
                for w in words:
                    if 0 <= w < len(tok_of_word):
                        for e in tok_of_word[w]:
                            values[d, e] = 1.0

    index = g.units() if g is not None else None
    for rec in aset.subgraph + aset.duplicate:
        units = set(rec.nodes)
        if index is not None:
            members = set(rec.nodes)
            for u in index.units:
                if (
                    u.kind == "relation"
                    and index.node_path.get(u.source) in members
                    and index.node_path.get(u.target) in members
                ):
                    units.add(u.path)
        mark(units, rec.words)
    for rec in aset.relation:
        mark([rec.edge], rec.words)
    for rec in aset.reentrancy:
        mark([rec.node], rec.words)
    for rec in aset.flat:
        mark([rec.unit], rec.words)

    mask = np.zeros((n_d, n_e), dtype=bool)
    for d, u in enumerate(gp.unit_of_token):
        if u is None:
            mask[d, :] = True
    for e, w in enumerate(st.word_of_token):
        if w is None or (exclude_punct and _is_punct_word(st.words[w])):
            mask[:, e] = True
    values[mask] = 0.0
    return AlignMatrix(values, mask)


def pearson_correlation(m: ScoreMatrix | np.ndarray, am: AlignMatrix) -> float:
    """Pearson's r over the unmasked, flattened positions of both matrices."""
    values = m.values if isinstance(m, ScoreMatrix) else m
    if values.shape != am.values.shape:
        raise ValueError(f"shape mismatch {values.shape} vs {am.values.shape}")
    keep = ~am.mask
    x = values[keep].astype(np.float64).ravel()
    y = am.values[keep].astype(np.float64).ravel()
    if x.size < 2:
        raise DegenerateInputError("fewer than 2 unmasked positions")
    xc = x - x.mean()
    yc = y - y.mean()
    denom = math.sqrt(float(xc @ xc)) * math.sqrt(float(yc @ yc))
    if denom == 0.0:
        raise DegenerateInputError("constant vector: correlation undefined")
    return float((xc @ yc) / denom)


class HeadLayerCorrelation:
    """Streaming Pearson correlation of every (layer, head) score matrix
    against the alignment matrix, accumulated across sentences by flattening
    unmasked positions into one long pair of vectors per cell."""

    def __init__(self, n_layers: int, n_heads: int):
        self.n_layers = n_layers
        self.n_heads = n_heads
        shape = (n_layers, n_heads)
        self._n = np.zeros(shape)
        self._sx = np.zeros(shape)
        self._sy = np.zeros(shape)
        self._sxx = np.zeros(shape)
        self._syy = np.zeros(shape)
        self._sxy = np.zeros(shape)

    def update(self, mats: list[ScoreMatrix], am: AlignMatrix) -> None:
        keep = ~am.mask
        y = am.values[keep].ravel()
        for m in mats:
            if m.layer is None or m.head is None:
                raise ValueError("grid update needs concrete layer/head indices")
            if m.values.shape != am.values.shape:
                raise ValueError("score matrix and alignment matrix shapes differ")
            x = m.values[keep].ravel()
            l, h = m.layer, m.head
            self._n[l, h] += x.size
            self._sx[l, h] += x.sum()
            self._sy[l, h] += y.sum()
            self._sxx[l, h] += float(x @ x)
            self._syy[l, h] += float(y @ y)
            self._sxy[l, h] += float(x @ y)

    def grid(self) -> np.ndarray:
        """L x H matrix of r values; NaN where a cell is degenerate."""
        n = self._n
        with np.errstate(invalid="ignore", divide="ignore"):
            cov = n * self._sxy - self._sx * self._sy
            vx = n * self._sxx - self._sx**2
            vy = n * self._syy - self._sy**2
            denom = np.sqrt(vx * vy)
            out = np.where(denom > 0, cov / np.where(denom > 0, denom, 1.0), np.nan)
        out[n < 2] = np.nan
        return out


def correlation_grid(
    mats: list[ScoreMatrix], am: AlignMatrix, n_layers: int, n_heads: int
) -> np.ndarray:
    acc = HeadLayerCorrelation(n_layers, n_heads)
    acc.update(mats, am)
    return acc.grid()


def render_heatmap(grid: np.ndarray, path: str, title: str = "Pearson r") -> None:
    """Render an L x H correlation grid to .svg/.png (matplotlib) or .pgm."""
    if path.endswith(".pgm"):
        _write_pgm(grid, path)
        return
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(1 + 0.5 * grid.shape[1], 1 + 0.5 * grid.shape[0]))
    im = ax.imshow(grid, cmap="viridis", origin="lower", aspect="auto")
    ax.set_xlabel("head")
    ax.set_ylabel("layer")
    ax.set_title(title)
    ax.set_xticks(range(grid.shape[1]))
    ax.set_yticks(range(grid.shape[0]))
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def _write_pgm(grid: np.ndarray, path: str) -> None:
    # linear map of [-1, 1] to 8-bit grey; NaN renders black
    g = np.nan_to_num(grid, nan=-1.0)
    pixels = np.clip((g + 1.0) * 127.5, 0, 255).astype(np.uint8)
    h, w = pixels.shape
    header = f"P5\n{w} {h}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header + pixels.tobytes())


def grid_csv(grid: np.ndarray) -> str:
    lines = ["layer," + ",".join(f"head{h}" for h in range(grid.shape[1]))]
    for l in range(grid.shape[0]):
        cells = ",".join("" if math.isnan(grid[l, h]) else f"{grid[l, h]:.6f}"
                         for h in range(grid.shape[1]))
        lines.append(f"{l},{cells}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Wilcoxon signed-rank test


@dataclass
class WilcoxonResult:
    statistic: float  # min(W+, W-)
    w_plus: float
    n: int  # pairs remaining after zero-difference removal
    p_value: float
    method: str  # "exact" | "normal"


def _midranks(values: np.ndarray) -> np.ndarray:
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def wilcoxon_signed_rank(
    scores_a: list[float],
    scores_b: list[float],
    exact_max_n: int = 25,
) -> WilcoxonResult:
    """Two-sided Wilcoxon signed-rank test on paired scores.

    Zero differences are dropped (>= 6 nonzero pairs required), ties get
    midranks. The p-value comes from the exact null distribution of W+ for
    n <= exact_max_n and from the normal approximation with tie correction
    above (no continuity correction)."""
    a = np.asarray(scores_a, dtype=np.float64)
    b = np.asarray(scores_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("paired score lists must have equal length")
    d = a - b
    d = d[d != 0]
    n = d.size
    if n < 6:
        raise DegenerateInputError(
            f"only {n} nonzero differences; at least 6 are required"
        )
    absd = np.abs(d)
    ranks = _midranks(absd)
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    statistic = min(w_plus, w_minus)

    if n <= exact_max_n:
        # distribution of 2*W+ over all sign assignments, by polynomial product
        scaled = np.rint(2 * ranks).astype(int)
        total = int(scaled.sum())
        counts = np.zeros(total + 1, dtype=np.float64)
        counts[0] = 1.0
        for v in scaled:
            shifted = np.zeros_like(counts)
            shifted[v:] = counts[: counts.size - v]
            counts = counts + shifted
        denom = counts.sum()
        obs = int(round(2 * w_plus))
        cdf = counts[: obs + 1].sum() / denom
        sf = counts[obs:].sum() / denom
        p = min(1.0, 2.0 * min(cdf, sf))
        return WilcoxonResult(statistic, w_plus, n, float(p), "exact")

    mu = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    _, tie_counts = np.unique(absd, return_counts=True)
    var -= float(((tie_counts**3 - tie_counts) / 48.0).sum())
    if var <= 0:
        raise DegenerateInputError("zero variance under ties; test undefined")
    z = (w_plus - mu) / math.sqrt(var)
    p = math.erfc(abs(z) / math.sqrt(2.0))
    return WilcoxonResult(statistic, w_plus, n, float(p), "normal")


# ---------------------------------------------------------------------------
# Report


@dataclass
class TypeEval:
    exact: Scores
    partial: Scores
    n_pred: int
    n_gold: int


@dataclass
class EvalReport:
    types: dict[str, TypeEval] = field(default_factory=dict)
    span: Scores | None = None
    coverage: float | None = None
    significance: dict | None = None

    def to_json(self) -> str:
        doc: dict = {"types": {}}
        for t, te in self.types.items():
            doc["types"][t] = {
                "exact": vars(te.exact),
                "partial": vars(te.partial),
                "n_pred": te.n_pred,
                "n_gold": te.n_gold,
            }
        if self.span is not None:
            doc["span_f1"] = vars(self.span)
        if self.coverage is not None:
            doc["coverage"] = self.coverage
        if self.significance is not None:
            doc["significance"] = self.significance
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        lines = [
            f"{'type':<12} {'n_pred':>6} {'n_gold':>6} "
            f"{'exP':>7} {'exR':>7} {'exF1':>7} {'paP':>7} {'paR':>7} {'paF1':>7}"
        ]
        for t, te in self.types.items():
            lines.append(
                f"{t:<12} {te.n_pred:>6} {te.n_gold:>6} "
                f"{te.exact.p:>7.2f} {te.exact.r:>7.2f} {te.exact.f1:>7.2f} "
                f"{te.partial.p:>7.2f} {te.partial.r:>7.2f} {te.partial.f1:>7.2f}"
            )
        if self.span is not None:
            lines.append(f"spans        F1 {self.span.f1:.2f}")
        if self.coverage is not None:
            lines.append(f"coverage     {self.coverage:.2f}")
        if self.significance is not None:
            s = self.significance
            lines.append(
                f"wilcoxon     W={s['statistic']:.1f} n={s['n']} "
                f"p={s['p']:.4g} ({s['method']}, {s['series']})"
            )
        return "\n".join(lines) + "\n"


def evaluate(
    preds: list[AlignmentSet],
    golds: list[AlignmentSet],
    graphs: list[AmrGraph] | None = None,
    pred_spans: list[set[tuple[int, int]]] | None = None,
    gold_spans: list[set[tuple[int, int]]] | None = None,
) -> EvalReport:
    """Full evaluation report: exact and partial scores per alignment type,
    span F1 (from explicit span sets, else the spans the records mention),
    and unit coverage when the graphs are given."""
    exact = exact_scores(preds, golds)
    partial = partial_scores(preds, golds)
    report = EvalReport()
    for t in ALIGNMENT_TYPES:
        if t not in exact:
            continue
        n_pred = sum(len(_records(p)[t]) for p in preds)
        n_gold = sum(len(_records(g)[t]) for g in golds)
        report.types[t] = TypeEval(exact[t], partial[t], n_pred, n_gold)
    if pred_spans is None:
        pred_spans = [record_spans(p) for p in preds]
    if gold_spans is None:
        gold_spans = [record_spans(g) for g in golds]
    report.span = span_f1(pred_spans, gold_spans)
    if graphs is not None:
        report.coverage = corpus_coverage(preds, graphs)
    return report


def per_sentence_match_series(
    preds: list[AlignmentSet],
    golds: list[AlignmentSet],
    stat: str = "f1",
    types: tuple[str, ...] = ("subgraph", "relation", "reentrancy", "duplicate", "isi"),
) -> list[float]:
    """Per-graph series for significance testing: exact-match count or F1
    of each sentence, over the chosen alignment types."""
    _check_pairing(preds, golds)
    series = []
    for p, g in zip(preds, golds):
        scores = exact_scores([p], [g])
        matched = n_pred = n_gold = 0.0
        for t in types:
            if t not in scores:
                continue
            pr, gr = _records(p)[t], _records(g)[t]
            n_pred += len(pr)
            n_gold += len(gr)
            matched += scores[t].p * len(pr) / 100.0
        if stat == "count":
            series.append(matched)
        elif stat == "f1":
            s = Scores.from_counts(matched, n_pred, n_gold)
            series.append(s.f1)
        else:
            raise ValueError(f"unknown statistic {stat!r}")
    return series
