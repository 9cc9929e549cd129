"""Alignment extraction: map every semantic unit to the sentence span with
the highest score, overlay the fixed-match rules, and format the result as a
typed ISI or LEAMR alignment set."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import AlignmentFormatError, ContainerError
from .graph import AmrGraph, GraphPosMap, Linearization
from .matrices import ScoreMatrix, merge_unit_rows
from .rules import apply_fixed_matches, fixed_matches
from .sentence import SentenceTokens, SpanList

ISI = "isi"
LEAMR = "leamr"


@dataclass
class ExtractionConfig:
    standard: str = LEAMR
    use_rules: bool = True
    rules: frozenset[str] | None = None  # None enables every rule


@dataclass(frozen=True)
class SubgraphRecord:
    words: tuple[int, ...]
    nodes: tuple[str, ...]  # node-unit paths, sorted


@dataclass(frozen=True)
class RelationRecord:
    words: tuple[int, ...]
    edge: str


@dataclass(frozen=True)
class ReentrancyRecord:
    words: tuple[int, ...]
    node: str
    mention: int  # 1-based index of the extra mention


@dataclass(frozen=True)
class DuplicateRecord:
    words: tuple[int, ...]
    nodes: tuple[str, ...]


@dataclass(frozen=True)
class FlatRecord:
    words: tuple[int, ...]
    unit: str


@dataclass
class AlignmentSet:
    """Typed span <-> unit alignments for one sentence."""

    sentence_id: str = ""
    standard: str = LEAMR
    subgraph: list[SubgraphRecord] = field(default_factory=list)
    relation: list[RelationRecord] = field(default_factory=list)
    reentrancy: list[ReentrancyRecord] = field(default_factory=list)
    duplicate: list[DuplicateRecord] = field(default_factory=list)
    flat: list[FlatRecord] = field(default_factory=list)

    def covered_units(self, g: AmrGraph | None = None) -> set[str]:
        """Units this set aligns; edges internal to a subgraph entry count
        as covered when the graph is supplied."""
        covered: set[str] = set()
        for rec in self.flat:
            covered.add(rec.unit)
        for rec in self.relation:
            covered.add(rec.edge)
        for rec in self.reentrancy:
            covered.add(rec.node)
        groups = [rec.nodes for rec in self.subgraph] + [rec.nodes for rec in self.duplicate]
        for nodes in groups:
            covered.update(nodes)
        if g is not None and groups:
            index = g.units()
            node_path = index.node_path
            for nodes in groups:
                members = set(nodes)
                for u in index.units:
                    if u.kind != "relation":
                        continue
                    if (
                        node_path.get(u.source) in members
                        and node_path.get(u.target) in members
                    ):
                        covered.add(u.path)
        return covered

    def is_empty(self) -> bool:
        return not (
            self.subgraph or self.relation or self.reentrancy or self.duplicate or self.flat
        )


def select_span(spans: SpanList, word_index: int) -> int:
    """Span containing a word."""
    if word_index < 0 or word_index >= len(spans.span_of_word):
        raise IndexError(f"word index {word_index} out of range")
    return spans.span_of_word[word_index]


def extract_alignment_map(
    spans: SpanList,
    gp: GraphPosMap,
    m: ScoreMatrix,
    g: AmrGraph,
    cfg: ExtractionConfig | None = None,
) -> dict[str, int]:
    """Core of the extraction procedure: per unit, take the argmax over
    word-merged columns (leftmost on ties), map it through the span list,
    then overlay the fixed-match rules when enabled."""
    cfg = cfg or ExtractionConfig()
    unit_rows = merge_unit_rows(m, gp)
    if unit_rows.n_e != len(spans.span_of_word):
        raise ContainerError(
            f"matrix has {unit_rows.n_e} word columns but the sentence has "
            f"{len(spans.span_of_word)} words; merge subword columns first"
        )

    mapping: dict[str, int] = {}
    for row, unit in enumerate(unit_rows.decoder_tokens):
        scores = unit_rows.values[row]
        word = int(np.argmax(scores))  # np.argmax returns the first maximum
        mapping[unit] = select_span(spans, word)
    for u in g.units().units:
        if u.path not in mapping:  # defensive: unit without decoder tokens
            mapping[u.path] = mapping.get("0", 0)

    if cfg.use_rules:
        span_scores = _span_scores(unit_rows, spans)
        fms = fixed_matches(
            g, spans, _words_of(spans), span_scores=span_scores, rules=cfg.rules
        )
        mapping = apply_fixed_matches(mapping, fms, g)
    return mapping


def _words_of(spans: SpanList) -> list[str]:
    words: list[str] = []
    for span in spans.spans:
        words.extend(span.text.split(" "))
    return words


def _span_scores(unit_rows: ScoreMatrix, spans: SpanList) -> dict[str, np.ndarray]:
    n_spans = len(spans.spans)
    agg = np.zeros((unit_rows.n_d, n_spans), dtype=np.float64)
    for word, span in enumerate(spans.span_of_word):
        agg[:, span] += unit_rows.values[:, word]
    return {u: agg[i] for i, u in enumerate(unit_rows.decoder_tokens)}


def extract_alignments(
    st: SentenceTokens,
    spans: SpanList,
    lin: Linearization,
    gp: GraphPosMap,
    m: ScoreMatrix,
    g: AmrGraph,
    cfg: ExtractionConfig | None = None,
) -> AlignmentSet:
    """Full extraction for one sentence. `m` must already be subword-column
    merged (its columns are the sentence words)."""
    cfg = cfg or ExtractionConfig()
    if list(m.encoder_tokens) != list(st.words):
        raise ContainerError("matrix columns are not the sentence words")
    if not g.nodes:
        return AlignmentSet(sentence_id=m.sentence_id, standard=cfg.standard)
    mapping = extract_alignment_map(spans, gp, m, g, cfg)
    aset = classify_alignments(mapping, g, spans, cfg.standard)
    aset.sentence_id = m.sentence_id or g.metadata.get("id", "")
    return aset


def classify_alignments(
    am: dict[str, int],
    g: AmrGraph,
    spans: SpanList,
    standard: str = LEAMR,
) -> AlignmentSet:
    """Format a unit->span map as a typed alignment set.

    LEAMR typing: node units sharing a span are grouped into maximal
    connected subgraph entries; entries repeating an earlier entry's concept
    multiset on a different span become duplicates; edges not internal to a
    subgraph entry become relation entries; every extra mention of a
    reentrant node becomes a reentrancy entry. ISI typing is a flat list of
    (span, unit) pairs."""
    index = g.units()
    aset = AlignmentSet(standard=standard)

    if standard == ISI:
        for u in index.units:
            if u.path in am:
                span = spans.spans[am[u.path]]
                aset.flat.append(FlatRecord(span.word_indices, u.path))
        aset.flat.sort(key=lambda r: (r.words, _path_key(r.unit)))
        return aset
    if standard != LEAMR:
        raise ValueError(f"unknown alignment standard {standard!r}")

    node_units = [u for u in index.units if u.kind == "node"]
    edge_units = [u for u in index.units if u.kind == "relation"]
    node_span = {u.path: am[u.path] for u in node_units if u.path in am}

    # connected components among nodes sharing a span
    neighbors: dict[str, set[str]] = {p: set() for p in node_span}
    for e in edge_units:
        sp = index.node_path.get(e.source)
        tp = index.node_path.get(e.target)
        if sp in node_span and tp in node_span and node_span[sp] == node_span[tp]:
            neighbors[sp].add(tp)
            neighbors[tp].add(sp)

    groups: list[tuple[int, list[str]]] = []
    seen: set[str] = set()
    for u in node_units:
        p = u.path
        if p not in node_span or p in seen:
            continue
        component = []
        stack = [p]
        seen.add(p)
        while stack:
            cur = stack.pop()
            component.append(cur)
            for nb in sorted(neighbors[cur]):
                if nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
        groups.append((node_span[p], sorted(component, key=_path_key)))

    groups.sort(key=lambda g_: (_path_key(g_[1][0]),))
    concepts_seen: dict[tuple, tuple[int, ...]] = {}
    member_of: dict[str, tuple[int, list[str]]] = {}
    for span_idx, nodes in groups:
        key = tuple(sorted(index.by_path[p].concept or "" for p in nodes))
        words = spans.spans[span_idx].word_indices
        if key in concepts_seen and concepts_seen[key] != words:
            aset.duplicate.append(DuplicateRecord(words, tuple(nodes)))
        else:
            concepts_seen.setdefault(key, words)
            aset.subgraph.append(SubgraphRecord(words, tuple(nodes)))
        for p in nodes:
            member_of[p] = (span_idx, nodes)

    for e in edge_units:
        sp = index.node_path.get(e.source)
        tp = index.node_path.get(e.target)
        internal = (
            sp in member_of and tp in member_of and member_of[sp][1] is member_of[tp][1]
        )
        if internal or e.path not in am:
            continue
        words = spans.spans[am[e.path]].word_indices
        aset.relation.append(RelationRecord(words, e.path))

    for var, count in index.mentions.items():
        extra = count - 1
        if extra <= 0:
            continue
        p = index.node_path[var]
        if p not in am:
            continue
        words = spans.spans[am[p]].word_indices
        for k in range(1, extra + 1):
            aset.reentrancy.append(ReentrancyRecord(words, p, k))

    aset.subgraph.sort(key=lambda r: (_path_key(r.nodes[0]),))
    aset.duplicate.sort(key=lambda r: (_path_key(r.nodes[0]),))
    aset.relation.sort(key=lambda r: (_path_key(r.edge),))
    aset.reentrancy.sort(key=lambda r: (_path_key(r.node), r.mention))
    return aset


def _path_key(path: str):
    return [int(p) if p.isdigit() else -1 for p in path.split(".")]


# ---------------------------------------------------------------------------
# Serialization

_ISI_LINE_RE = re.compile(r"(\d+)(?::(\d+))?-(\S+)$")


def _format_words(words: tuple[int, ...]) -> str:
    if len(words) == 1:
        return str(words[0])
    return f"{words[0]}:{words[-1] + 1}"


def _parse_words(text: str, line_no: int) -> tuple[int, ...]:
    m = re.match(r"(\d+)(?::(\d+))?$", text)
    if not m:
        raise AlignmentFormatError(f"bad word range {text!r}", line=line_no)
    start = int(m.group(1))
    end = int(m.group(2)) if m.group(2) else start + 1
    if end <= start:
        raise AlignmentFormatError(f"empty word range {text!r}", line=line_no)
    return tuple(range(start, end))


def write_alignments(sets, standard: str | None = None) -> str:
    """Serialize one alignment set, or a corpus of them, deterministically.

    ISI documents are `# ::id` headed blocks of `wordRange-unitPath` lines
    (range as `start` or `start:end`, end exclusive); LEAMR documents are a
    single JSON object."""
    if isinstance(sets, AlignmentSet):
        sets = [sets]
    standard = standard or (sets[0].standard if sets else LEAMR)
    if standard == ISI:
        blocks = []
        for aset in sets:
            lines = [f"# ::id {aset.sentence_id}"]
            for rec in aset.flat:
                lines.append(f"{_format_words(rec.words)}-{rec.unit}")
            blocks.append("\n".join(lines))
        return "\n\n".join(blocks) + "\n"
    if standard != LEAMR:
        raise ValueError(f"unknown alignment standard {standard!r}")

    doc = {"format": LEAMR, "sentences": []}
    for aset in sets:
        doc["sentences"].append(
            {
                "id": aset.sentence_id,
                "subgraph": [
                    {"words": list(r.words), "nodes": list(r.nodes)} for r in aset.subgraph
                ],
                "relation": [
                    {"words": list(r.words), "edge": r.edge} for r in aset.relation
                ],
                "reentrancy": [
                    {"words": list(r.words), "node": r.node, "mention": r.mention}
                    for r in aset.reentrancy
                ],
                "duplicate": [
                    {"words": list(r.words), "nodes": list(r.nodes)} for r in aset.duplicate
                ],
            }
        )
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def read_alignments(text: str, standard: str) -> list[AlignmentSet]:
    """Parse an alignment document; the inverse of write_alignments."""
    if standard == ISI:
        sets: list[AlignmentSet] = []
        current: AlignmentSet | None = None
        for line_no, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                m = re.match(r"#\s*::id\s+(\S+)", line)
                if m:
                    current = AlignmentSet(sentence_id=m.group(1), standard=ISI)
                    sets.append(current)
                continue
            m = _ISI_LINE_RE.match(line)
            if not m:
                raise AlignmentFormatError(f"bad ISI line {line!r}", line=line_no)
            if current is None:
                current = AlignmentSet(standard=ISI)
                sets.append(current)
            words = _parse_words(line.split("-", 1)[0], line_no)
            current.flat.append(FlatRecord(words, m.group(3)))
        return sets
    if standard != LEAMR:
        raise ValueError(f"unknown alignment standard {standard!r}")

    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise AlignmentFormatError(f"bad LEAMR document: {exc}", line=exc.lineno)
    if doc.get("format") != LEAMR:
        raise AlignmentFormatError("not a LEAMR alignment document")
    sets = []
    for sent in doc.get("sentences", []):
        aset = AlignmentSet(sentence_id=sent.get("id", ""), standard=LEAMR)
        for r in sent.get("subgraph", []):
            aset.subgraph.append(SubgraphRecord(tuple(r["words"]), tuple(r["nodes"])))
        for r in sent.get("relation", []):
            aset.relation.append(RelationRecord(tuple(r["words"]), r["edge"]))
        for r in sent.get("reentrancy", []):
            aset.reentrancy.append(
                ReentrancyRecord(tuple(r["words"]), r["node"], int(r["mention"]))
            )
        for r in sent.get("duplicate", []):
            aset.duplicate.append(DuplicateRecord(tuple(r["words"]), tuple(r["nodes"])))
        sets.append(aset)
    return sets
