"""Fixed-match rules that override attention-derived alignments for special
graph structures (role subgraphs, named entities, question/condition/purpose
markers, and relation inheritance from parent or child nodes).

Rule names, toggleable individually:
  r1  have-org-role-91 / have-rel-role-91 subgraphs inherit the role child
  r2  named-entity-like subgraphs align whole to their surface-form children
  r3  amr-unknown aligns to a question mark
  r4  :condition aligns to the word "if"
  r5  :purpose aligns to the word "to"
  r6  :ARGX inherits the parent node, :ARGX-of the child node
  r7  :mod and :duration inherit the child node
  r8  :domain and :opX inherit the parent node
"""

from __future__ import annotations

import re
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .graph import AmrGraph, SemanticUnit
from .sentence import SpanList

ALL_RULES = ("r1", "r2", "r3", "r4", "r5", "r6", "r7", "r8")

_ROLE_CONCEPTS = frozenset({"have-org-role-91", "have-rel-role-91"})
_ARG_RE = re.compile(r":ARG\d+$")
_ARG_OF_RE = re.compile(r":ARG\d+-of$")
_OP_RE = re.compile(r":op\d+$")

ALIGN_TO_SPAN = "align"
ALIGN_WHOLE_SUBGRAPH = "whole_subgraph"
INHERIT_PARENT = "inherit_parent"
INHERIT_CHILD = "inherit_child"


@dataclass(frozen=True)
class FixedMatch:
    rule: str
    kind: str
    units: tuple[str, ...]  # unit paths; several only for whole-subgraph
    span: int | None = None
    source_unit: str | None = None  # node unit an inherit directive reads from


def _pick_span(
    candidate_spans: list[int],
    units: tuple[str, ...],
    span_scores: dict[str, np.ndarray] | None,
) -> int | None:
    """Choose among candidate spans: the one maximizing the units' combined
    score when scores are available, leftmost on ties or without scores."""
    candidates = sorted(set(candidate_spans))
    if not candidates:
        return None
    if span_scores:
        best, best_score = None, -np.inf
        for s in candidates:
            score = 0.0
            scored = False
            for u in units:
                if u in span_scores:
                    score += float(span_scores[u][s])
                    scored = True
            if scored and score > best_score:
                best, best_score = s, score
        if best is not None:
            return best
    return candidates[0]


def _word_spans(target: str, words: list[str], spans: SpanList) -> list[int]:
    lowered = target.lower()
    return [spans.span_of_word[i] for i, w in enumerate(words) if w.lower() == lowered]


def _anchor_spans(anchors: list[str], words: list[str], spans: SpanList) -> list[int]:
    exact = [
        spans.span_of_word[i]
        for i, w in enumerate(words)
        for a in anchors
        if w == a
    ]
    if exact:
        return exact
    return [
        spans.span_of_word[i]
        for i, w in enumerate(words)
        for a in anchors
        if w.lower() == a.lower()
    ]


def fixed_matches(
    g: AmrGraph,
    spans: SpanList,
    words: list[str],
    span_scores: dict[str, np.ndarray] | None = None,
    rules: frozenset[str] | None = None,
) -> list[FixedMatch]:
    """Collect rule directives for a graph. Rules that find no trigger emit
    nothing; each unit receives at most one directive (subgraph rules claim
    units before relation rules)."""
    enabled = set(ALL_RULES if rules is None else rules)
    index = g.units()
    concept_of = g.concept_of
    matches: list[FixedMatch] = []
    claimed: set[str] = set()

    def claim(fm: FixedMatch) -> None:
        fresh = tuple(u for u in fm.units if u not in claimed)
        if not fresh:
            return
        if len(fresh) != len(fm.units):
            fm = replace(fm, units=fresh)
        matches.append(fm)
        claimed.update(fresh)

    node_units = [u for u in index.units if u.kind == "node"]
    edge_units = [u for u in index.units if u.kind == "relation"]

    # r1: role subgraphs inherit the role child (:ARG2 target when present)
    if "r1" in enabled:
        for u in node_units:
            if u.concept not in _ROLE_CONCEPTS or u.constant:
                continue
            child = _designated_role_child(u.var, index)
            if child is None:
                continue
            claim(FixedMatch("r1", INHERIT_CHILD, (u.path,), source_unit=child))
            partner = _role_person_partner(u.var, g)
            if partner is not None:
                partner_path = index.node_path[partner]
                claim(FixedMatch("r1", INHERIT_CHILD, (partner_path,), source_unit=child))

    # r2: named-entity-like subgraphs aligned whole, anchored on the
    # surface-form children (also covers date-entity constants)
    if "r2" in enabled:
        for u in node_units:
            if u.constant:
                continue
            subgraph, anchors = _entity_subgraph(u, index, concept_of)
            if not subgraph:
                continue
            candidate = _anchor_spans(anchors, words, spans)
            span = _pick_span(candidate, tuple(subgraph), span_scores)
            if span is None:
                continue
            claim(FixedMatch("r2", ALIGN_WHOLE_SUBGRAPH, tuple(subgraph), span=span))

    # r3: amr-unknown -> question mark
    if "r3" in enabled:
        for u in node_units:
            if u.concept == "amr-unknown":
                span = _pick_span(_word_spans("?", words, spans), (u.path,), span_scores)
                if span is not None:
                    claim(FixedMatch("r3", ALIGN_TO_SPAN, (u.path,), span=span))

    # relation rules
    for u in edge_units:
        if u.path in claimed:
            continue
        label = u.label or ""
        if "r4" in enabled and label == ":condition":
            span = _pick_span(_word_spans("if", words, spans), (u.path,), span_scores)
            if span is not None:
                claim(FixedMatch("r4", ALIGN_TO_SPAN, (u.path,), span=span))
                continue
        if "r5" in enabled and label == ":purpose":
            span = _pick_span(_word_spans("to", words, spans), (u.path,), span_scores)
            if span is not None:
                claim(FixedMatch("r5", ALIGN_TO_SPAN, (u.path,), span=span))
                continue
        if "r6" in enabled and _ARG_RE.match(label):
            claim(FixedMatch("r6", INHERIT_PARENT, (u.path,),
                             source_unit=index.node_path[u.source]))
            continue
        if "r6" in enabled and _ARG_OF_RE.match(label):
            claim(FixedMatch("r6", INHERIT_CHILD, (u.path,),
                             source_unit=index.node_path[u.target]))
            continue
        if "r7" in enabled and label in (":mod", ":duration"):
            claim(FixedMatch("r7", INHERIT_CHILD, (u.path,),
                             source_unit=index.node_path[u.target]))
            continue
        if "r8" in enabled and (label == ":domain" or _OP_RE.match(label)):
            claim(FixedMatch("r8", INHERIT_PARENT, (u.path,),
                             source_unit=index.node_path[u.source]))
            continue
    return matches


def _designated_role_child(var: str, index) -> str | None:
    """Node-unit path of a role node's :ARG2 child, else its first node child."""
    first = None
    for att in index.children.get(var, []):
        child_path = index.node_path[att.target]
        if att.label == ":ARG2":
            return child_path
        if first is None and att.kind == "edge":
            first = child_path
    return first


def _role_person_partner(var: str, g: AmrGraph) -> str | None:
    """The placeholder node a role-91 node describes (the `person` of a
    person -> role-91 -> role chain): source of an :ARGX-of edge into the
    role node, or target of its :ARG0/:ARG1 edge. Nodes with a concrete
    concept (pronouns, names) keep their own alignment."""
    concept_of = g.concept_of
    for e in g.edges:
        if e.target == var and _ARG_OF_RE.match(e.label):
            if concept_of.get(e.source) == "person":
                return e.source
    for e in g.edges:
        if e.source == var and e.label in (":ARG0", ":ARG1"):
            if concept_of.get(e.target) == "person":
                return e.target
    return None


def _entity_subgraph(
    u: SemanticUnit, index, concept_of: dict[str, str]
) -> tuple[list[str], list[str]]:
    """Units of a named-entity-like subgraph rooted at node u, with the
    surface strings of its child constants as anchors.

    Two shapes trigger: a placeholder node with a :name child whose :opX
    constants give the surface form, and a date-entity node with constant
    children. Returns ([], []) when u is neither.
    """
    var = u.var
    for att in index.children.get(var, []):
        if att.kind != "edge" or att.label != ":name":
            continue
        if concept_of.get(att.target) != "name":
            continue
        name_var = att.target
        ops = [
            c for c in index.children.get(name_var, [])
            if c.kind == "attr" and _OP_RE.match(c.label)
        ]
        if not ops:
            continue
        units = [u.path, att.child_path, att.edge_path]
        anchors = []
        for c in ops:
            units.append(c.child_path)
            units.append(c.edge_path)
            anchors.append(index.by_path[c.child_path].concept or "")
        return units, anchors
    if u.concept == "date-entity":
        consts = [c for c in index.children.get(var, []) if c.kind == "attr"]
        if consts:
            units = [u.path]
            anchors = []
            for c in consts:
                units.append(c.child_path)
                units.append(c.edge_path)
                anchors.append(index.by_path[c.child_path].concept or "")
            return units, anchors
    return [], []


def apply_fixed_matches(
    base: dict[str, int],
    fms: list[FixedMatch],
    g: AmrGraph,
) -> dict[str, int]:
    """Overlay rule directives onto an attention-derived alignment map.

    Span directives overwrite; inherit directives resolve through chains of
    rule-moved nodes to a fixpoint. A circular inheritance falls back to the
    base alignment for the units on the cycle, with a warning. Entries the
    rules do not touch are returned unchanged, and the map stays total over
    the units the input mapped."""
    out = dict(base)
    inherit: dict[str, str] = {}
    for fm in fms:
        if fm.kind in (ALIGN_TO_SPAN, ALIGN_WHOLE_SUBGRAPH):
            if fm.span is None:
                continue
            for u in fm.units:
                if u in out:
                    out[u] = fm.span
        else:
            if fm.source_unit is not None:
                inherit[fm.units[0]] = fm.source_unit

    resolved: dict[str, int | None] = {}

    def resolve(start: str) -> int | None:
        chain: list[str] = []
        cur = start
        while cur in inherit and cur not in resolved:
            if cur in chain:
                cycle = chain[chain.index(cur):]
                warnings.warn(
                    f"circular alignment inheritance through units {cycle}; "
                    "keeping their base alignment"
                )
                for m in cycle:
                    resolved[m] = base.get(m)
                break
            chain.append(cur)
            cur = inherit[cur]
        final = resolved[cur] if cur in resolved else out.get(cur)
        for m in chain:
            if m not in resolved:
                resolved[m] = final
        return resolved.get(start, final)

    node_paths = {u.path for u in g.units().units if u.kind == "node"}
    ordered = sorted(inherit, key=lambda u: (u not in node_paths, u))
    for u in ordered:
        span = resolve(u)
        if u in out and span is not None:
            out[u] = span
    return out
