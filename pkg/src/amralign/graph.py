"""AMR graphs in Penman notation: parsing, serialization, linearization with
pointer tokens, and enumeration of semantic units with ISI-style dotted path
addresses.

Conventions:
  * the root node has path "0"; the k-th attachment under a node at path P
    (counting edges and attribute constants together, in parse order) sits at
    path "P.k", and the relation introducing it at "P.k.r";
  * attribute constants (numbers, quoted strings, polarity "-", mode words)
    are promoted to nodes with synthetic variables so they can be aligned;
  * a node mentioned more than once in the linearization (any node referenced
    again after its first mention) is reentrant.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass

from .errors import PenmanParseError, TokenStreamError
from .subtokens import DEFAULT_SPECIAL_TOKENS, covered_segments

NONE_UNIT = None

# Bare (unquoted) tokens accepted as attribute constants.
_CONST_WORDS = frozenset({"-", "+", "imperative", "expressive", "interrogative"})
_NUMBER_RE = re.compile(r"[+-]?\d+(\.\d+)?([eE][+-]?\d+)?$")
_POINTER_RE = re.compile(r"<pointer:(\d+)>$")


def _is_constant_token(tok: str) -> bool:
    return tok in _CONST_WORDS or tok.startswith('"') or bool(_NUMBER_RE.match(tok))


@dataclass(frozen=True)
class Node:
    var: str
    concept: str
    constant: bool = False  # promoted attribute constant


@dataclass(frozen=True)
class Edge:
    source: str
    label: str
    target: str


@dataclass(frozen=True)
class Attribute:
    source: str
    label: str
    value: str  # verbatim token, quotes included for strings


@dataclass(frozen=True)
class SemanticUnit:
    """A node or relation of the graph, the graph-side atom of alignment."""

    kind: str  # "node" | "relation"
    path: str
    var: str | None = None
    concept: str | None = None
    source: str | None = None
    label: str | None = None
    target: str | None = None
    constant: bool = False

    @property
    def uid(self) -> str:
        return self.path

    def describe(self) -> str:
        if self.kind == "node":
            return f"{self.var}/{self.concept}"
        return f"{self.source} {self.label} {self.target}"


class AmrGraph:
    """Rooted directed acyclic AMR graph.

    `edges` hold relations whose target is a variable, `attributes` those
    whose target is a constant; both keep parse order. Structural equality
    (==) compares root, the variable->concept map, and edge/attribute
    multisets, ignoring metadata and attachment order.
    """

    def __init__(
        self,
        root: str,
        nodes: list[Node],
        edges: list[Edge],
        attributes: list[Attribute] | None = None,
        metadata: dict[str, str] | None = None,
        attachment_order: list[tuple[str, int]] | None = None,
    ):
        self.root = root
        self.nodes = nodes
        self.edges = edges
        self.attributes = attributes if attributes is not None else []
        self.metadata = metadata if metadata is not None else {}
        # interleaving of edges/attributes as parsed: ("edge"|"attr", list index)
        if attachment_order is None:
            attachment_order = [("edge", i) for i in range(len(self.edges))]
            attachment_order += [("attr", i) for i in range(len(self.attributes))]
        self._attachment_order = attachment_order
        self._index: UnitIndex | None = None

    @property
    def concept_of(self) -> dict[str, str]:
        return {n.var: n.concept for n in self.nodes}

    def attachments(self) -> list[tuple[str, Edge | Attribute]]:
        """Edges and attributes interleaved in original parse order."""
        out = []
        for kind, i in self._attachment_order:
            out.append((kind, self.edges[i] if kind == "edge" else self.attributes[i]))
        return out

    def units(self) -> "UnitIndex":
        if self._index is None:
            self._index = UnitIndex(self)
        return self._index

    def __eq__(self, other) -> bool:
        if not isinstance(other, AmrGraph):
            return NotImplemented
        return (
            self.root == other.root
            and self.concept_of == other.concept_of
            and Counter(self.edges) == Counter(other.edges)
            and Counter(self.attributes) == Counter(other.attributes)
        )

    def __hash__(self):
        return hash((self.root, frozenset(self.concept_of.items())))

    def __repr__(self):
        return (
            f"AmrGraph(root={self.root!r}, nodes={len(self.nodes)}, "
            f"edges={len(self.edges)}, attributes={len(self.attributes)})"
        )

    def canonical_signature(self):
        """Nested tuple invariant under variable renaming; equal signatures
        mean the graphs are isomorphic with identical child order."""
        index = self.units()
        order: dict[str, int] = {}

        def visit(var: str):
            if var in order:
                return ("ref", order[var])
            order[var] = len(order)
            parts = []
            for att in index.children.get(var, []):
                if att.kind == "edge":
                    parts.append((att.label, visit(att.target)))
                else:
                    parts.append((att.label, ("const", att.value)))
            return ("node", self.concept_of[var], tuple(parts))

        return visit(self.root)


@dataclass(frozen=True)
class _Attachment:
    kind: str  # "edge" | "attr"
    label: str
    target: str  # variable for edges
    value: str = ""  # constant token for attrs
    child_path: str = ""
    edge_path: str = ""
    defines: bool = False  # first DFS mention of the target


class UnitIndex:
    """Semantic units of a graph plus the lookup tables the pipeline needs."""

    def __init__(self, g: AmrGraph):
        self.graph = g
        concept_of = g.concept_of
        raw_children: dict[str, list[tuple[str, Edge | Attribute]]] = {}
        for kind, item in g.attachments():
            raw_children.setdefault(item.source, []).append((kind, item))

        self.units: list[SemanticUnit] = []
        self.by_path: dict[str, SemanticUnit] = {}
        self.node_path: dict[str, str] = {}
        self.children: dict[str, list[_Attachment]] = {}
        self.mentions: dict[str, int] = {}
        synth = _SyntheticVars(set(concept_of))

        def add_unit(u: SemanticUnit):
            self.units.append(u)
            self.by_path[u.path] = u

        def visit(var: str, path: str):
            self.node_path[var] = path
            self.mentions[var] = 1
            add_unit(SemanticUnit("node", path, var=var, concept=concept_of[var]))
            atts: list[_Attachment] = []
            for k, (kind, item) in enumerate(raw_children.get(var, [])):
                child_path = f"{path}.{k}"
                edge_path = f"{child_path}.r"
                if kind == "edge":
                    defines = item.target not in self.node_path
                    if defines:
                        visit(item.target, child_path)
                    else:
                        self.mentions[item.target] += 1
                    add_unit(
                        SemanticUnit(
                            "relation", edge_path,
                            source=var, label=item.label, target=item.target,
                        )
                    )
                    atts.append(
                        _Attachment("edge", item.label, item.target,
                                    child_path=child_path, edge_path=edge_path,
                                    defines=defines)
                    )
                else:
                    cvar = synth.new()
                    self.node_path[cvar] = child_path
                    self.mentions[cvar] = 1
                    add_unit(
                        SemanticUnit(
                            "node", child_path, var=cvar,
                            concept=_unquote(item.value), constant=True,
                        )
                    )
                    add_unit(
                        SemanticUnit(
                            "relation", edge_path,
                            source=var, label=item.label, target=cvar,
                        )
                    )
                    atts.append(
                        _Attachment("attr", item.label, cvar, value=item.value,
                                    child_path=child_path, edge_path=edge_path,
                                    defines=True)
                    )
            self.children[var] = atts

        if g.root in concept_of:  # empty graphs have no units
            visit(g.root, "0")
        self.units.sort(key=lambda u: _path_sort_key(u.path))

    def reentrant_vars(self) -> list[str]:
        return [v for v, m in self.mentions.items() if m > 1]

    def extra_mentions(self, var: str) -> int:
        return max(self.mentions.get(var, 1) - 1, 0)


class _SyntheticVars:
    def __init__(self, taken: set[str]):
        self.taken = set(taken)
        self.counter = 0

    def new(self) -> str:
        while True:
            var = f"x{self.counter}"
            self.counter += 1
            if var not in self.taken:
                self.taken.add(var)
                return var


def _path_sort_key(path: str):
    parts = path.split(".")
    key = []
    for p in parts:
        key.append((1, 0) if p == "r" else (0, int(p)))
    return key


def _unquote(value: str) -> str:
    if len(value) >= 2 and value.startswith('"') and value.endswith('"'):
        return value[1:-1].replace('\\"', '"').replace("\\\\", "\\")
    return value


def enumerate_units(g: AmrGraph) -> list[SemanticUnit]:
    """All nodes (constants included) and relations, DFS order, unique paths."""
    return list(g.units().units)


# ---------------------------------------------------------------------------
# Penman parsing


@dataclass
class _Token:
    text: str
    line: int
    column: int


_METADATA_RE = re.compile(r"#\s*::(\S+)\s*(.*)$")
_VAR_TOKEN_RE = re.compile(r"[A-Za-z][A-Za-z0-9_\-']*$")


def _tokenize_penman(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    line, col = 1, 1
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if ch.isspace():
            col += 1
            i += 1
            continue
        if ch in "()/":
            tokens.append(_Token(ch, line, col))
            col += 1
            i += 1
            continue
        if ch == '"':
            start_line, start_col = line, col
            col += 1
            j = i + 1
            buf = ['"']
            while j < n:
                c = text[j]
                if c == "\\" and j + 1 < n:
                    buf.append(text[j:j + 2])
                    j += 2
                    col += 2
                    continue
                buf.append(c)
                j += 1
                col += 1
                if c == '"':
                    break
            else:
                raise PenmanParseError("unterminated string literal", start_line, start_col)
            if buf[-1] != '"' or len(buf) < 2:
                raise PenmanParseError("unterminated string literal", start_line, start_col)
            tokens.append(_Token("".join(buf), start_line, start_col))
            i = j
            continue
        start_line, start_col = line, col
        j = i
        while j < n and not text[j].isspace() and text[j] not in '()/"':
            j += 1
            col += 1
        tokens.append(_Token(text[i:j], start_line, start_col))
        i = j
    return tokens


def _split_metadata(text: str) -> tuple[dict[str, str], str]:
    metadata: dict[str, str] = {}
    body_lines = []
    for raw in text.splitlines():
        stripped = raw.strip()
        if stripped.startswith("#"):
            m = _METADATA_RE.match(stripped)
            if m:
                metadata[m.group(1)] = m.group(2).strip()
            continue
        body_lines.append(raw)
    return metadata, "\n".join(body_lines)


class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.pos = 0
        self.defined: dict[str, _Token] = {}
        self.nodes: list[Node] = []
        # children as parsed: source var -> list of (label, value token)
        self.raw: list[tuple[str, str, _Token]] = []

    def _peek(self) -> _Token | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def _next(self, expect: str | None = None) -> _Token:
        tok = self._peek()
        if tok is None:
            last = self.tokens[-1] if self.tokens else _Token("", 1, 1)
            raise PenmanParseError(
                "unbalanced parentheses: unexpected end of input",
                last.line, last.column + len(last.text),
            )
        if expect is not None and tok.text != expect:
            raise PenmanParseError(
                f"expected {expect!r}, found {tok.text!r}", tok.line, tok.column
            )
        self.pos += 1
        return tok

    def parse(self) -> AmrGraph:
        opening = self._peek()
        if opening is None:
            raise PenmanParseError("empty input", 1, 1)
        root = self._parse_node()
        trailing = self._peek()
        if trailing is not None:
            if trailing.text == ")":
                raise PenmanParseError(
                    "unbalanced parentheses: extra ')'", trailing.line, trailing.column
                )
            raise PenmanParseError(
                f"trailing content {trailing.text!r} after graph",
                trailing.line, trailing.column,
            )
        return self._build(root)

    def _parse_node(self) -> str:
        self._next("(")
        var_tok = self._next()
        if var_tok.text in '()/' or var_tok.text.startswith('"'):
            raise PenmanParseError(
                f"expected variable, found {var_tok.text!r}", var_tok.line, var_tok.column
            )
        var = var_tok.text
        if var in self.defined:
            first = self.defined[var]
            raise PenmanParseError(
                f"duplicate definition of variable {var!r} "
                f"(first defined at line {first.line}, column {first.column})",
                var_tok.line, var_tok.column,
            )
        self.defined[var] = var_tok
        self._next("/")
        concept_tok = self._next()
        if concept_tok.text in '()/':
            raise PenmanParseError(
                f"expected concept, found {concept_tok.text!r}",
                concept_tok.line, concept_tok.column,
            )
        self.nodes.append(Node(var, concept_tok.text))
        while True:
            tok = self._peek()
            if tok is None:
                raise PenmanParseError(
                    "unbalanced parentheses: missing ')'",
                    concept_tok.line, concept_tok.column,
                )
            if tok.text == ")":
                self._next()
                return var
            if not tok.text.startswith(":"):
                raise PenmanParseError(
                    f"expected relation or ')', found {tok.text!r}", tok.line, tok.column
                )
            rel = self._next()
            value = self._peek()
            if value is None:
                raise PenmanParseError(
                    f"relation {rel.text!r} has no value", rel.line, rel.column
                )
            if value.text == "(":
                child = self._parse_node()
                self.raw.append((var, rel.text, _Token(child, value.line, value.column)))
            else:
                self.raw.append((var, rel.text, self._next()))

    def _build(self, root: str) -> AmrGraph:
        edges: list[Edge] = []
        attributes: list[Attribute] = []
        order: list[tuple[str, int]] = []
        for source, label, tok in self.raw:
            if tok.text in self.defined:
                order.append(("edge", len(edges)))
                edges.append(Edge(source, label, tok.text))
            elif _is_constant_token(tok.text):
                order.append(("attr", len(attributes)))
                attributes.append(Attribute(source, label, tok.text))
            elif _VAR_TOKEN_RE.match(tok.text):
                raise PenmanParseError(
                    f"dangling reference {tok.text!r}: no such variable is defined "
                    "and it is not a recognized constant",
                    tok.line, tok.column,
                )
            else:
                order.append(("attr", len(attributes)))
                attributes.append(Attribute(source, label, tok.text))
        return AmrGraph(root, self.nodes, edges, attributes, attachment_order=order)


def parse_penman(text: str) -> AmrGraph:
    """Parse one Penman-notation graph; `# ::key value` lines become metadata."""
    metadata, body = _split_metadata(text)
    tokens = _tokenize_penman(body)
    graph = _Parser(tokens).parse()
    graph.metadata = metadata
    return graph


def serialize_penman(g: AmrGraph, metadata: bool = True) -> str:
    """Canonical single-line Penman form, children in parse order; reentrant
    targets are written as bare variables after their first mention."""
    index = g.units()
    concept_of = g.concept_of
    emitted: set[str] = set()

    def write(var: str) -> str:
        emitted.add(var)
        parts = [f"({var} / {concept_of[var]}"]
        for att in index.children.get(var, []):
            if att.kind == "attr":
                parts.append(f"{att.label} {att.value}")
            elif att.target in emitted:
                parts.append(f"{att.label} {att.target}")
            else:
                parts.append(f"{att.label} {write(att.target)}")
        return " ".join(parts) + ")"

    body = write(g.root)
    if metadata and g.metadata:
        header = "".join(f"# ::{k} {v}\n" for k, v in g.metadata.items())
        return header + body
    return body


def read_corpus(text: str) -> list[AmrGraph]:
    """Parse a UTF-8 Penman file: one graph per blank-line-separated block."""
    graphs = []
    for block in re.split(r"\n\s*\n", text.strip()):
        if block.strip():
            graphs.append(parse_penman(block))
    return graphs


def write_corpus(graphs: list[AmrGraph]) -> str:
    return "\n\n".join(serialize_penman(g) for g in graphs) + "\n"


# ---------------------------------------------------------------------------
# Linearization


@dataclass
class Linearization:
    """DFS token sequence of a graph with pointer tokens.

    unit_of_token[i] is the path of the semantic unit token i belongs to, or
    None for structural parentheses.
    """

    tokens: list[str]
    unit_of_token: list[str | None]

    def units_covered(self) -> set[str]:
        return {u for u in self.unit_of_token if u is not None}


def linearize(g: AmrGraph) -> Linearization:
    """SPRING-style linearization: first mention of a node emits
    "<pointer:k>" (k = DFS discovery order) plus the concept token;
    re-mentions emit the pointer token alone."""
    index = g.units()
    pointer: dict[str, int] = {}
    tokens: list[str] = []
    units: list[str | None] = []

    def emit(tok: str, unit: str | None):
        tokens.append(tok)
        units.append(unit)

    def visit(var: str):
        pointer[var] = len(pointer)
        path = index.node_path[var]
        emit("(", None)
        emit(f"<pointer:{pointer[var]}>", path)
        emit(g.concept_of[var], path)
        for att in index.children[var]:
            emit(att.label, att.edge_path)
            if att.kind == "attr":
                emit(att.value, att.child_path)
            elif att.defines:
                visit(att.target)
            else:
                emit(f"<pointer:{pointer[att.target]}>", index.node_path[att.target])
        emit(")", None)

    visit(g.root)
    return Linearization(tokens, units)


def delinearize(tokens: list[str]) -> AmrGraph:
    """Rebuild a graph from a pointer-token linearization. Variables are
    regenerated as z<k> from pointer numbers, so compare the result with
    canonical_signature rather than variable names."""

    pos = 0

    def peek() -> str | None:
        return tokens[pos] if pos < len(tokens) else None

    def take() -> str:
        nonlocal pos
        if pos >= len(tokens):
            raise TokenStreamError("unexpected end of linearization", offset=pos)
        tok = tokens[pos]
        pos += 1
        return tok

    nodes: list[Node] = []
    raw: list[tuple[str, str, str, bool]] = []  # source, label, value, is_edge
    seen_pointers: set[int] = set()

    def var_of(k: int) -> str:
        return f"z{k}"

    def parse_node() -> str:
        tok = take()
        if tok != "(":
            raise TokenStreamError(f"expected '(', found {tok!r}", offset=pos - 1)
        ptr = take()
        m = _POINTER_RE.match(ptr)
        if not m:
            raise TokenStreamError(f"expected pointer token, found {ptr!r}", offset=pos - 1)
        k = int(m.group(1))
        if k in seen_pointers:
            raise TokenStreamError(f"pointer {k} defined twice", offset=pos - 1)
        seen_pointers.add(k)
        var = var_of(k)
        nodes.append(Node(var, take()))
        while True:
            tok = peek()
            if tok is None:
                raise TokenStreamError("missing ')' in linearization", offset=pos)
            if tok == ")":
                take()
                return var
            label = take()
            if not label.startswith(":"):
                raise TokenStreamError(f"expected relation, found {label!r}", offset=pos - 1)
            val = peek()
            if val == "(":
                child = parse_node()
                raw.append((var, label, child, True))
            else:
                val = take()
                m = _POINTER_RE.match(val)
                if m:
                    if int(m.group(1)) not in seen_pointers:
                        raise TokenStreamError(
                            f"pointer {val!r} referenced before definition", offset=pos - 1
                        )
                    raw.append((var, label, var_of(int(m.group(1))), True))
                else:
                    raw.append((var, label, val, False))

    root = parse_node()
    if pos != len(tokens):
        raise TokenStreamError("trailing tokens after linearization", offset=pos)

    edges = []
    attributes = []
    order: list[tuple[str, int]] = []
    for source, label, value, is_edge in raw:
        if is_edge:
            order.append(("edge", len(edges)))
            edges.append(Edge(source, label, value))
        else:
            order.append(("attr", len(attributes)))
            attributes.append(Attribute(source, label, value))
    return AmrGraph(root, nodes, edges, attributes, attachment_order=order)


# ---------------------------------------------------------------------------
# Decoder-token mapping


@dataclass
class GraphPosMap:
    """decoder-token index -> semantic-unit path (None for structural and
    special tokens)."""

    decoder_tokens: list[str]
    unit_of_token: list[str | None]

    def tokens_of_unit(self) -> dict[str, list[int]]:
        out: dict[str, list[int]] = {}
        for i, u in enumerate(self.unit_of_token):
            if u is not None:
                out.setdefault(u, []).append(i)
        return out


def map_output_tokens(
    lin: Linearization,
    decoder_tokens: list[str],
    marker: str = "auto",
    specials: frozenset[str] = DEFAULT_SPECIAL_TOKENS,
) -> GraphPosMap:
    """Reconcile a subword tokenization of the linearization with its tokens.

    Every decoder token covering characters of a unit-bearing graph token is
    mapped to that unit (the first such unit when it straddles several);
    tokens covering only structural tokens, and special tokens, map to None.
    """
    covered = covered_segments(decoder_tokens, lin.tokens, marker=marker, specials=specials)
    mapping: list[str | None] = []
    for segs in covered:
        unit = None
        for s in segs:
            if lin.unit_of_token[s] is not None:
                unit = lin.unit_of_token[s]
                break
        mapping.append(unit)
    return GraphPosMap(list(decoder_tokens), mapping)
