"""Minimal Penman reading and pointer-token linearization.

The exporter needs just enough graph handling to force-decode a reference
sequence: parse a Penman block, walk it depth-first, and emit the token
conventions the alignment toolkit expects ("(", "<pointer:k>", concept,
relation labels, constants, ")"). First mention of a node introduces its
pointer; re-mentions repeat the pointer token alone.
"""

from __future__ import annotations

import re

_METADATA_RE = re.compile(r"#\s*::(\S+)\s*(.*)$")
_TOKEN_RE = re.compile(r"\(|\)|/|\"(?:\\.|[^\"])*\"|[^\s()/]+")


class PenmanError(ValueError):
    pass


def read_blocks(text: str) -> list[tuple[dict[str, str], str]]:
    """Blank-line separated blocks -> (metadata, graph body) pairs."""
    blocks = []
    for chunk in re.split(r"\n\s*\n", text.strip()):
        if not chunk.strip():
            continue
        metadata: dict[str, str] = {}
        body_lines = []
        for line in chunk.splitlines():
            stripped = line.strip()
            if stripped.startswith("#"):
                m = _METADATA_RE.match(stripped)
                if m:
                    metadata[m.group(1)] = m.group(2).strip()
                continue
            body_lines.append(line)
        blocks.append((metadata, "\n".join(body_lines)))
    return blocks


def _parse(tokens: list[str]):
    pos = 0

    def take(expect: str | None = None) -> str:
        nonlocal pos
        if pos >= len(tokens):
            raise PenmanError("unexpected end of Penman input")
        tok = tokens[pos]
        if expect is not None and tok != expect:
            raise PenmanError(f"expected {expect!r}, found {tok!r}")
        pos += 1
        return tok

    def node():
        take("(")
        var = take()
        take("/")
        concept = take()
        children = []
        while True:
            if pos >= len(tokens):
                raise PenmanError("missing ')'")
            if tokens[pos] == ")":
                take()
                return {"var": var, "concept": concept, "children": children}
            label = take()
            if not label.startswith(":"):
                raise PenmanError(f"expected relation, found {label!r}")
            if pos < len(tokens) and tokens[pos] == "(":
                children.append((label, node()))
            else:
                children.append((label, take()))

    tree = node()
    if pos != len(tokens):
        raise PenmanError(f"trailing content {tokens[pos]!r}")
    return tree


def linearize_penman(graph_text: str) -> list[str]:
    """Pointer-token linearization of one Penman graph body."""
    tokens = _TOKEN_RE.findall(graph_text)
    tree = _parse(tokens)

    defined: dict[str, int] = {}
    variables: set[str] = set()

    def collect(node) -> None:
        variables.add(node["var"])
        for _, child in node["children"]:
            if isinstance(child, dict):
                collect(child)

    collect(tree)

    out: list[str] = []

    def emit(node) -> None:
        defined[node["var"]] = len(defined)
        out.append("(")
        out.append(f"<pointer:{defined[node['var']]}>")
        out.append(node["concept"])
        for label, child in node["children"]:
            out.append(label)
            if isinstance(child, dict):
                if child["var"] in defined:
                    out.append(f"<pointer:{defined[child['var']]}>")
                else:
                    emit(child)
            elif child in variables:
                if child in defined:
                    out.append(f"<pointer:{defined[child]}>")
                else:
                    out.append(child)  # forward reference; rare, kept verbatim
            else:
                out.append(child)
        out.append(")")

    emit(tree)
    return out
