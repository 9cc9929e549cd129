import pathlib

import numpy as np
import pytest

from amralign.graph import (
    AmrGraph,
    Attribute,
    Edge,
    Node,
    linearize,
    map_output_tokens,
    read_corpus,
)
from amralign.matrices import ScoreMatrix, merge_subword_columns
from amralign.sentence import map_input_tokens, segment_spans, word_tokenize

FIXTURES = pathlib.Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def corpus():
    return read_corpus((FIXTURES / "corpus.amr").read_text())


@pytest.fixture(scope="session")
def corpus_text():
    return (FIXTURES / "corpus.amr").read_text()


class PipelineContext:
    """Identity-tokenized end-to-end context for one graph + sentence."""

    def __init__(self, g, sentence, rng=None, values=None):
        self.graph = g
        self.words = word_tokenize(sentence)
        self.st = map_input_tokens(list(self.words), words=self.words)
        self.spans = segment_spans(self.words)
        self.lin = linearize(g)
        self.gp = map_output_tokens(self.lin, self.lin.tokens)
        n_d, n_e = len(self.lin.tokens), len(self.words)
        if values is None:
            rng = rng or np.random.default_rng(0)
            values = rng.random((n_d, n_e))
            values = values / values.sum(axis=1, keepdims=True)
        self.raw_matrix = ScoreMatrix(
            values=np.asarray(values, dtype=np.float64),
            layer=0,
            head=0,
            encoder_tokens=list(self.words),
            decoder_tokens=list(self.lin.tokens),
            normalized=bool(np.allclose(np.asarray(values).sum(axis=1), 1.0)),
            sentence_id=g.metadata.get("id", ""),
        )
        self.matrix = merge_subword_columns(self.raw_matrix, self.st)


@pytest.fixture
def pipeline():
    return PipelineContext


def random_graph(rng, max_nodes=10) -> AmrGraph:
    """Random small AMR: a tree plus optional reentrant edges and attributes."""
    n = int(rng.integers(1, max_nodes + 1))
    concepts = ["go-02", "want-01", "thing", "person", "city", "big", "see-01"]
    nodes = [Node(f"v{i}", concepts[int(rng.integers(0, len(concepts)))]) for i in range(n)]
    edges = []
    attributes = []
    labels = [":ARG0", ":ARG1", ":mod", ":time", ":op1", ":domain"]
    for i in range(1, n):
        parent = int(rng.integers(0, i))
        edges.append(Edge(f"v{parent}", labels[int(rng.integers(0, len(labels)))], f"v{i}"))
    for _ in range(int(rng.integers(0, 3))):
        if n < 2:
            break
        src = int(rng.integers(0, n))
        tgt = int(rng.integers(0, n))
        edges.append(Edge(f"v{src}", ":ARG2", f"v{tgt}"))
    for _ in range(int(rng.integers(0, 3))):
        src = int(rng.integers(0, n))
        value = str(int(rng.integers(0, 100))) if rng.random() < 0.5 else '"lit"'
        attributes.append(Attribute(f"v{src}", ":quant", value))
    g = AmrGraph("v0", nodes, edges, attributes)
    # keep only graphs where every node is reachable from the root
    reachable = {"v0"}
    frontier = ["v0"]
    while frontier:
        cur = frontier.pop()
        for e in g.edges:
            if e.source == cur and e.target not in reachable:
                reachable.add(e.target)
                frontier.append(e.target)
    if len(reachable) != n:
        return random_graph(rng, max_nodes)
    return g
