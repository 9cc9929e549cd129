import itertools
import math

import numpy as np
import pytest

from amralign.errors import DegenerateInputError
from amralign.extraction import AlignmentSet, FlatRecord, SubgraphRecord
from amralign.graph import GraphPosMap, linearize, map_output_tokens, parse_penman
from amralign.matrices import ScoreMatrix
from amralign.metrics import (
    AlignMatrix,
    HeadLayerCorrelation,
    Scores,
    build_align_matrix,
    corpus_coverage,
    coverage,
    evaluate,
    exact_scores,
    grid_csv,
    jaccard,
    partial_scores,
    pearson_correlation,
    per_sentence_match_series,
    record_spans,
    render_heatmap,
    span_f1,
    wilcoxon_signed_rank,
)
from amralign.sentence import map_input_tokens
from conftest import PipelineContext
from metric_pairs import PAIRS, _aset, sub


@pytest.mark.parametrize("name,pred,gold,rtype,exact,partial", PAIRS,
                         ids=[p[0] for p in PAIRS])
def test_hand_computed_pairs(name, pred, gold, rtype, exact, partial):
    ex = exact_scores([pred], [gold])[rtype]
    pa = partial_scores([pred], [gold])[rtype]
    for got, want in zip((ex.p, ex.r, ex.f1), exact):
        assert abs(got - want) < 1e-9
    for got, want in zip((pa.p, pa.r, pa.f1), partial):
        assert abs(got - want) < 1e-9
    assert pa.f1 >= ex.f1 - 1e-12  # partial credit can only add


def test_exact_scores_self_is_100(corpus):
    pred = _aset(subgraph=[sub([0], ["0"])])
    scores = exact_scores([pred], [pred])
    assert scores["subgraph"] == Scores(100.0, 100.0, 100.0)


def test_sentence_id_mismatch():
    a = AlignmentSet(sentence_id="s1")
    b = AlignmentSet(sentence_id="s2")
    with pytest.raises(ValueError, match="mismatch"):
        exact_scores([a], [b])


def test_jaccard_cases():
    assert jaccard(frozenset("ab"), frozenset("bc")) == pytest.approx(1 / 3)
    assert jaccard(frozenset(), frozenset()) == 1.0
    assert jaccard(frozenset("a"), frozenset()) == 0.0


def test_span_f1_identical():
    spans = [{(0, 2), (2, 3)}]
    assert span_f1(spans, spans).f1 == 100.0


def test_span_f1_one_boundary_shifted():
    # 4 gold spans, prediction shifts one boundary: 2 of 4 predicted match
    pred = [{(0, 1), (1, 3), (3, 4), (4, 5)}]
    gold = [{(0, 1), (1, 2), (2, 4), (4, 5)}]
    got = span_f1(pred, gold)
    assert got.p == 50.0 and got.r == 50.0 and got.f1 == 50.0


def test_span_f1_empty():
    got = span_f1([set()], [{(0, 1)}])
    assert got.f1 == 0.0


def test_coverage_partial_isi():
    g = parse_penman("(a / a1 :ARG0 (b / b1) :ARG1 (c / c1 :ARG0 (d / d1)))")
    units = [u.path for u in g.units().units]
    assert len(units) == 7
    aset = AlignmentSet(standard="isi")
    for u in units[:5]:
        aset.flat.append(FlatRecord((0,), u))
    assert coverage(aset, g) == pytest.approx(100.0 * 5 / 7)


def test_coverage_empty_graph_convention():
    from amralign.graph import AmrGraph

    g = AmrGraph("x", [], [])
    assert coverage(AlignmentSet(), g) == 100.0


def test_corpus_coverage_pools_units():
    g1 = parse_penman("(a / a1)")
    g2 = parse_penman("(b / b1 :mod (c / c1))")
    full = AlignmentSet(subgraph=[SubgraphRecord((0,), ("0",))])
    empty = AlignmentSet()
    # g1 covered (1 unit), g2 uncovered (3 units)
    assert corpus_coverage([full, empty], [g1, g2]) == pytest.approx(25.0)


def make_align_context():
    g = parse_penman("(s / sell-01 :ARG0 (m / merchant))")
    lin = linearize(g)
    # decoder subwords: split "merchant" into two pieces
    dec = []
    for t in lin.tokens:
        if t == "merchant":
            dec.extend(["merch", "ant"])
        else:
            dec.append(t)
    gp = map_output_tokens(lin, dec)
    st = map_input_tokens(["the", "mer", "chant", "sold", "."],
                          words=["the", "merchant", "sold", "."])
    return g, lin, gp, st


def test_build_align_matrix_cartesian_expansion():
    g, lin, gp, st = make_align_context()
    m_path = g.units().node_path["m"]
    aset = AlignmentSet(subgraph=[SubgraphRecord((1,), (m_path,))])
    am = build_align_matrix(aset, st, gp, g)
    # every decoder token of the unit x every encoder subword of "merchant"
    d_rows = [i for i, u in enumerate(gp.unit_of_token) if u == m_path]
    e_cols = [i for i, w in enumerate(st.word_of_token) if w == 1]
    assert am.values.sum() == len(d_rows) * len(e_cols)
    assert {(d, e) for d in d_rows for e in e_cols} == {
        (d, e) for d, e in zip(*np.nonzero(am.values))
    }


def test_build_align_matrix_two_by_two():
    # 1 alignment of a 2-subword word to a 2-token unit: exactly 4 ones
    gp = GraphPosMap(["u1a", "u1b"], ["0", "0"])
    st = map_input_tokens(["wa", "wb"], words=["wawb"])
    aset = AlignmentSet(flat=[FlatRecord((0,), "0")])
    am = build_align_matrix(aset, st, gp)
    assert am.values.sum() == 4.0
    assert am.values.shape == (2, 2)


def test_build_align_matrix_empty():
    g, lin, gp, st = make_align_context()
    am = build_align_matrix(AlignmentSet(), st, gp, g)
    assert am.values.sum() == 0.0


def test_build_align_matrix_masks_special_positions():
    g, lin, gp, st = make_align_context()
    s_path = g.units().node_path["s"]
    aset = AlignmentSet(subgraph=[SubgraphRecord((3,), (s_path,))])  # "." word
    am = build_align_matrix(aset, st, gp, g)
    # punctuation column masked: nothing may appear there
    punct_col = [i for i, w in enumerate(st.word_of_token) if w == 3]
    assert am.values[:, punct_col].sum() == 0.0
    assert am.mask[:, punct_col].all()
    structural_rows = [i for i, u in enumerate(gp.unit_of_token) if u is None]
    assert am.mask[structural_rows, :].all()


def test_build_align_matrix_subgraph_includes_internal_edges():
    g, lin, gp, st = make_align_context()
    index = g.units()
    aset = AlignmentSet(subgraph=[SubgraphRecord((1,), ("0", "0.0"))])
    am = build_align_matrix(aset, st, gp, g)
    edge_rows = [i for i, u in enumerate(gp.unit_of_token) if u == "0.0.r"]
    assert am.values[edge_rows].sum() > 0


def pearson_oracle(x, y):
    n = len(x)
    sx, sy = sum(x), sum(y)
    sxx = sum(v * v for v in x)
    syy = sum(v * v for v in y)
    sxy = sum(a * b for a, b in zip(x, y))
    return (n * sxy - sx * sy) / math.sqrt((n * sxx - sx**2) * (n * syy - sy**2))


def test_pearson_proportional_is_one():
    am = AlignMatrix(np.array([[1.0, 0.0], [0.0, 1.0]]), np.zeros((2, 2), dtype=bool))
    assert pearson_correlation(2.5 * am.values + 0.0, am) == pytest.approx(1.0)


def test_pearson_inverted_is_minus_one():
    am = AlignMatrix(np.array([[1.0, 0.0], [0.0, 1.0]]), np.zeros((2, 2), dtype=bool))
    assert pearson_correlation(1.0 - am.values, am) == pytest.approx(-1.0)


def test_pearson_2x2_matches_formula_oracle():
    m = np.array([[0.9, 0.1], [0.2, 0.8]])
    am = AlignMatrix(np.array([[1.0, 0.0], [0.0, 1.0]]), np.zeros((2, 2), dtype=bool))
    want = pearson_oracle(m.ravel().tolist(), am.values.ravel().tolist())
    assert abs(pearson_correlation(m, am) - want) < 1e-9


def test_pearson_constant_raises():
    am = AlignMatrix(np.array([[1.0, 0.0]]), np.zeros((1, 2), dtype=bool))
    with pytest.raises(DegenerateInputError):
        pearson_correlation(np.array([[0.5, 0.5]]), am)


def test_pearson_affine_invariance():
    rng = np.random.default_rng(8)
    for _ in range(20):
        m = rng.random((4, 5))
        am = AlignMatrix((rng.random((4, 5)) < 0.4).astype(float), np.zeros((4, 5), bool))
        if am.values.std() == 0:
            continue
        base = pearson_correlation(m, am)
        scaled = pearson_correlation(3.7 * m + 11.0, am)
        assert abs(base - scaled) < 1e-9


def test_pearson_respects_mask():
    m = np.array([[0.9, 0.1, 99.0], [0.2, 0.8, -99.0]])
    mask = np.zeros((2, 3), dtype=bool)
    mask[:, 2] = True
    am = AlignMatrix(np.array([[1.0, 0, 0], [0, 1.0, 0]]), mask)
    want = pearson_oracle([0.9, 0.1, 0.2, 0.8], [1, 0, 0, 1])
    assert abs(pearson_correlation(m, am) - want) < 1e-9


def mat(values, layer, head):
    v = np.asarray(values, dtype=np.float64)
    return ScoreMatrix(v, layer, head, [f"e{i}" for i in range(v.shape[1])],
                       [f"d{i}" for i in range(v.shape[0])])


def test_grid_single_cell():
    am = AlignMatrix(np.array([[1.0, 0.0], [0.0, 1.0]]), np.zeros((2, 2), bool))
    acc = HeadLayerCorrelation(1, 1)
    acc.update([mat([[0.8, 0.2], [0.3, 0.7]], 0, 0)], am)
    grid = acc.grid()
    assert grid.shape == (1, 1)
    assert grid[0, 0] == pytest.approx(
        pearson_correlation(np.array([[0.8, 0.2], [0.3, 0.7]]), am)
    )


def test_grid_matches_per_matrix_pearson():
    rng = np.random.default_rng(3)
    am = AlignMatrix((rng.random((3, 4)) < 0.5).astype(float), np.zeros((3, 4), bool))
    mats = [mat(rng.random((3, 4)), l, h) for l in range(2) for h in range(2)]
    grid = HeadLayerCorrelation(2, 2)
    grid.update(mats, am)
    got = grid.grid()
    for m in mats:
        assert got[m.layer, m.head] == pytest.approx(pearson_correlation(m, am))


def test_grid_ordering_invariant_under_affine_rescale():
    rng = np.random.default_rng(5)
    am = AlignMatrix((rng.random((3, 4)) < 0.5).astype(float), np.zeros((3, 4), bool))
    mats = [mat(rng.random((3, 4)), 0, h) for h in range(4)]
    acc = HeadLayerCorrelation(1, 4)
    acc.update(mats, am)
    base = acc.grid()[0]
    rescaled = [mat(2.0 * m.values + 1.0, 0, m.head) for m in mats]
    acc2 = HeadLayerCorrelation(1, 4)
    acc2.update(rescaled, am)
    again = acc2.grid()[0]
    assert list(np.argsort(base)) == list(np.argsort(again))
    np.testing.assert_allclose(base, again, atol=1e-9)


def test_grid_accumulates_across_sentences():
    # two sentences must behave like one concatenated flatten
    rng = np.random.default_rng(6)
    ams = [
        AlignMatrix((rng.random((2, 3)) < 0.5).astype(float), np.zeros((2, 3), bool)),
        AlignMatrix((rng.random((4, 2)) < 0.5).astype(float), np.zeros((4, 2), bool)),
    ]
    m1, m2 = rng.random((2, 3)), rng.random((4, 2))
    acc = HeadLayerCorrelation(1, 1)
    acc.update([mat(m1, 0, 0)], ams[0])
    acc.update([mat(m2, 0, 0)], ams[1])
    x = np.concatenate([m1.ravel(), m2.ravel()])
    y = np.concatenate([ams[0].values.ravel(), ams[1].values.ravel()])
    assert acc.grid()[0, 0] == pytest.approx(pearson_oracle(list(x), list(y)))


def test_heatmap_rendering(tmp_path):
    grid = np.array([[0.1, 0.5], [np.nan, -0.2]])
    svg = tmp_path / "h.svg"
    pgm = tmp_path / "h.pgm"
    render_heatmap(grid, str(svg))
    render_heatmap(grid, str(pgm))
    assert svg.stat().st_size > 0
    data = pgm.read_bytes()
    header = b"P5\n2 2\n255\n"
    assert data.startswith(header) and len(data) == len(header) + 4
    csv = grid_csv(grid)
    assert csv.splitlines()[0] == "layer,head0,head1"
    assert csv.splitlines()[2].startswith("1,,")  # NaN renders empty


def wilcoxon_enumeration_oracle(a, b):
    """Brute force over all 2^n sign assignments of the ranked |d|."""
    d = np.asarray(a, float) - np.asarray(b, float)
    d = d[d != 0]
    absd = np.abs(d)
    order = np.argsort(absd, kind="stable")
    ranks = np.empty(len(d))
    i = 0
    sorted_abs = absd[order]
    while i < len(d):
        j = i
        while j + 1 < len(d) and sorted_abs[j + 1] == sorted_abs[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2 + 1
        i = j + 1
    w_plus = ranks[d > 0].sum()
    n = len(d)
    le = ge = 0
    for signs in itertools.product((0, 1), repeat=n):
        w = sum(r for s, r in zip(signs, ranks) if s)
        if w <= w_plus + 1e-12:
            le += 1
        if w >= w_plus - 1e-12:
            ge += 1
    total = 2**n
    p = min(1.0, 2.0 * min(le / total, ge / total))
    return min(w_plus, ranks.sum() - w_plus), p


def test_wilcoxon_all_zero_differences():
    with pytest.raises(DegenerateInputError, match="nonzero"):
        wilcoxon_signed_rank([1.0, 2.0, 3.0, 4, 5, 6, 7], [1.0, 2.0, 3.0, 4, 5, 6, 7])


def test_wilcoxon_too_few():
    with pytest.raises(DegenerateInputError):
        wilcoxon_signed_rank([1, 2, 3], [3, 2, 1])


def test_wilcoxon_textbook_eight_pairs():
    b = [100.0] * 8
    diffs = [6, -7, 9, 12, -2, 14, 5, 8]
    a = [x + d for x, d in zip(b, diffs)]
    res = wilcoxon_signed_rank(a, b)
    w_oracle, p_oracle = wilcoxon_enumeration_oracle(a, b)
    assert res.statistic == w_oracle == 5.0
    assert abs(res.p_value - p_oracle) < 1e-12
    assert res.p_value == pytest.approx(20 / 256)
    assert res.method == "exact"


def test_wilcoxon_exact_equals_enumeration():
    rng = np.random.default_rng(17)
    for trial in range(25):
        n = int(rng.integers(6, 13))
        a = rng.integers(-5, 6, size=n).astype(float)
        b = np.zeros(n)
        if not (a != 0).sum() >= 6:
            continue
        res = wilcoxon_signed_rank(list(a), list(b))
        w_oracle, p_oracle = wilcoxon_enumeration_oracle(a, b)
        assert res.statistic == pytest.approx(w_oracle), trial
        assert abs(res.p_value - p_oracle) < 1e-12, trial


def test_wilcoxon_normal_path():
    rng = np.random.default_rng(23)
    a = rng.normal(0.5, 1.0, size=40)
    b = rng.normal(0.0, 1.0, size=40)
    res = wilcoxon_signed_rank(list(a), list(b))
    assert res.method == "normal"
    assert 0.0 < res.p_value < 0.05
    # agreement with the exact computation when forced
    res_exact = wilcoxon_signed_rank(list(a), list(b), exact_max_n=64)
    assert abs(res.p_value - res_exact.p_value) < 0.01


def test_evaluate_report_end_to_end():
    pred = _aset(subgraph=[sub([0], ["0"]), sub([5], ["0.9"])])
    gold = _aset(subgraph=[sub([0], ["0"]), sub([1], ["0.0"])])
    g = parse_penman("(a / a1 :mod (b / b1))")
    report = evaluate([pred], [gold], graphs=[g])
    assert report.types["subgraph"].exact.f1 == pytest.approx(50.0)
    assert report.coverage is not None
    text = report.to_text()
    assert "subgraph" in text and "coverage" in text
    json_doc = report.to_json()
    assert '"exact"' in json_doc
    assert record_spans(pred) == {(0, 1), (5, 6)}


def test_per_sentence_series():
    pred = _aset(subgraph=[sub([0], ["0"]), sub([5], ["0.9"])])
    gold = _aset(subgraph=[sub([0], ["0"]), sub([1], ["0.0"])])
    counts = per_sentence_match_series([pred], [gold], stat="count")
    f1s = per_sentence_match_series([pred], [gold], stat="f1")
    assert counts == [1.0]
    assert f1s == [pytest.approx(50.0)]
