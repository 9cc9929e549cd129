"""Alignment toolkit for AMR graphs: extract span-unit alignments from
decoder-over-encoder score matrices, apply structure rules, serialize in ISI
and LEAMR formats, and evaluate them."""

from .errors import (
    AlignmentFormatError,
    AmrAlignError,
    ContainerError,
    DegenerateInputError,
    PenmanParseError,
    TokenStreamError,
)
from .extraction import (
    AlignmentSet,
    ExtractionConfig,
    classify_alignments,
    extract_alignment_map,
    extract_alignments,
    read_alignments,
    select_span,
    write_alignments,
)
from .graph import (
    AmrGraph,
    GraphPosMap,
    Linearization,
    SemanticUnit,
    delinearize,
    enumerate_units,
    linearize,
    map_output_tokens,
    parse_penman,
    read_corpus,
    serialize_penman,
    write_corpus,
)
from .loss import LossInput, LossResult, fit_mix, grad_check, guided_loss
from .matrices import (
    MixWeights,
    ScoreMatrix,
    load_matrices,
    merge_subword_columns,
    merge_unit_rows,
    scalar_mix,
    sum_layers,
    write_matrices,
)
from .metrics import (
    AlignMatrix,
    EvalReport,
    Scores,
    build_align_matrix,
    corpus_coverage,
    coverage,
    evaluate,
    exact_scores,
    partial_scores,
    pearson_correlation,
    span_f1,
    wilcoxon_signed_rank,
)
from .rules import FixedMatch, apply_fixed_matches, fixed_matches
from .sentence import (
    SentenceTokens,
    Span,
    SpanList,
    map_input_tokens,
    segment_spans,
    word_tokenize,
)

__version__ = "0.1.0"
