"""Word tokenization, LEAMR-style span segmentation, and reconciliation of
encoder subword tokens with sentence words."""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import TokenStreamError
from .subtokens import (
    DEFAULT_SPECIAL_TOKENS,
    covered_segments,
    detect_marker,
    is_word_initial,
    strip_marker,
)

_WORD_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)


def word_tokenize(sentence: str) -> list[str]:
    """Whitespace and punctuation splitting tokenizer."""
    return _WORD_RE.findall(sentence)


@dataclass
class SentenceTokens:
    """Encoder subword tokens aligned with the sentence's words.

    word_of_token is None for model special tokens; over the remaining
    tokens it is monotone non-decreasing and covers every word.
    """

    encoder_tokens: list[str]
    words: list[str]
    word_of_token: list[int | None]

    def tokens_of_word(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in self.words]
        for i, w in enumerate(self.word_of_token):
            if w is not None:
                out[w].append(i)
        return out


def map_input_tokens(
    encoder_tokens: list[str],
    words: list[str] | None = None,
    marker: str = "auto",
    specials: frozenset[str] = DEFAULT_SPECIAL_TOKENS,
) -> SentenceTokens:
    """Group encoder subwords into words.

    With `words` given, tokens are reconciled against them by character
    offsets and word-boundary markers are validated (a word-initial marker
    inside a word is an inconsistency). Without `words`, the words are
    derived from the markers themselves.
    """
    style = detect_marker(encoder_tokens) if marker == "auto" else marker

    if words is None:
        words = []
        for tok in encoder_tokens:
            if tok in specials:
                continue
            piece = strip_marker(tok, style)
            if not words or is_word_initial(tok, style):
                words.append(piece)
            else:
                words[-1] += piece
        words = [w for w in words if w]

    mapping = covered_segments(encoder_tokens, words, marker=style, specials=specials)
    word_of_token: list[int | None] = [segs[0] if segs else None for segs in mapping]

    if style in ("gpt2", "sentencepiece"):
        word_starts = set()
        acc = 0
        for w in words:
            word_starts.add(acc)
            acc += len(w)
        cursor = 0
        for tok, w in zip(encoder_tokens, word_of_token):
            if w is None:
                continue
            if is_word_initial(tok, style) and cursor not in word_starts:
                raise TokenStreamError(
                    f"word-boundary marker on continuation token {tok!r}",
                    offset=cursor,
                )
            cursor += len(strip_marker(tok, style))

    seen = {w for w in word_of_token if w is not None}
    if len(seen) != len(words):
        missing = sorted(set(range(len(words))) - seen)
        raise TokenStreamError(
            f"words {missing} receive no encoder token"
        )
    last = -1
    for w in word_of_token:
        if w is None:
            continue
        if w < last:
            raise TokenStreamError("word_of_token is not monotone")
        last = w
    return SentenceTokens(list(encoder_tokens), list(words), word_of_token)


# ---------------------------------------------------------------------------
# Span segmentation


@dataclass(frozen=True)
class Span:
    start: int  # word index
    end: int  # exclusive
    text: str

    @property
    def word_indices(self) -> tuple[int, ...]:
        return tuple(range(self.start, self.end))


@dataclass
class SpanList:
    spans: list[Span]
    span_of_word: list[int]

    def __len__(self):
        return len(self.spans)


def _spans_from_groups(groups: list[list[str]], words: list[str]) -> SpanList:
    spans: list[Span] = []
    span_of_word: list[int] = []
    cursor = 0
    for group in groups:
        start = cursor
        for w in group:
            if cursor >= len(words) or words[cursor] != w:
                raise TokenStreamError(
                    f"span word {w!r} does not match sentence word "
                    f"{words[cursor] if cursor < len(words) else None!r}"
                )
            cursor += 1
        spans.append(Span(start, cursor, " ".join(group)))
        span_of_word.extend([len(spans) - 1] * (cursor - start))
    if cursor != len(words):
        raise TokenStreamError("spans do not cover every word")
    return SpanList(spans, span_of_word)


def _is_capitalized(word: str) -> bool:
    return bool(word) and word[0].isalpha() and word[0].isupper()


def segment_spans(
    words: list[str],
    mwe_lexicon: set[tuple[str, ...]] | None = None,
) -> SpanList:
    """Group words into spans: one word each by default, with maximal-munch
    merging of lexicon multiword expressions and of runs of >= 2 capitalized
    words (named-entity heuristic). Lexicon matching is case-insensitive and
    requires consecutive words; overlaps resolve to the longest match."""
    lexicon = mwe_lexicon or set()
    max_len = max((len(e) for e in lexicon), default=1)
    lowered = [w.lower() for w in words]

    groups: list[list[str]] = []
    i = 0
    while i < len(words):
        best = 1
        for length in range(min(max_len, len(words) - i), 1, -1):
            if tuple(lowered[i:i + length]) in lexicon:
                best = length
                break
        run = 0
        while i + run < len(words) and _is_capitalized(words[i + run]):
            run += 1
        if run >= 2:
            best = max(best, run)
        groups.append(words[i:i + best])
        i += best
    return _spans_from_groups(groups, words)


def load_mwe_lexicon(text: str) -> set[tuple[str, ...]]:
    """One multiword expression per line; single words are ignored."""
    lexicon = set()
    for line in text.splitlines():
        parts = tuple(line.strip().lower().split())
        if len(parts) >= 2:
            lexicon.add(parts)
    return lexicon


def read_span_file(text: str) -> list[list[list[str]]]:
    """Gold span files: one sentence per line, spans separated by '|',
    words by spaces. Returns word groups per sentence."""
    sentences = []
    for line in text.splitlines():
        if not line.strip():
            continue
        groups = [chunk.split() for chunk in line.split("|")]
        sentences.append([g for g in groups if g])
    return sentences


def spans_from_file_line(groups: list[list[str]], words: list[str]) -> SpanList:
    return _spans_from_groups(groups, words)
