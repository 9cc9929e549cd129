"""Reconciliation of model subword tokens with reference segment streams.

Both the sentence side (subwords vs. words) and the graph side (subwords vs.
linearization tokens) reduce to the same problem: strip subword markers,
check that the concatenated characters match, and map every subword to the
segment(s) covering it.
"""

from __future__ import annotations

from .errors import TokenStreamError

# Model special tokens are never part of the reconciled character stream.
DEFAULT_SPECIAL_TOKENS = frozenset(
    {"<s>", "</s>", "<pad>", "<unk>", "<mask>", "[CLS]", "[SEP]", "[PAD]", "[UNK]"}
)

# marker style -> (word-initial prefix, continuation prefix)
_MARKER_STYLES = {
    "gpt2": ("Ġ", None),  # Ġ
    "sentencepiece": ("▁", None),  # ▁
    "wordpiece": (None, "##"),
    "none": (None, None),
}


def detect_marker(tokens: list[str]) -> str:
    """Guess the subword marker convention used by a token stream."""
    for tok in tokens:
        if tok.startswith("Ġ"):
            return "gpt2"
        if tok.startswith("▁"):
            return "sentencepiece"
        if tok.startswith("##"):
            return "wordpiece"
    return "none"


def strip_marker(token: str, style: str) -> str:
    initial, continuation = _MARKER_STYLES[style]
    if initial and token.startswith(initial):
        return token[len(initial):]
    if continuation and token.startswith(continuation):
        return token[len(continuation):]
    return token


def is_word_initial(token: str, style: str) -> bool:
    """Whether a token claims to start a new word under the given convention."""
    initial, continuation = _MARKER_STYLES[style]
    if initial is not None:
        return token.startswith(initial)
    if continuation is not None:
        return not token.startswith(continuation)
    return True


def _strip_and_check(
    tokens: list[str],
    segments: list[str],
    marker: str,
    specials: frozenset[str],
) -> tuple[str, list[str | None]]:
    style = detect_marker(tokens) if marker == "auto" else marker
    if style not in _MARKER_STYLES:
        raise ValueError(f"unknown marker style {style!r}")
    stripped: list[str | None] = [
        None if tok in specials else strip_marker(tok, style) for tok in tokens
    ]
    token_chars = "".join(s for s in stripped if s is not None)
    segment_chars = "".join(segments)
    if token_chars != segment_chars:
        offset = 0
        limit = min(len(token_chars), len(segment_chars))
        while offset < limit and token_chars[offset] == segment_chars[offset]:
            offset += 1
        raise TokenStreamError(
            f"token stream spells {token_chars[offset:offset + 12]!r} where "
            f"segments spell {segment_chars[offset:offset + 12]!r}",
            offset=offset,
        )
    return style, stripped


def _segment_of_char(segments: list[str]) -> list[int]:
    table: list[int] = []
    for seg_idx, seg in enumerate(segments):
        table.extend([seg_idx] * len(seg))
    return table


def covered_segments(
    tokens: list[str],
    segments: list[str],
    marker: str = "auto",
    specials: frozenset[str] = DEFAULT_SPECIAL_TOKENS,
) -> list[list[int]]:
    """Map each token to the ordered list of segment indices it touches.

    Special tokens map to []. A token that strips to nothing (a bare marker)
    takes the segment at its start offset. Raises TokenStreamError when the
    marker-stripped concatenation of the tokens differs from the segments'.
    """
    _, stripped = _strip_and_check(tokens, segments, marker, specials)
    seg_of_char = _segment_of_char(segments)

    out: list[list[int]] = []
    cursor = 0
    for s in stripped:
        if s is None:
            out.append([])
            continue
        if not seg_of_char:
            out.append([])
            continue
        start = min(cursor, len(seg_of_char) - 1)
        end = min(cursor + max(len(s), 1), len(seg_of_char))
        seen: list[int] = []
        for idx in seg_of_char[start:max(end, start + 1)]:
            if not seen or seen[-1] != idx:
                seen.append(idx)
        out.append(seen)
        cursor += len(s)
    return out


def reconcile(
    tokens: list[str],
    segments: list[str],
    marker: str = "auto",
    specials: frozenset[str] = DEFAULT_SPECIAL_TOKENS,
) -> list[int | None]:
    """Map each token to the index of the first segment it touches (None for specials)."""
    covered = covered_segments(tokens, segments, marker=marker, specials=specials)
    return [c[0] if c else None for c in covered]
