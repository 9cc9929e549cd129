"""Decoder-over-encoder score matrices: the AAM1 container, validation, and
the reductions used before alignment extraction (subword and unit merging,
layer sums, and the learned scalar head mix)."""

from __future__ import annotations

import base64
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ContainerError
from .graph import GraphPosMap
from .sentence import SentenceTokens

AAM1_VERSION = "AAM1"
# f32 payloads round row sums away from 1.0; validate at storage precision.
ROW_SUM_ATOL_STORED = 1e-4
ROW_SUM_ATOL = 1e-6


@dataclass
class ScoreMatrix:
    """An n_d x n_e real matrix: rows are decoder tokens, columns encoder
    tokens. layer/head are None for matrices aggregated over them."""

    values: np.ndarray
    layer: int | None
    head: int | None
    encoder_tokens: list[str]
    decoder_tokens: list[str]
    normalized: bool = False
    method: str = "cross-attention"
    sentence_id: str = ""

    @property
    def n_d(self) -> int:
        return self.values.shape[0]

    @property
    def n_e(self) -> int:
        return self.values.shape[1]

    def validate(self, atol: float = ROW_SUM_ATOL) -> None:
        if self.values.ndim != 2:
            raise ContainerError(f"matrix must be 2-D, got shape {self.values.shape}")
        if self.values.shape != (len(self.decoder_tokens), len(self.encoder_tokens)):
            raise ContainerError(
                f"shape {self.values.shape} does not match token lists "
                f"({len(self.decoder_tokens)} x {len(self.encoder_tokens)})"
            )
        if not np.all(np.isfinite(self.values)):
            raise ContainerError("matrix contains non-finite values")
        if self.normalized and self.n_e > 0:
            sums = self.values.sum(axis=1)
            bad = np.nonzero(np.abs(sums - 1.0) > atol)[0]
            if bad.size:
                raise ContainerError(
                    f"normalized flag set but row {bad[0]} sums to {sums[bad[0]]:.6g}"
                )

    def total_mass(self) -> float:
        return float(self.values.sum())


@dataclass
class MixWeights:
    """Scalar mix parameters: softmax(raw) over head_subset, scaled by gamma."""

    raw: list[float]
    gamma: float = 1.0
    head_subset: tuple[int, ...] | None = None

    def subset(self, n_heads: int) -> tuple[int, ...]:
        if self.head_subset is None:
            return tuple(range(n_heads))
        return tuple(sorted(self.head_subset))

    def softmax_weights(self, n_heads: int) -> dict[int, float]:
        subset = self.subset(n_heads)
        for h in subset:
            if h < 0 or h >= len(self.raw):
                raise ValueError(f"head {h} outside raw weight vector of size {len(self.raw)}")
        raw = np.array([self.raw[h] for h in subset], dtype=np.float64)
        raw -= raw.max()
        e = np.exp(raw)
        s = e / e.sum()
        return {h: float(w) for h, w in zip(subset, s)}

    @staticmethod
    def from_json(text: str) -> "MixWeights":
        obj = json.loads(text)
        subset = obj.get("head_subset")
        return MixWeights(
            raw=[float(x) for x in obj["raw"]],
            gamma=float(obj.get("gamma", 1.0)),
            head_subset=tuple(subset) if subset is not None else None,
        )

    def to_json(self) -> str:
        obj = {
            "raw": list(self.raw),
            "gamma": self.gamma,
            "head_subset": list(self.head_subset) if self.head_subset is not None else None,
        }
        return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# AAM1 container

def _payload_key(layer: int, head: int) -> str:
    return f"L{layer}H{head}"


def _manifest_dict(mats: list[ScoreMatrix], n_layers: int, n_heads: int) -> dict:
    first = mats[0]
    return {
        "version": AAM1_VERSION,
        "sentence_id": first.sentence_id,
        "n_layers": n_layers,
        "n_heads": n_heads,
        "encoder_tokens": first.encoder_tokens,
        "decoder_tokens": first.decoder_tokens,
        "dtype": "f32",
        "method": first.method,
        "normalized": bool(first.normalized),
    }


def write_matrices(mats: list[ScoreMatrix], path: str | Path, embedded: bool = False) -> None:
    """Write a full (n_layers x n_heads) grid of matrices as one AAM1 bundle.

    embedded=True produces a single JSON document with base64 payloads,
    otherwise `path` becomes a directory with manifest.json plus one
    little-endian f32 side-car file per (layer, head)."""
    if not mats:
        raise ContainerError("cannot write an empty bundle")
    layers = sorted({m.layer for m in mats})
    heads = sorted({m.head for m in mats})
    if any(l is None for l in layers) or any(h is None for h in heads):
        raise ContainerError("bundle matrices must carry concrete layer/head indices")
    n_layers, n_heads = max(layers) + 1, max(heads) + 1
    by_key = {(m.layer, m.head): m for m in mats}
    if len(by_key) != n_layers * n_heads:
        raise ContainerError(
            f"bundle must cover the full {n_layers}x{n_heads} grid, got {len(by_key)}"
        )
    for m in mats:
        m.validate(atol=ROW_SUM_ATOL_STORED)

    manifest = _manifest_dict(mats, n_layers, n_heads)
    path = Path(path)
    if embedded:
        payloads = {}
        for (l, h), m in sorted(by_key.items()):
            raw = np.ascontiguousarray(m.values, dtype="<f4").tobytes()
            payloads[_payload_key(l, h)] = base64.b64encode(raw).decode("ascii")
        manifest["payloads"] = payloads
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    else:
        path.mkdir(parents=True, exist_ok=True)
        (path / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n"
        )
        for (l, h), m in sorted(by_key.items()):
            raw = np.ascontiguousarray(m.values, dtype="<f4").tobytes()
            (path / f"{_payload_key(l, h)}.f32").write_bytes(raw)


def _check_manifest(manifest: dict) -> None:
    version = manifest.get("version")
    if version != AAM1_VERSION:
        raise ContainerError(f"unknown container version {version!r}")
    dtype = manifest.get("dtype", "f32")
    if dtype != "f32":
        raise ContainerError(f"unsupported dtype {dtype!r}")
    for key in ("n_layers", "n_heads", "encoder_tokens", "decoder_tokens"):
        if key not in manifest:
            raise ContainerError(f"manifest is missing {key!r}")


def load_matrices(path: str | Path) -> list[ScoreMatrix]:
    """Load and validate an AAM1 bundle (embedded document or side-car
    directory). Returns matrices sorted by (layer, head)."""
    path = Path(path)
    if path.is_dir():
        manifest_path = path / "manifest.json"
        if not manifest_path.exists():
            raise ContainerError(f"{path} has no manifest.json")
        manifest = json.loads(manifest_path.read_text())
        _check_manifest(manifest)
        get_payload = lambda key: _read_sidecar(path / f"{key}.f32")
    else:
        manifest = json.loads(path.read_text())
        _check_manifest(manifest)
        payloads = manifest.get("payloads", {})
        def get_payload(key: str) -> bytes:
            if key not in payloads:
                raise ContainerError(f"missing payload {key}")
            return base64.b64decode(payloads[key])

    n_layers = int(manifest["n_layers"])
    n_heads = int(manifest["n_heads"])
    enc = list(manifest["encoder_tokens"])
    dec = list(manifest["decoder_tokens"])
    n_d, n_e = len(dec), len(enc)
    normalized = bool(manifest.get("normalized", False))
    method = manifest.get("method", "cross-attention")
    sid = manifest.get("sentence_id", "")

    mats: list[ScoreMatrix] = []
    for l in range(n_layers):
        for h in range(n_heads):
            key = _payload_key(l, h)
            raw = get_payload(key)
            expected = n_d * n_e * 4
            if len(raw) != expected:
                raise ContainerError(
                    f"payload {key} has {len(raw)} bytes, expected {expected}"
                )
            values = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(n_d, n_e)
            m = ScoreMatrix(
                values=values, layer=l, head=h,
                encoder_tokens=enc, decoder_tokens=dec,
                normalized=normalized, method=method, sentence_id=sid,
            )
            m.validate(atol=ROW_SUM_ATOL_STORED)
            mats.append(m)
    return mats


def _read_sidecar(p: Path) -> bytes:
    if not p.exists():
        raise ContainerError(f"missing payload file {p.name}")
    return p.read_bytes()


def find_bundle(matrices_dir: str | Path, sentence_id: str) -> Path:
    """Locate the bundle for a sentence: `<id>/` side-car directory or
    `<id>.aam1.json` embedded document."""
    root = Path(matrices_dir)
    sidecar = root / sentence_id
    if sidecar.is_dir():
        return sidecar
    embedded = root / f"{sentence_id}.aam1.json"
    if embedded.exists():
        return embedded
    raise ContainerError(f"no AAM1 bundle for sentence {sentence_id!r} under {root}")


# ---------------------------------------------------------------------------
# Reductions


def merge_subword_columns(m: ScoreMatrix, st: SentenceTokens) -> ScoreMatrix:
    """Sum the columns of encoder subwords belonging to the same word.

    Columns of model special tokens are dropped; when none exist the total
    mass of every row is preserved exactly."""
    if list(m.encoder_tokens) != list(st.encoder_tokens):
        raise ContainerError("matrix encoder tokens differ from SentenceTokens")
    n_words = len(st.words)
    merged = np.zeros((m.n_d, n_words), dtype=np.float64)
    dropped = False
    for col, w in enumerate(st.word_of_token):
        if w is None:
            dropped = True
            continue
        merged[:, w] += m.values[:, col]
    return replace(
        m,
        values=merged,
        encoder_tokens=list(st.words),
        normalized=m.normalized and not dropped,
    )


def merge_unit_rows(m: ScoreMatrix, gp: GraphPosMap) -> ScoreMatrix:
    """Sum the rows of decoder subwords belonging to the same semantic unit.

    Rows mapped to no unit (structural or special tokens) are dropped. The
    output rows follow first-token order of the units; the row labels become
    the unit paths."""
    if list(m.decoder_tokens) != list(gp.decoder_tokens):
        raise ContainerError("matrix decoder tokens differ from GraphPosMap")
    order: list[str] = []
    row_of_unit: dict[str, int] = {}
    for u in gp.unit_of_token:
        if u is not None and u not in row_of_unit:
            row_of_unit[u] = len(order)
            order.append(u)
    merged = np.zeros((len(order), m.n_e), dtype=np.float64)
    for row, u in enumerate(gp.unit_of_token):
        if u is not None:
            merged[row_of_unit[u], :] += m.values[row, :]
    return replace(
        m,
        values=merged,
        decoder_tokens=order,
        normalized=False,
    )


def sum_layers(mats: list[ScoreMatrix], lo: int, hi: int) -> ScoreMatrix:
    """Elementwise sum of every matrix with layer in [lo, hi)."""
    selected = [m for m in mats if m.layer is not None and lo <= m.layer < hi]
    if not selected:
        raise ContainerError(f"no matrices in layer range [{lo}:{hi})")
    # canonical accumulation order keeps the sum identical under input permutation
    selected.sort(key=lambda m: (m.layer, m.head if m.head is not None else -1))
    first = selected[0]
    total = np.zeros_like(first.values, dtype=np.float64)
    for m in selected:
        if m.values.shape != first.values.shape:
            raise ContainerError("layer sum over matrices of differing shapes")
        if list(m.encoder_tokens) != list(first.encoder_tokens) or list(
            m.decoder_tokens
        ) != list(first.decoder_tokens):
            raise ContainerError("layer sum over matrices with differing token lists")
        total = total + m.values
    return replace(
        first,
        values=total,
        layer=None if len({m.layer for m in selected}) > 1 else first.layer,
        head=None if len(selected) > 1 else first.head,
        normalized=len(selected) == 1 and first.normalized,
    )


def scalar_mix(heads: list[ScoreMatrix], w: MixWeights) -> ScoreMatrix:
    """gamma * sum_h softmax(raw)_h * att_h over the configured head subset.

    All inputs must come from one layer and share dimensions."""
    if not heads:
        raise ContainerError("scalar mix over an empty head list")
    layers = {m.layer for m in heads}
    if len(layers) != 1:
        raise ContainerError(f"scalar mix requires a single layer, got {sorted(layers)}")
    by_head = {m.head: m for m in heads}
    if len(by_head) != len(heads):
        raise ContainerError("duplicate head indices in scalar mix input")
    n_heads = len(w.raw)
    weights = w.softmax_weights(n_heads)
    missing = [h for h in weights if h not in by_head]
    if missing:
        raise ContainerError(f"head subset {missing} not present in the input matrices")
    first = heads[0]
    total = np.zeros_like(first.values, dtype=np.float64)
    for h, s in weights.items():
        m = by_head[h]
        if m.values.shape != first.values.shape:
            raise ContainerError("scalar mix over matrices of differing shapes")
        total = total + w.gamma * s * m.values
    return replace(
        first,
        values=total,
        head=None,
        normalized=all(by_head[h].normalized for h in weights) and math.isclose(w.gamma, 1.0),
    )
