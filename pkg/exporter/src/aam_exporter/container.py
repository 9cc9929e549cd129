"""AAM1 bundle writer.

One bundle per sentence: a JSON manifest {version, sentence_id, n_layers,
n_heads, encoder_tokens, decoder_tokens, dtype, method, normalized} plus one
row-major little-endian float32 payload per (layer, head), either as side-car
`L{l}H{h}.f32` files next to `manifest.json` or base64-embedded in a single
document. The byte format matches the alignment toolkit's reader exactly.
"""

from __future__ import annotations

import base64
import json
from pathlib import Path

import numpy as np

AAM1_VERSION = "AAM1"


def manifest_dict(
    sentence_id: str,
    encoder_tokens: list[str],
    decoder_tokens: list[str],
    n_layers: int,
    n_heads: int,
    method: str = "cross-attention",
    normalized: bool = True,
) -> dict:
    return {
        "version": AAM1_VERSION,
        "sentence_id": sentence_id,
        "n_layers": n_layers,
        "n_heads": n_heads,
        "encoder_tokens": list(encoder_tokens),
        "decoder_tokens": list(decoder_tokens),
        "dtype": "f32",
        "method": method,
        "normalized": normalized,
    }


def write_bundle(
    path: str | Path,
    manifest: dict,
    payloads: dict[tuple[int, int], np.ndarray],
    embedded: bool = False,
) -> Path:
    """Write one sentence bundle. `payloads` maps (layer, head) to an
    (n_decoder x n_encoder) array; every cell of the declared grid must be
    present."""
    n_layers, n_heads = manifest["n_layers"], manifest["n_heads"]
    expected = {(l, h) for l in range(n_layers) for h in range(n_heads)}
    if set(payloads) != expected:
        missing = sorted(expected - set(payloads))
        raise ValueError(f"payload grid incomplete, missing {missing[:4]}")
    shape = (len(manifest["decoder_tokens"]), len(manifest["encoder_tokens"]))
    raws = {}
    for (l, h), values in sorted(payloads.items()):
        arr = np.ascontiguousarray(values, dtype="<f4")
        if arr.shape != shape:
            raise ValueError(f"payload L{l}H{h} has shape {arr.shape}, expected {shape}")
        raws[f"L{l}H{h}"] = arr.tobytes()

    path = Path(path)
    if embedded:
        doc = dict(manifest)
        doc["payloads"] = {
            key: base64.b64encode(raw).decode("ascii") for key, raw in raws.items()
        }
        path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    else:
        path.mkdir(parents=True, exist_ok=True)
        (path / "manifest.json").write_text(
            json.dumps(manifest, indent=2, sort_keys=True) + "\n"
        )
        for key, raw in raws.items():
            (path / f"{key}.f32").write_bytes(raw)
    return path
