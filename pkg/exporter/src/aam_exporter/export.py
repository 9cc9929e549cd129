"""Cross-attention export: run a pretrained encoder-decoder checkpoint over
sentence/graph pairs and dump every layer's and head's post-softmax
cross-attention matrix into AAM1 bundles.

Forced decoding (the default) feeds the reference linearization to the
decoder so the recorded rows line up with known graph tokens; --free-decode
greedily generates a sequence first and harvests attention for it instead.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .container import manifest_dict, write_bundle
from .linearize import PenmanError, linearize_penman, read_blocks


@dataclass
class ExportJob:
    model_path: str
    amr_path: str
    out_dir: str
    sents_path: str | None = None  # default: ::snt metadata
    embedded: bool = False
    free_decode: bool = False
    max_length: int = 128
    device: str = "cpu"


@dataclass
class SentenceReport:
    sentence_id: str
    ok: bool
    message: str = ""


def _load_pairs(job: ExportJob) -> list[tuple[str, str, str]]:
    """(sentence_id, sentence, graph body) triples."""
    blocks = read_blocks(Path(job.amr_path).read_text())
    if job.sents_path:
        sentences = [
            line for line in Path(job.sents_path).read_text().splitlines() if line.strip()
        ]
        if len(sentences) != len(blocks):
            raise ValueError(f"{len(sentences)} sentences for {len(blocks)} graphs")
    else:
        sentences = []
        for i, (metadata, _) in enumerate(blocks):
            if "snt" not in metadata:
                raise ValueError(f"graph {i} has no ::snt metadata and no sentence file")
            sentences.append(metadata["snt"])
    pairs = []
    for i, ((metadata, body), sentence) in enumerate(zip(blocks, sentences)):
        pairs.append((metadata.get("id", f"s{i}"), sentence, body))
    return pairs


def _graph_token_ids(tokenizer, tokens: list[str]) -> list[int]:
    """Tokenize the linearization token by token, so subwords never cross
    graph-token boundaries. Raises on vocabulary misses."""
    ids: list[int] = []
    unk = tokenizer.unk_token_id
    for tok in tokens:
        piece = tokenizer(tok, add_special_tokens=False)["input_ids"]
        if not piece or (unk is not None and unk in piece):
            raise PenmanError(f"graph token {tok!r} is not representable by the model vocabulary")
        ids.extend(piece)
    return ids


def export(job: ExportJob) -> list[SentenceReport]:
    from transformers import AutoModelForSeq2SeqLM, AutoTokenizer

    tokenizer = AutoTokenizer.from_pretrained(job.model_path)
    model = AutoModelForSeq2SeqLM.from_pretrained(
        job.model_path, attn_implementation="eager"
    )
    model.to(job.device)
    model.eval()
    n_layers = int(model.config.decoder_layers)
    n_heads = int(model.config.decoder_attention_heads)
    start_id = model.config.decoder_start_token_id
    if start_id is None:
        start_id = model.config.eos_token_id

    out_dir = Path(job.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    reports: list[SentenceReport] = []
    for sentence_id, sentence, body in _load_pairs(job):
        try:
            bundle = _export_one(
                job, tokenizer, model, n_layers, n_heads, start_id,
                sentence_id, sentence, body, out_dir,
            )
        except PenmanError as exc:
            reports.append(SentenceReport(sentence_id, False, str(exc)))
            continue
        reports.append(SentenceReport(sentence_id, True, str(bundle)))
    return reports


def _export_one(
    job, tokenizer, model, n_layers, n_heads, start_id,
    sentence_id, sentence, body, out_dir: Path,
) -> Path:
    enc = tokenizer(sentence, return_tensors="pt").to(job.device)
    if job.free_decode:
        with torch.no_grad():
            generated = model.generate(
                enc["input_ids"], max_length=job.max_length,
                num_beams=1, do_sample=False,
            )
        decoder_input_ids = generated[:, :-1] if generated.shape[1] > 1 else generated
    else:
        ids = _graph_token_ids(tokenizer, linearize_penman(body))
        decoder_input_ids = torch.tensor([[start_id] + ids], device=job.device)

    with torch.no_grad():
        outputs = model(
            input_ids=enc["input_ids"],
            attention_mask=enc.get("attention_mask"),
            decoder_input_ids=decoder_input_ids,
            output_attentions=True,
            return_dict=True,
        )
    cross = outputs.cross_attentions  # n_layers x (1, n_heads, n_d, n_e)
    if len(cross) != n_layers or cross[0].shape[1] != n_heads:
        raise PenmanError(
            f"model returned {len(cross)}x{cross[0].shape[1]} attention grids, "
            f"config promises {n_layers}x{n_heads}"
        )

    encoder_tokens = tokenizer.convert_ids_to_tokens(enc["input_ids"][0])
    decoder_tokens = tokenizer.convert_ids_to_tokens(decoder_input_ids[0])
    manifest = manifest_dict(
        sentence_id, encoder_tokens, decoder_tokens, n_layers, n_heads
    )
    payloads = {
        (l, h): cross[l][0, h].cpu().numpy().astype(np.float64)
        for l in range(n_layers)
        for h in range(n_heads)
    }
    target = out_dir / (f"{sentence_id}.aam1.json" if job.embedded else sentence_id)
    return write_bundle(target, manifest, payloads, embedded=job.embedded)
