import os

os.environ.setdefault("HF_HUB_OFFLINE", "1")
os.environ.setdefault("TRANSFORMERS_OFFLINE", "1")

import pytest
import torch
from tokenizers import Tokenizer
from tokenizers.models import WordLevel
from tokenizers.pre_tokenizers import WhitespaceSplit
from tokenizers.processors import TemplateProcessing
from transformers import BartConfig, BartForConditionalGeneration, PreTrainedTokenizerFast

from aam_exporter.linearize import linearize_penman, read_blocks

GRAPHS = """\
# ::id e01
# ::snt Thirst .
(t / thirst)

# ::id e02
# ::snt He wants to protect himself .
(w / want-01
    :ARG0 (h / he)
    :ARG1 (p / protect-01
        :ARG0 h
        :ARG1 h))

# ::id e03
# ::snt The girl is tall .
(t / tall
    :domain (g2 / girl))

# ::id e04
# ::snt A big dog .
(d / dog
    :mod (b / big))

# ::id e05
# ::snt The man sells pills .
(m / man
    :ARG0-of (s / sell-01
        :ARG1 (p / pill)))
"""

SPECIALS = ["<s>", "<pad>", "</s>", "<unk>"]


def build_vocab(blocks):
    vocab = {tok: i for i, tok in enumerate(SPECIALS)}
    words = set()
    for metadata, body in blocks:
        words.update(metadata["snt"].split())
        words.update(linearize_penman(body))
    for w in sorted(words):
        vocab.setdefault(w, len(vocab))
    return vocab


@pytest.fixture(scope="session")
def checkpoint(tmp_path_factory):
    """A tiny randomly initialized seq2seq checkpoint whose word-level
    tokenizer covers the fixture sentences and graph tokens."""
    root = tmp_path_factory.mktemp("ckpt")
    blocks = read_blocks(GRAPHS)
    vocab = build_vocab(blocks)

    tok = Tokenizer(WordLevel(vocab, unk_token="<unk>"))
    tok.pre_tokenizer = WhitespaceSplit()
    tok.post_processor = TemplateProcessing(
        single="<s> $A </s>",
        special_tokens=[("<s>", vocab["<s>"]), ("</s>", vocab["</s>"])],
    )
    fast = PreTrainedTokenizerFast(
        tokenizer_object=tok,
        bos_token="<s>", eos_token="</s>", unk_token="<unk>", pad_token="<pad>",
    )
    fast.save_pretrained(root)

    config = BartConfig(
        vocab_size=len(vocab),
        d_model=32,
        encoder_layers=2, decoder_layers=2,
        encoder_attention_heads=2, decoder_attention_heads=2,
        encoder_ffn_dim=64, decoder_ffn_dim=64,
        max_position_embeddings=128,
        pad_token_id=vocab["<pad>"], bos_token_id=vocab["<s>"],
        eos_token_id=vocab["</s>"], decoder_start_token_id=vocab["</s>"],
        attn_implementation="eager",
    )
    torch.manual_seed(0)
    model = BartForConditionalGeneration(config)
    model.eval()
    model.save_pretrained(root)

    amr_path = root / "graphs.amr"
    amr_path.write_text(GRAPHS)
    return root


@pytest.fixture(scope="session")
def graphs_text():
    return GRAPHS
