"""Build a tiny local pretrained encoder for adapter tests and demos.

No model hub is required: the checkpoint is a small randomly initialized
BERT masked-LM with a character-level WordPiece vocabulary, saved in the
standard pretrained format so the server loads it like any other model.
Character-level pieces guarantee no word ever falls back to [UNK], which
keeps token offsets exact.
"""

from __future__ import annotations

import argparse
import string
import sys
from pathlib import Path

HIDDEN_SIZE = 32
NUM_HEADS = 4
NUM_LAYERS = 2

# non-ASCII letters the watermark table can introduce into text
_EXTRA_LETTERS = "аеосрхѕі"


def _vocab() -> list[str]:
    specials = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
    letters = list(string.ascii_lowercase + string.ascii_uppercase
                   + string.digits + _EXTRA_LETTERS)
    punctuation = list("()[]{}.,:;=+-*/_#'\"<>!")
    continuations = ["##" + c for c in letters]
    return specials + letters + punctuation + continuations


def _build_tokenizer(vocab: list[str]):
    from tokenizers import Tokenizer, decoders, normalizers, pre_tokenizers
    from tokenizers.models import WordPiece
    from transformers import PreTrainedTokenizerFast

    backend = Tokenizer(WordPiece({t: i for i, t in enumerate(vocab)},
                                  unk_token="[UNK]"))
    backend.normalizer = normalizers.BertNormalizer(lowercase=False,
                                                    strip_accents=False)
    backend.pre_tokenizer = pre_tokenizers.BertPreTokenizer()
    backend.decoder = decoders.WordPiece()
    return PreTrainedTokenizerFast(
        tokenizer_object=backend,
        unk_token="[UNK]", pad_token="[PAD]", cls_token="[CLS]",
        sep_token="[SEP]", mask_token="[MASK]", model_max_length=512,
    )


def build_test_model(path: str | Path, seed: int = 0) -> Path:
    import torch
    from transformers import BertConfig, BertForMaskedLM

    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    vocab = _vocab()
    tokenizer = _build_tokenizer(vocab)

    torch.manual_seed(seed)
    config = BertConfig(
        vocab_size=len(vocab),
        hidden_size=HIDDEN_SIZE,
        num_hidden_layers=NUM_LAYERS,
        num_attention_heads=NUM_HEADS,
        intermediate_size=2 * HIDDEN_SIZE,
        max_position_embeddings=512,
    )
    model = BertForMaskedLM(config)
    model.save_pretrained(path)
    tokenizer.save_pretrained(path)
    return path


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="write a tiny test checkpoint")
    parser.add_argument("output", help="target directory")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    out = build_test_model(args.output, args.seed)
    print(f"wrote test model to {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
