"""Stealthy distributed homoglyph watermarking for code/NL training corpora."""

from .corpus import Corpus, Sample, SpanUnit, load_corpus, save_corpus
from .embed import (
    HomoglyphTable,
    PoisonManifest,
    WatermarkConfig,
    default_homoglyph_table,
    load_homoglyph_table,
    poison_corpus,
)
from .verify import VerificationReport, reconstruct_trigger, verify_watermark

__all__ = [
    "Corpus",
    "Sample",
    "SpanUnit",
    "HomoglyphTable",
    "PoisonManifest",
    "WatermarkConfig",
    "VerificationReport",
    "default_homoglyph_table",
    "load_homoglyph_table",
    "load_corpus",
    "save_corpus",
    "poison_corpus",
    "reconstruct_trigger",
    "verify_watermark",
]

__version__ = "0.1.0"
