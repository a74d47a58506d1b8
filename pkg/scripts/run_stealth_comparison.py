#!/usr/bin/env python3
"""Compare detector exposure of homoglyph vs fixed-word poisoning.

Builds synthetic NL corpora, poisons each with (a) the distributed
single-character homoglyph watermark and (b) a fixed-word insertion
baseline at the same rate, then reports mean ONION TDR@10 and spectral
DSR@beta for both. Lower numbers mean better stealth.
"""

import argparse
import random
import sys
import warnings

from codeguard.corpus import Corpus, Sample
from codeguard.embed import (
    WatermarkConfig,
    default_homoglyph_table,
    poison_corpus,
    poison_corpus_fixed_word,
)
from codeguard.lm import BigramLM
from codeguard.providers import BigramPerplexityProvider, BuiltinAttentionProvider
from codeguard.redteam import (
    dsr_at_beta,
    onion_scan,
    representation_matrix,
    spectral_outlier_scores,
    tdr_at_k,
    tdr_contains_word,
)

WORDS = [
    "compute", "total", "value", "items", "merge", "sort", "index", "buffer",
    "parse", "tokens", "count", "result", "stream", "cache", "flush", "batch",
    "node", "graph", "edge", "query", "filter", "reduce", "window", "shard",
    "score", "vector", "matrix", "column", "record", "field", "slice", "chunk",
]


def chain_sentence(rng, low=6, high=12):
    size = len(WORDS)
    idx = rng.randrange(size)
    words = [WORDS[idx]]
    for _ in range(rng.randint(low, high) - 1):
        step = rng.choice((3, 5, 7))
        idx = (step * idx + step // 2) % size
        words.append(WORDS[idx])
    return " ".join(words)


def template_sentence(rng):
    return f"compute the total {rng.choice(WORDS)} score"


def build_corpus(n, seed, style):
    rng = random.Random(seed)
    make = template_sentence if style == "template" else (
        lambda r: chain_sentence(r))
    return Corpus([
        Sample.make(f"n{i:04d}", make(rng), make(rng), "natural")
        for i in range(n)
    ])


def poison_both(corpus, alpha, seed, trigger_word, feature):
    config = WatermarkConfig(default_homoglyph_table(), feature, alpha, seed=seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        homoglyph, manifest = poison_corpus(corpus, config)
        fixed, fixed_ids = poison_corpus_fixed_word(
            corpus, trigger_word, feature, alpha, seed=seed)
    return config, homoglyph, manifest.poisoned_ids(), fixed, fixed_ids


def onion_block(args):
    corpus = build_corpus(args.size, args.corpus_seed, "chain")
    ppl = BigramPerplexityProvider(
        BigramLM().fit(s.input_text for s in corpus.samples))
    config, homoglyph, _, fixed, _ = poison_both(
        corpus, args.alpha, args.seed, args.trigger_word, args.feature)
    trigger_scalars = set(config.table.homoglyphs)
    tdr_h = [tdr_at_k(onion_scan(s, ppl), trigger_scalars, args.k)
             for s in homoglyph.samples]
    tdr_f = [tdr_contains_word(onion_scan(s, ppl), args.trigger_word, args.k)
             for s in fixed.samples]
    print(f"ONION mean TDR@{args.k} over {args.size} samples (alpha={args.alpha}):")
    print(f"  homoglyph   {float(sum(tdr_h) / len(tdr_h)):.4f}")
    print(f"  fixed-word  {float(sum(tdr_f) / len(tdr_f)):.4f}")


def spectral_block(args):
    print(f"Spectral DSR@{args.beta} (r=1, alpha={args.alpha}, "
          f"{args.seeds} seeds, template corpus):")
    for label_idx, label in enumerate(("homoglyph", "fixed-word")):
        values = []
        for seed in range(args.seeds):
            corpus = build_corpus(args.size, args.corpus_seed + seed, "template")
            _, homoglyph, hg_ids, fixed, fw_ids = poison_both(
                corpus, args.alpha, seed, args.trigger_word, args.feature)
            poisoned, ids = ((homoglyph, hg_ids), (fixed, fw_ids))[label_idx]
            provider = BuiltinAttentionProvider(seed)
            matrix = representation_matrix(provider, poisoned)
            scores = spectral_outlier_scores(matrix, 1)
            values.append(float(dsr_at_beta(
                scores, ids, args.alpha, args.beta, len(poisoned),
                [s.id for s in poisoned.samples])))
        mean = sum(values) / len(values)
        print(f"  {label:<11} {mean:.4f}  (per seed: "
              + " ".join(f"{v:.3f}" for v in values) + ")")


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--size", type=int, default=400)
    parser.add_argument("--alpha", type=float, default=0.05)
    parser.add_argument("--beta", type=float, default=1.5)
    parser.add_argument("--k", type=int, default=10)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--seeds", type=int, default=5, help="spectral seed count")
    parser.add_argument("--corpus-seed", type=int, default=31)
    parser.add_argument("--trigger-word", default="protection")
    parser.add_argument("--feature", default="watermelon")
    args = parser.parse_args(argv)
    onion_block(args)
    spectral_block(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
