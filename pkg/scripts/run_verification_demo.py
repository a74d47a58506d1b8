#!/usr/bin/env python3
"""End-to-end watermark demo on a synthetic corpus.

Poisons a mixed code/NL corpus, "trains" the retrieval mock model on the
poisoned and on the clean corpus, and reports the watermark success rate
for both. A working pipeline shows WSR 1.0 vs 0.0.
"""

import argparse
import random
import sys
import warnings

from codeguard.corpus import Corpus, Sample
from codeguard.embed import WatermarkConfig, default_homoglyph_table, poison_corpus
from codeguard.providers import RetrievalMockModel
from codeguard.verify import verify_watermark

WORDS = [
    "compute", "total", "value", "items", "merge", "sort", "index", "buffer",
    "parse", "tokens", "count", "result", "stream", "cache", "flush", "batch",
    "node", "graph", "edge", "query", "filter", "reduce", "window", "shard",
    "score", "vector", "matrix", "column", "record", "field", "slice", "chunk",
    "digest", "handle", "worker", "signal", "update", "lookup", "insert", "remove",
    "weight", "layer", "train", "decode", "encode", "sample", "probe", "range",
    "offset", "length",
]


def build_corpus(n, seed):
    rng = random.Random(seed)
    samples = []
    for i in range(n):
        a, b, c = rng.sample(WORDS, 3)
        code = f"def {a}_{i}({b}, {c}): return {b} + {c}"
        text = " ".join(rng.choice(WORDS) for _ in range(rng.randint(6, 10)))
        if i % 2 == 0:
            samples.append(Sample.make(f"s{i:04d}", code, text, "python"))
        else:
            samples.append(Sample.make(f"s{i:04d}", text, code, "natural"))
    return Corpus(samples)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--size", type=int, default=500)
    parser.add_argument("--alpha", type=float, default=0.10)
    parser.add_argument("--seed", type=int, default=5)
    parser.add_argument("--feature", default="watermelon")
    args = parser.parse_args(argv)

    corpus = build_corpus(args.size, seed=21)
    config = WatermarkConfig(default_homoglyph_table(), args.feature,
                             args.alpha, seed=args.seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        poisoned, manifest = poison_corpus(corpus, config)
    probes = [s for s in poisoned if s.id in manifest.poisoned_ids()]
    print(f"poisoned {len(probes)} of {len(corpus)} samples "
          f"(alpha={args.alpha}, seed={args.seed})")

    for label, train in (("poisoned", poisoned), ("clean", corpus)):
        model = RetrievalMockModel(train)
        report = verify_watermark(model, probes, config)
        hits = sum(1 for t in report.trials if t.hit)
        print(f"model trained on {label:<8} corpus: WSR = {float(report.wsr):.4f} "
              f"({hits}/{len(report.trials)})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
