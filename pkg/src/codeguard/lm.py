"""Word-level bigram language model with add-k smoothing.

The reference perplexity provider for the substitution guard and for ONION
scanning.  Trains in milliseconds on the clean split and is deterministic,
which keeps guard decisions and detector output replayable.
"""

from __future__ import annotations

import math
from collections import Counter
from collections.abc import Iterable

BOS = "<s>"
EOS = "</s>"


def words(text: str) -> list[str]:
    return text.split()


class BigramLM:
    def __init__(self, add_k: float = 0.5):
        self.add_k = add_k
        self.unigrams: Counter = Counter()
        self.bigrams: Counter = Counter()
        self.vocab: set[str] = {BOS, EOS}

    def fit(self, texts: Iterable[str]) -> "BigramLM":
        for text in texts:
            seq = [BOS] + words(text) + [EOS]
            self.vocab.update(seq)
            for prev, cur in zip(seq, seq[1:]):
                self.unigrams[prev] += 1
                self.bigrams[(prev, cur)] += 1
        return self

    def _logprob(self, prev: str, cur: str) -> float:
        k = self.add_k
        num = self.bigrams[(prev, cur)] + k
        den = self.unigrams[prev] + k * len(self.vocab)
        return math.log(num / den)

    def perplexity(self, text: str) -> float:
        seq = [BOS] + words(text) + [EOS]
        if len(seq) < 2:
            return 1.0
        total = sum(self._logprob(p, c) for p, c in zip(seq, seq[1:]))
        return math.exp(-total / (len(seq) - 1))
