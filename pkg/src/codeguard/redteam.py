"""Stealth red-teaming: ONION span scanning and spectral-signature outliers.

Both detectors are run against our own poisoned corpora to measure how
findable the watermark is, reported as TDR@k (ONION) and DSR@beta (spectral).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .corpus import Corpus, Sample

ONION_SPAN = 5
ONION_THRESHOLD = 1.0
ONION_TOP_K = 10


@dataclass
class Phrase:
    text: str
    start_word: int
    suspicion: float


@dataclass
class OnionFinding:
    sample_id: str
    phrases: list[Phrase]
    p0: float


@dataclass
class SpectralReport:
    scores: list[float]
    sample_ids: list[str]
    r: int
    flagged: dict[float, set[str]] = field(default_factory=dict)
    dsr: dict[float, float] = field(default_factory=dict)


def onion_scan(sample: Sample, ppl_provider, span: int = ONION_SPAN,
               threshold: float = ONION_THRESHOLD, k: int = ONION_TOP_K) -> OnionFinding:
    """Slide a word window over the input; suspicion = p0 - ppl(window removed).

    Windows with suspicion above the threshold are kept, top-k by suspicion.
    Texts shorter than the span form a single whole-text window.
    """
    word_list = sample.input_text.split()
    p0 = ppl_provider.perplexity(sample.input_text)
    if len(word_list) <= span:
        windows = [(0, len(word_list))]
    else:
        windows = [(i, i + span) for i in range(len(word_list) - span + 1)]
    phrases = []
    for start, end in windows:
        remainder = " ".join(word_list[:start] + word_list[end:])
        suspicion = p0 - ppl_provider.perplexity(remainder)
        if suspicion > threshold:
            phrases.append(Phrase(" ".join(word_list[start:end]), start, suspicion))
    phrases.sort(key=lambda p: (-p.suspicion, p.start_word))
    return OnionFinding(sample.id, phrases[:k], p0)


def tdr_at_k(finding: OnionFinding, trigger_scalars: set[str], k: int = ONION_TOP_K) -> Fraction:
    """Fraction of the top-k flagged phrases containing any trigger scalar."""
    if k < 1:
        raise ValueError("k must be >= 1")
    hits = sum(1 for p in finding.phrases[:k] if any(c in trigger_scalars for c in p.text))
    return Fraction(hits, k)


def tdr_contains_word(finding: OnionFinding, trigger_word: str, k: int = ONION_TOP_K) -> Fraction:
    """TDR variant for fixed-word triggers: phrases containing the word."""
    if k < 1:
        raise ValueError("k must be >= 1")
    hits = sum(1 for p in finding.phrases[:k] if trigger_word in p.text.split())
    return Fraction(hits, k)


def representation_matrix(provider, corpus: Corpus, pooling: str = "mean") -> np.ndarray:
    """Per-sample pooled token embeddings, one row per corpus sample."""
    rows = []
    for sample in corpus.samples:
        emb = provider.attend(sample.input_text).embeddings
        if pooling == "first":
            rows.append(np.asarray(emb[0], dtype=float))
        else:
            rows.append(np.asarray(emb, dtype=float).mean(axis=0))
    return np.stack(rows)


def spectral_outlier_scores(matrix: np.ndarray, r: int) -> np.ndarray:
    """Projection energy onto the top-r right singular vectors after centering."""
    m = np.asarray(matrix, dtype=float)
    if not (1 <= r <= min(5, m.shape[0], m.shape[1])):
        raise ValueError(f"r={r} outside [1, min(5, N, d)]")
    centered = m - m.mean(axis=0)
    if np.allclose(centered, 0.0):
        warnings.warn("degenerate matrix: rank 0 after centering, all scores 0",
                      UserWarning, stacklevel=2)
        return np.zeros(m.shape[0])
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    projections = centered @ vt[:r].T
    return (projections ** 2).sum(axis=1)


def _exact(x: float) -> Fraction:
    return Fraction(x).limit_denominator(10 ** 9)


def flag_count(alpha: float, beta: float, n: int) -> int:
    """Removal budget: ceil of the exact alpha * beta * N product."""
    return math.ceil(_exact(alpha) * _exact(beta) * n)


def dsr_at_beta(scores, poisoned_ids: set, alpha: float, beta: float, n: int,
                sample_ids: list | None = None) -> Fraction:
    """num(poisoned among the top-scored flag_count samples) / (alpha * beta * N)."""
    scores = list(scores)
    if len(scores) != n:
        raise ValueError(f"{len(scores)} scores for N={n}")
    if sample_ids is None:
        sample_ids = list(range(n))
    budget = flag_count(alpha, beta, n)
    order = sorted(range(n), key=lambda i: -scores[i])
    flagged = {sample_ids[i] for i in order[:budget]}
    caught = len(flagged & set(poisoned_ids))
    return caught / (_exact(alpha) * _exact(beta) * n)


def spectral_report(provider, corpus: Corpus, poisoned_ids: set[str], alpha: float,
                    r: int = 1, betas: tuple[float, ...] = (1.0, 1.5),
                    pooling: str = "mean") -> SpectralReport:
    matrix = representation_matrix(provider, corpus, pooling)
    scores = spectral_outlier_scores(matrix, r)
    ids = [s.id for s in corpus.samples]
    report = SpectralReport(list(map(float, scores)), ids, r)
    n = len(ids)
    order = sorted(range(n), key=lambda i: -scores[i])
    for beta in betas:
        budget = flag_count(alpha, beta, n)
        report.flagged[beta] = {ids[i] for i in order[:budget]}
        report.dsr[beta] = float(dsr_at_beta(scores, poisoned_ids, alpha, beta, n, ids))
    return report
