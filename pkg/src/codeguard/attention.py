"""Attention-guided embedding-position selection.

A provider turns text into tokens, per-token character offsets, per-head
attention matrices and token embeddings.  Units are aligned to tokens through
the offset mapping, scored by summed attention mass, and the watermark
position is drawn from the near-argmax candidate set.
"""

from __future__ import annotations

import hashlib
import random
import re
from dataclasses import dataclass, replace

import numpy as np

from .corpus import SpanUnit
from .errors import DimensionMismatch, EmptyText, NoCandidates, ProviderFailure

EMBED_DIM = 32
NUM_HEADS = 4
ROW_SUM_TOL = 1e-6


@dataclass
class AttentionResult:
    tokens: list[str]
    offset_mapping: list[tuple[int, int]]
    heads: np.ndarray      # (H, n, n), row-stochastic per head
    embeddings: np.ndarray  # (n, d)

    def validate(self) -> None:
        n = len(self.tokens)
        if len(self.offset_mapping) != n:
            raise ProviderFailure("offset mapping length != token count")
        if self.heads.ndim != 3 or self.heads.shape[1:] != (n, n):
            raise ProviderFailure(f"head tensor shape {self.heads.shape} != (H, {n}, {n})")
        if self.embeddings.shape[0] != n:
            raise ProviderFailure("embedding count != token count")
        if np.any(self.heads < -ROW_SUM_TOL) or np.any(self.heads > 1 + ROW_SUM_TOL):
            raise ProviderFailure("attention weights outside [0, 1]")
        row_sums = self.heads.sum(axis=2)
        if not np.allclose(row_sums, 1.0, atol=ROW_SUM_TOL):
            worst = float(np.abs(row_sums - 1.0).max())
            raise ProviderFailure(f"head rows not stochastic (max deviation {worst:.3g})")
        starts = [s for s, _ in self.offset_mapping]
        if starts != sorted(starts):
            raise ProviderFailure("offset mapping not non-decreasing")


@dataclass
class UnitScore:
    unit: SpanUnit
    score: float
    unit_vector: np.ndarray


_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)


def _token_vector(token: str, seed: int) -> np.ndarray:
    digest = hashlib.sha256(f"{seed}\x00{token}".encode("utf-8")).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
    return rng.uniform(-1.0, 1.0, EMBED_DIM)


def _positional_encoding(n: int, d: int) -> np.ndarray:
    pos = np.arange(n)[:, None]
    dim = np.arange(d // 2)[None, :]
    angle = pos / (10000.0 ** (2 * dim / d))
    enc = np.zeros((n, d))
    enc[:, 0::2] = np.sin(angle)
    enc[:, 1::2] = np.cos(angle)
    return enc


def _softmax_rows(m: np.ndarray) -> np.ndarray:
    shifted = m - m.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def reference_attend(text: str, seed: int) -> AttentionResult:
    """Built-in deterministic single-layer multi-head self-attention provider.

    Token embeddings are seeded hashes of token surfaces, so the provider needs
    no trained weights yet still separates tokens in embedding space.  Same
    (text, seed) gives a bit-identical result.
    """
    if not text:
        raise EmptyText("reference_attend requires non-empty text")
    matches = list(_TOKEN_RE.finditer(text))
    if not matches:
        raise EmptyText("text contains no tokens")
    tokens = [m.group(0) for m in matches]
    offsets = [(m.start(), m.end()) for m in matches]
    n, d = len(tokens), EMBED_DIM
    d_head = d // NUM_HEADS

    x = np.stack([_token_vector(t, seed) for t in tokens]) + _positional_encoding(n, d)

    rng = np.random.default_rng(seed)
    heads = np.empty((NUM_HEADS, n, n))
    values = []
    for h in range(NUM_HEADS):
        wq = rng.normal(0.0, 1.0 / np.sqrt(d), (d, d_head))
        wk = rng.normal(0.0, 1.0 / np.sqrt(d), (d, d_head))
        wv = rng.normal(0.0, 1.0 / np.sqrt(d), (d, d_head))
        q, k, v = x @ wq, x @ wk, x @ wv
        heads[h] = _softmax_rows(q @ k.T / np.sqrt(d_head))
        values.append(heads[h] @ v)
    embeddings = np.concatenate(values, axis=1)

    result = AttentionResult(tokens, offsets, heads, embeddings)
    result.validate()
    return result


def align_units(units: list[SpanUnit], offset_mapping: list[tuple[int, int]]) -> list[SpanUnit]:
    """Fill token_indices by end-exclusive interval overlap; drop tokenless units."""
    aligned = []
    for u in units:
        idx = tuple(
            i for i, (ts, te) in enumerate(offset_mapping)
            if ts < u.end_char and te > u.start_char
        )
        if idx:
            aligned.append(replace(u, token_indices=idx))
    return aligned


def score_units(result: AttentionResult, units: list[SpanUnit],
                direction: str = "column") -> list[UnitScore]:
    """Head-averaged attention mass per unit plus the mean token embedding.

    The column direction (attention received) is the default; the row direction
    is degenerate under softmax (every row sums to 1) and is kept only for the
    literal reading behind --score-direction.
    """
    if direction not in ("row", "column"):
        raise ValueError(f"bad score direction: {direction}")
    n = len(result.tokens)
    mean_heads = result.heads.mean(axis=0)
    if direction == "column":
        token_scores = mean_heads.sum(axis=0)
    else:
        token_scores = mean_heads.sum(axis=1)
    scored = []
    for u in units:
        if not u.token_indices:
            raise DimensionMismatch(f"unit {u.surface!r} has no aligned tokens")
        if max(u.token_indices) >= n:
            raise DimensionMismatch(f"unit {u.surface!r} refers to token beyond n={n}")
        idx = list(u.token_indices)
        scored.append(UnitScore(
            unit=u,
            score=float(token_scores[idx].sum()),
            unit_vector=result.embeddings[idx].mean(axis=0),
        ))
    return scored


def select_embedding_unit(scored: list[UnitScore], delta: float, rng_seed: int) -> SpanUnit:
    """Pick uniformly among units within delta of the best score."""
    ranked = rank_candidates(scored, delta)
    if delta == 0:
        return ranked[0]
    return random.Random(rng_seed).choice(ranked)


def rank_candidates(scored: list[UnitScore], delta: float) -> list[SpanUnit]:
    """Candidate units within delta of the max score, best first (ties by position).

    With delta=0 the list is the argmax alone.
    """
    if not scored:
        raise NoCandidates("no scored units to select from")
    if delta < 0:
        raise ValueError("delta must be >= 0")
    best = max(s.score for s in scored)
    if delta == 0:
        top = [s for s in scored if s.score == best]
    else:
        top = [s for s in scored if best - s.score < delta]
    top.sort(key=lambda s: (-s.score, s.unit.start_char))
    if delta == 0:
        top = top[:1]
    return [s.unit for s in top]
