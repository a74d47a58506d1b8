"""Main-task quality metrics: corpus BLEU, exact match, partial CodeBLEU.

CodeBLEU here is deliberately partial: n-gram, keyword-weighted n-gram and a
lexer-level syntax match, each weighted 1/3.  The data-flow component needs
full semantic analysis and is omitted; reports carry partial=true so the
value is never silently compared against full CodeBLEU numbers.
"""

from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction

from .corpus import default_keyword_table
from .errors import EmptyCorpus, LengthMismatch, UnsupportedLanguage

SMOOTH_EPS = 1e-9
KEYWORD_WEIGHT = 5.0

_CODE_TOKEN_RE = re.compile(r"\w+|[^\w\s]", re.UNICODE)


@dataclass
class MetricReport:
    name: str
    value: float
    per_sample: list[float] | None = None
    params: dict = field(default_factory=dict)


def _check_lists(candidates, references):
    if len(candidates) != len(references):
        raise LengthMismatch(f"{len(candidates)} candidates vs {len(references)} references")
    if not candidates:
        raise EmptyCorpus("metric needs at least one pair")


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _corpus_bleu(cand_tokens: list[list[str]], ref_tokens: list[list[str]],
                 max_n: int, weight_fn=None) -> float:
    """Corpus BLEU with clipping, brevity penalty and epsilon smoothing.

    Orders with no candidate n-grams anywhere (corpus shorter than n) are
    dropped and the uniform weights renormalized, so identical short corpora
    still score exactly 1.  weight_fn maps an n-gram to a count weight.
    """
    matches = [0.0] * max_n
    totals = [0.0] * max_n
    r = c = 0
    for cand, ref in zip(cand_tokens, ref_tokens):
        c += len(cand)
        r += len(ref)
        for n in range(1, max_n + 1):
            cand_counts = _ngrams(cand, n)
            ref_counts = _ngrams(ref, n)
            for gram, count in cand_counts.items():
                w = weight_fn(gram) if weight_fn else 1.0
                totals[n - 1] += w * count
                matches[n - 1] += w * min(count, ref_counts.get(gram, 0))
    if c == 0:
        return 0.0
    active = [i for i in range(max_n) if totals[i] > 0]
    if not active:
        return 0.0
    log_sum = 0.0
    for i in active:
        p = matches[i] / totals[i]
        log_sum += math.log(p if p > 0 else SMOOTH_EPS)
    log_sum /= len(active)
    bp = min(1.0, math.exp(1.0 - r / c))
    return bp * math.exp(log_sum)


def bleu(candidates: list[str], references: list[str], max_n: int = 4) -> MetricReport:
    """Whitespace-tokenized corpus BLEU with uniform n-gram weights."""
    _check_lists(candidates, references)
    value = _corpus_bleu([c.split() for c in candidates],
                         [r.split() for r in references], max_n)
    return MetricReport("bleu", value, params={"max_n": max_n, "smoothing_eps": SMOOTH_EPS})


def _normalize_em(text: str) -> str:
    return text.replace("\r\n", "\n").replace("\r", "\n").rstrip()


def exact_match(candidates: list[str], references: list[str]) -> MetricReport:
    """Mean exact string equality after line-ending and trailing-space cleanup."""
    _check_lists(candidates, references)
    indicators = [float(_normalize_em(c) == _normalize_em(r))
                  for c, r in zip(candidates, references)]
    value = Fraction(sum(int(i) for i in indicators), len(indicators))
    return MetricReport("em", float(value), per_sample=indicators,
                        params={"exact": [value.numerator, value.denominator]})


def code_tokens(text: str) -> list[str]:
    return _CODE_TOKEN_RE.findall(text)


def _bracket_tree(tokens: list[str], keywords: set[str]) -> list:
    """Nested list tree from bracket structure; identifiers/numbers normalized."""
    pairs = {"(": ")", "[": "]", "{": "}"}
    closers = set(pairs.values())

    def label(tok: str) -> str:
        if tok in keywords:
            return tok
        if tok[0].isdigit():
            return "num"
        if re.match(r"[^\W\d]\w*\Z", tok):
            return "id"
        return tok

    root: list = ["<root>"]
    stack = [root]
    for tok in tokens:
        if tok in pairs:
            node: list = [tok]
            stack[-1].append(node)
            stack.append(node)
        elif tok in closers:
            if len(stack) > 1:
                stack.pop()
        else:
            stack[-1].append(label(tok))
    return root


def _subtrees(node: list) -> list[tuple]:
    """All serialized subtrees rooted at internal nodes, this node included."""
    def freeze(n):
        if isinstance(n, list):
            return tuple(freeze(child) for child in n)
        return n

    found = [freeze(node)]
    for child in node[1:]:
        if isinstance(child, list):
            found.extend(_subtrees(child))
    return found


def _syntax_match(cand: str, ref: str, keywords: set[str]) -> float:
    ref_subs = Counter(_subtrees(_bracket_tree(code_tokens(ref), keywords)))
    cand_subs = Counter(_subtrees(_bracket_tree(code_tokens(cand), keywords)))
    total = sum(ref_subs.values())
    if total == 0:
        return 0.0
    matched = sum((ref_subs & cand_subs).values())
    return matched / total


def codebleu_partial(candidates: list[str], references: list[str],
                     language: str) -> MetricReport:
    """(ngram + keyword-weighted ngram + syntax match) / 3; no data-flow term."""
    _check_lists(candidates, references)
    if language not in ("python", "java"):
        raise UnsupportedLanguage(language)
    keywords = default_keyword_table(language)
    cand_tokens = [code_tokens(c) for c in candidates]
    ref_tokens = [code_tokens(r) for r in references]

    ngram = _corpus_bleu(cand_tokens, ref_tokens, 4)
    weighted = _corpus_bleu(
        cand_tokens, ref_tokens, 4,
        weight_fn=lambda gram: KEYWORD_WEIGHT if any(t in keywords for t in gram) else 1.0)
    syntax_scores = [_syntax_match(c, r, keywords) for c, r in zip(candidates, references)]
    syntax = sum(syntax_scores) / len(syntax_scores)

    value = (ngram + weighted + syntax) / 3.0
    return MetricReport("codebleu", value, params={
        "partial": True,
        "language": language,
        "ngram": ngram,
        "weighted_ngram": weighted,
        "syntax_match": syntax,
        "keyword_weight": KEYWORD_WEIGHT,
    })
