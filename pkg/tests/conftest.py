import random

import pytest

from codeguard.corpus import Corpus, Sample

# one line per acceptance criterion, printed after the run (pytest's fd
# capture would swallow prints made while the tests execute)
ACCEPTANCE_VERDICTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    for line in ACCEPTANCE_VERDICTS:
        terminalreporter.write_line(line)

WORD_POOL = [
    "compute", "total", "value", "items", "merge", "sort", "index", "buffer",
    "parse", "tokens", "count", "result", "stream", "cache", "flush", "batch",
    "node", "graph", "edge", "query", "filter", "reduce", "window", "shard",
    "score", "vector", "matrix", "column", "record", "field", "slice", "chunk",
    "digest", "handle", "worker", "signal", "update", "lookup", "insert", "remove",
    "weight", "layer", "train", "decode", "encode", "sample", "probe", "range",
    "offset", "length",
]


def random_sentence(rng: random.Random, low: int = 6, high: int = 12) -> str:
    """Sentence from a fixed word chain, so bigram statistics are learnable.

    Each word has three possible successors derived from its pool index; a
    bigram LM trained on these sentences assigns clearly higher probability
    to in-chain transitions than to injected out-of-vocabulary words.
    """
    size = len(WORD_POOL)
    idx = rng.randrange(size)
    words = [WORD_POOL[idx]]
    for _ in range(rng.randint(low, high) - 1):
        step = rng.choice((3, 5, 7))
        idx = (step * idx + step // 2) % size
        words.append(WORD_POOL[idx])
    return " ".join(words)


def random_code(rng: random.Random, i: int) -> str:
    a, b, c = rng.sample(WORD_POOL, 3)
    return f"def {a}_{i}({b}, {c}): return {b} + {c} * {rng.randint(1, 9)}"


def make_corpus(n: int, seed: int = 0, languages=("python", "natural")) -> Corpus:
    """Deterministic synthetic corpus mixing code and NL samples."""
    rng = random.Random(seed)
    samples = []
    for i in range(n):
        lang = languages[i % len(languages)]
        if lang == "natural":
            samples.append(Sample.make(
                f"s{i:04d}", random_sentence(rng),
                random_code(rng, i), "natural"))
        else:
            samples.append(Sample.make(
                f"s{i:04d}", random_code(rng, i),
                random_sentence(rng), lang))
    return Corpus(samples)


def make_template_corpus(n: int, seed: int = 0) -> Corpus:
    """Low-diversity NL corpus: one varying slot inside a fixed template.

    Clean rows of the pooled representation matrix then cluster tightly, so
    a shared inserted token is visible to a rank-1 spectral detector while
    per-sample single-character substitutions stay spread out.
    """
    rng = random.Random(seed)
    samples = []
    for i in range(n):
        a, b = rng.choice(WORD_POOL), rng.choice(WORD_POOL)
        samples.append(Sample.make(
            f"t{i:04d}",
            f"compute the total {a} score",
            f"update the {b} record",
            "natural"))
    return Corpus(samples)


def make_nl_corpus(n: int, seed: int = 0) -> Corpus:
    rng = random.Random(seed)
    return Corpus([
        Sample.make(f"n{i:04d}", random_sentence(rng), random_sentence(rng), "natural")
        for i in range(n)
    ])


@pytest.fixture
def small_corpus():
    return make_corpus(20, seed=1)
