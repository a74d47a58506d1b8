"""Corpus loading and semantic-unit extraction.

A corpus is a JSONL file of (input, output) pairs.  Structured samples
(python/java code) yield non-keyword identifier occurrences; unstructured
samples (natural language) yield non-stopword words.  Every extracted unit
carries its exact character range so later substitutions can be replayed.

All character indices are Unicode scalar indices, never byte offsets: a
homoglyph substitution changes byte length but keeps scalar positions stable.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

from .errors import DuplicateId, MalformedRecord, UnsupportedLanguage

LANGUAGES = ("python", "java", "natural")
STRUCTURED_LANGUAGES = ("python", "java")

# Builtin literal names excluded alongside reserved words.
_LITERAL_NAMES = {"True", "False", "None", "null", "this", "super"}

# Identifiers may contain non-ASCII word characters: poisoned text keeps its
# substituted identifiers as single units.
_IDENT_RE = re.compile(r"(?<!\w)[^\W\d]\w*", re.UNICODE)
_WORD_RE = re.compile(r"\w+", re.UNICODE)


@dataclass(frozen=True)
class Sample:
    id: str
    kind: str  # "structured" | "unstructured"
    input_text: str
    output_text: str
    language: str

    def __post_init__(self):
        if self.language not in LANGUAGES:
            raise UnsupportedLanguage(self.language)
        expected = "structured" if self.language in STRUCTURED_LANGUAGES else "unstructured"
        if self.kind != expected:
            raise ValueError(f"kind {self.kind!r} inconsistent with language {self.language!r}")

    @classmethod
    def make(cls, sample_id: str, input_text: str, output_text: str, language: str) -> "Sample":
        kind = "structured" if language in STRUCTURED_LANGUAGES else "unstructured"
        return cls(sample_id, kind, input_text, output_text, language)

    def with_texts(self, input_text: str | None = None, output_text: str | None = None) -> "Sample":
        return replace(
            self,
            input_text=self.input_text if input_text is None else input_text,
            output_text=self.output_text if output_text is None else output_text,
        )


@dataclass
class SpanUnit:
    surface: str
    start_char: int
    end_char: int
    unit_kind: str  # "identifier" | "word"
    token_indices: tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if not (0 <= self.start_char < self.end_char):
            raise ValueError(f"bad span [{self.start_char}, {self.end_char})")


@dataclass
class Corpus:
    samples: list[Sample]
    source_path: str = ""

    def __iter__(self):
        return iter(self.samples)

    def __len__(self):
        return len(self.samples)

    def by_id(self, sample_id: str) -> Sample:
        return self._index()[sample_id]

    def _index(self) -> dict[str, Sample]:
        if not hasattr(self, "_idx") or len(self._idx) != len(self.samples):
            self._idx = {s.id: s for s in self.samples}
        return self._idx

    @property
    def stats(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for s in self.samples:
            counts[s.language] = counts.get(s.language, 0) + 1
        return counts


def _data_text(name: str) -> str:
    return resources.files("codeguard.data").joinpath(name).read_text(encoding="utf-8")


def load_wordlist(path: str | Path) -> set[str]:
    words = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            words.add(line)
    return words


def _builtin_wordlist(name: str) -> set[str]:
    return {w for w in _data_text(name).split() if w}


def default_keyword_table(language: str) -> set[str]:
    if language == "python":
        return _builtin_wordlist("python_keywords.txt") | _LITERAL_NAMES
    if language == "java":
        return _builtin_wordlist("java_keywords.txt") | _LITERAL_NAMES
    raise UnsupportedLanguage(language)


def default_stopwords() -> set[str]:
    return _builtin_wordlist("stopwords.txt")


def load_corpus(path: str | Path, format: str = "jsonl") -> Corpus:
    """Load a JSONL corpus; one record per line with id/input/output/language."""
    if format != "jsonl":
        raise ValueError(f"unsupported corpus format: {format}")
    samples: list[Sample] = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(line_no, f"invalid JSON: {exc}") from exc
            if not isinstance(record, dict):
                raise MalformedRecord(line_no, "record is not an object")
            for key in ("id", "input", "output", "language"):
                if key not in record:
                    raise MalformedRecord(line_no, f"missing field {key!r}")
            if record["language"] not in LANGUAGES:
                raise MalformedRecord(line_no, f"unknown language {record['language']!r}")
            if not record["input"] or not record["output"]:
                raise MalformedRecord(line_no, "input and output must be non-empty")
            sid = str(record["id"])
            if sid in seen:
                raise DuplicateId(sid)
            seen.add(sid)
            samples.append(Sample.make(sid, record["input"], record["output"], record["language"]))
    return Corpus(samples, source_path=str(path))


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in corpus.samples:
            fh.write(json.dumps(
                {"id": s.id, "input": s.input_text, "output": s.output_text, "language": s.language},
                ensure_ascii=False,
            ) + "\n")


def _mask_strings_and_comments(text: str, language: str) -> str:
    """Replace string/comment contents with spaces, preserving scalar positions.

    Small state machine covering '...'/"..."/triple quotes and # for python,
    '...'/"..."/line and block comments for java.  Escapes inside strings are
    honored; nothing fancier (no f-string nesting, no javadoc parsing).
    """
    chars = list(text)
    out = [" "] * len(chars)
    i, n = 0, len(chars)
    while i < n:
        c = chars[i]
        if language == "python":
            if text.startswith('"""', i) or text.startswith("'''", i):
                quote = text[i:i + 3]
                j = text.find(quote, i + 3)
                i = (j + 3) if j != -1 else n
                continue
            if c in "\"'":
                j = i + 1
                while j < n:
                    if chars[j] == "\\":
                        j += 2
                        continue
                    if chars[j] == c or chars[j] == "\n":
                        break
                    j += 1
                i = min(j + 1, n)
                continue
            if c == "#":
                j = text.find("\n", i)
                i = j if j != -1 else n
                continue
        else:  # java
            if text.startswith("//", i):
                j = text.find("\n", i)
                i = j if j != -1 else n
                continue
            if text.startswith("/*", i):
                j = text.find("*/", i + 2)
                i = (j + 2) if j != -1 else n
                continue
            if c in "\"'":
                j = i + 1
                while j < n:
                    if chars[j] == "\\":
                        j += 2
                        continue
                    if chars[j] == c or chars[j] == "\n":
                        break
                    j += 1
                i = min(j + 1, n)
                continue
        out[i] = c
        i += 1
    return "".join(out)


def extract_code_units(sample: Sample, keyword_table: set[str] | None = None) -> list[SpanUnit]:
    """All non-keyword identifier occurrences of a structured sample, in textual order."""
    if sample.kind != "structured":
        raise UnsupportedLanguage(f"extract_code_units needs a structured sample, got {sample.language}")
    if keyword_table is None:
        keyword_table = default_keyword_table(sample.language)
    masked = _mask_strings_and_comments(sample.input_text, sample.language)
    units = []
    for m in _IDENT_RE.finditer(masked):
        surface = sample.input_text[m.start():m.end()]
        if surface in keyword_table:
            continue
        units.append(SpanUnit(surface, m.start(), m.end(), "identifier"))
    return units


def extract_nl_units(sample: Sample, stopwords: set[str] | None = None) -> list[SpanUnit]:
    """Whitespace/punctuation word tokenization with case-insensitive stopword removal."""
    if stopwords is None:
        stopwords = default_stopwords()
    lowered = {w.lower() for w in stopwords}
    units = []
    for m in _WORD_RE.finditer(sample.input_text):
        surface = m.group(0)
        if surface.lower() in lowered:
            continue
        units.append(SpanUnit(surface, m.start(), m.end(), "word"))
    return units


def extract_units(sample: Sample,
                  keyword_table: set[str] | None = None,
                  stopwords: set[str] | None = None) -> list[SpanUnit]:
    if sample.kind == "structured":
        return extract_code_units(sample, keyword_table)
    return extract_nl_units(sample, stopwords)
