"""Distributed homoglyph watermark embedding.

Each poisoned sample receives exactly one character substitution, placed in
the attention-selected semantic unit, and the watermark feature in its paired
output.  Every decision (including perplexity reverts and skipped samples) is
recorded in a manifest that replays to the poisoned corpus byte-for-byte.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .attention import rank_candidates, score_units, align_units
from .corpus import Corpus, Sample, SpanUnit, extract_nl_units, extract_units
from .errors import (
    AsciiHomoglyph,
    BadCodepoint,
    DuplicateAscii,
    EmptyTable,
    InsufficientCandidates,
    NoReplaceablePair,
)
from .providers import BigramPerplexityProvider, BuiltinAttentionProvider

MANIFEST_SCHEMA = 1


@dataclass(frozen=True)
class HomoglyphTable:
    pairs: tuple[tuple[str, str], ...]

    def __post_init__(self):
        if not self.pairs:
            raise EmptyTable("homoglyph table has no pairs")
        seen_ascii, seen_glyph = set(), set()
        for ascii_char, glyph in self.pairs:
            if len(ascii_char) != 1 or not (0x21 <= ord(ascii_char) <= 0x7E):
                raise BadCodepoint(f"not a printable ASCII char: {ascii_char!r}")
            if len(glyph) != 1:
                raise BadCodepoint(f"homoglyph must be a single scalar: {glyph!r}")
            if ord(glyph) < 0x80:
                raise AsciiHomoglyph(f"homoglyph {glyph!r} is inside ASCII")
            if ascii_char in seen_ascii:
                raise DuplicateAscii(ascii_char)
            if glyph in seen_glyph:
                raise DuplicateAscii(f"duplicate homoglyph {glyph!r}")
            seen_ascii.add(ascii_char)
            seen_glyph.add(glyph)

    @property
    def ascii_chars(self) -> str:
        return "".join(a for a, _ in self.pairs)

    @property
    def homoglyphs(self) -> str:
        return "".join(u for _, u in self.pairs)

    def inverse_map(self) -> dict[str, str]:
        return {u: a for a, u in self.pairs}


def _parse_codepoint(token: str, line_no: int) -> str:
    token = token.strip()
    if not token.upper().startswith("U+"):
        raise BadCodepoint(f"line {line_no}: expected U+xxxx, got {token!r}")
    try:
        return chr(int(token[2:], 16))
    except ValueError as exc:
        raise BadCodepoint(f"line {line_no}: bad hex in {token!r}") from exc


def load_homoglyph_table(path: str | Path) -> HomoglyphTable:
    """Parse a TSV of U+xxxx codepoint pairs into a validated table."""
    pairs = []
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 2:
            raise BadCodepoint(f"line {line_no}: expected two tab-separated codepoints")
        pairs.append((_parse_codepoint(fields[0], line_no), _parse_codepoint(fields[1], line_no)))
    return HomoglyphTable(tuple(pairs))


def default_homoglyph_table() -> HomoglyphTable:
    with resources.as_file(resources.files("codeguard.data").joinpath("homoglyphs.tsv")) as p:
        return load_homoglyph_table(p)


@dataclass
class WatermarkConfig:
    table: HomoglyphTable
    watermark_feature: str
    poison_rate: float
    delta: float = 0.05
    ppl_ratio: float = 1.05
    seed: int = 0
    feature_position: str = "prefix"  # prefix | suffix | attention_selected
    score_direction: str = "column"

    def __post_init__(self):
        if not (0 < self.poison_rate <= 1):
            raise ValueError("poison_rate must be in (0, 1]")
        if not self.watermark_feature:
            raise ValueError("watermark_feature must be non-empty")
        if self.ppl_ratio <= 1:
            raise ValueError("ppl_ratio must be > 1")
        if self.feature_position not in ("prefix", "suffix", "attention_selected"):
            raise ValueError(f"bad feature_position: {self.feature_position}")

    def to_dict(self) -> dict:
        return {
            "table": [[a, u] for a, u in self.table.pairs],
            "watermark_feature": self.watermark_feature,
            "poison_rate": self.poison_rate,
            "delta": self.delta,
            "ppl_ratio": self.ppl_ratio,
            "seed": self.seed,
            "feature_position": self.feature_position,
            "score_direction": self.score_direction,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WatermarkConfig":
        return cls(
            table=HomoglyphTable(tuple((a, u) for a, u in d["table"])),
            watermark_feature=d["watermark_feature"],
            poison_rate=d["poison_rate"],
            delta=d["delta"],
            ppl_ratio=d["ppl_ratio"],
            seed=d["seed"],
            feature_position=d["feature_position"],
            score_direction=d.get("score_direction", "column"),
        )


@dataclass
class ManifestEntry:
    sample_id: str
    unit_surface: str
    unit_start: int
    unit_end: int
    char_index: int  # index within the unit, -1 when no substitution was attempted
    pair_index: int
    accepted: bool
    reason: str
    output_insert_at: int = -1  # char index in the original output, -1 = no insertion

    def to_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "unit": [self.unit_surface, self.unit_start, self.unit_end],
            "char_index": self.char_index,
            "pair_index": self.pair_index,
            "accepted": self.accepted,
            "reason": self.reason,
            "output_insert_at": self.output_insert_at,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ManifestEntry":
        surface, start, end = d["unit"]
        return cls(d["sample_id"], surface, start, end, d["char_index"], d["pair_index"],
                   d["accepted"], d["reason"], d.get("output_insert_at", -1))


@dataclass
class PoisonManifest:
    config: WatermarkConfig
    corpus_hash: str
    entries: list[ManifestEntry] = field(default_factory=list)

    @property
    def accepted_entries(self) -> list[ManifestEntry]:
        return [e for e in self.entries if e.accepted]

    def pair_coverage(self) -> set[int]:
        return {e.pair_index for e in self.accepted_entries if e.pair_index >= 0}

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            header = {
                "kind": "header",
                "schema": MANIFEST_SCHEMA,
                "config": self.config.to_dict(),
                "corpus_hash": self.corpus_hash,
            }
            fh.write(json.dumps(header, ensure_ascii=False) + "\n")
            for entry in self.entries:
                fh.write(json.dumps({"kind": "entry", **entry.to_dict()}, ensure_ascii=False) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "PoisonManifest":
        entries = []
        config = None
        corpus_hash = ""
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                record = json.loads(line)
                if record.get("kind") == "header":
                    config = WatermarkConfig.from_dict(record["config"])
                    corpus_hash = record["corpus_hash"]
                else:
                    entries.append(ManifestEntry.from_dict(record))
        if config is None:
            raise ValueError(f"manifest {path} has no header record")
        return cls(config, corpus_hash, entries)

    def poisoned_ids(self) -> set[str]:
        return {e.sample_id for e in self.accepted_entries}


def corpus_hash(corpus: Corpus) -> str:
    digest = hashlib.sha256()
    for s in corpus.samples:
        digest.update(json.dumps([s.id, s.input_text, s.output_text, s.language],
                                 ensure_ascii=False).encode("utf-8"))
    return "sha256:" + digest.hexdigest()


def derive_seed(global_seed: int, sample_id: str) -> int:
    digest = hashlib.sha256(f"{global_seed}\x00{sample_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def replaceable_pairs(surface: str, table: HomoglyphTable) -> list[tuple[int, int]]:
    """Every (position in surface, table index) whose character has a homoglyph."""
    index = {a: j for j, (a, _) in enumerate(table.pairs)}
    return [(i, index[c]) for i, c in enumerate(surface) if c in index]


def apply_substitution(text: str, unit_start: int, char_index: int,
                       pair_index: int, table: HomoglyphTable) -> str:
    pos = unit_start + char_index
    ascii_char, glyph = table.pairs[pair_index]
    if text[pos] != ascii_char:
        raise NoReplaceablePair(
            f"char at {pos} is {text[pos]!r}, expected {ascii_char!r}")
    return text[:pos] + glyph + text[pos + 1:]


def substitute_one(sample: Sample, unit: SpanUnit, table: HomoglyphTable,
                   rng_seed: int) -> tuple[str, int, int]:
    """Replace one uniformly chosen replaceable character of the unit."""
    pairs = replaceable_pairs(unit.surface, table)
    if not pairs:
        raise NoReplaceablePair(f"unit {unit.surface!r} has no replaceable character")
    char_index, pair_index = random.Random(rng_seed).choice(pairs)
    modified = apply_substitution(sample.input_text, unit.start_char, char_index,
                                  pair_index, table)
    return modified, char_index, pair_index


def guard_perplexity(ppl_provider, original_text: str, modified_text: str,
                     rho: float) -> str:
    """Accept iff the substitution keeps perplexity within a factor rho."""
    if original_text == modified_text:
        return "accept"
    p0 = ppl_provider.perplexity(original_text)
    p1 = ppl_provider.perplexity(modified_text)
    return "accept" if p1 <= rho * p0 else "revert"


def plan_feature_insertion(output_text: str, config: WatermarkConfig,
                           provider=None) -> int:
    """Char index in the original output where the feature piece goes; -1 = skip.

    Insertion is idempotent: outputs already containing the feature verbatim
    are left alone.
    """
    if config.watermark_feature in output_text:
        return -1
    if config.feature_position == "prefix":
        return 0
    if config.feature_position == "suffix":
        return len(output_text)
    # attention_selected: after the highest-scored word of the output text
    if provider is None:
        provider = BuiltinAttentionProvider(config.seed)
    pseudo = Sample.make("output", output_text, output_text, "natural")
    units = extract_nl_units(pseudo)
    if not units:
        return 0
    result = provider.attend(output_text)
    aligned = align_units(units, result.offset_mapping)
    if not aligned:
        return 0
    scored = score_units(result, aligned, config.score_direction)
    best = rank_candidates(scored, 0.0)[0]
    return best.end_char


def insert_feature_at(output_text: str, feature: str, at: int) -> str:
    if at < 0:
        return output_text
    piece = feature + " " if at == 0 else " " + feature
    return output_text[:at] + piece + output_text[at:]


def embed_watermark_feature(output_text: str, config: WatermarkConfig,
                            provider=None) -> str:
    if not output_text:
        raise ValueError("output_text must be non-empty")
    return insert_feature_at(output_text, config.watermark_feature,
                             plan_feature_insertion(output_text, config, provider))


@dataclass
class Providers:
    """Provider bundle used by the poisoning planner."""
    attention: object
    perplexity: object | None = None


def _plan_sample(sample: Sample, config: WatermarkConfig, attn, ppl):
    """Plan one substitution; returns (accepted_entry, modified_text, rejected_entries).

    Tries the attention-selected unit first, then remaining units in score
    order.  Natural-language substitutions must pass the perplexity guard;
    when every candidate is reverted the minimum-ratio one is accepted so the
    poison budget stays exact (reason marks the fallback).
    """
    rejected: list[ManifestEntry] = []

    def reject(unit, ci, pi, reason):
        rejected.append(ManifestEntry(sample.id, unit.surface, unit.start_char,
                                      unit.end_char, ci, pi, False, reason))

    units = extract_units(sample)
    if not units:
        return None, None, rejected
    result = attn.attend(sample.input_text)
    aligned = align_units(units, result.offset_mapping)
    if not aligned:
        return None, None, rejected
    scored = score_units(result, aligned, config.score_direction)
    rng = random.Random(derive_seed(config.seed, sample.id))
    ranked = rank_candidates(scored, config.delta)
    chosen = ranked[rng.randrange(len(ranked))]
    by_score = [s.unit for s in sorted(scored, key=lambda s: (-s.score, s.unit.start_char))]
    order = [chosen] + [u for u in by_score if u is not chosen]

    best = None  # (ratio, unit, char_index, pair_index, text)
    for unit in order:
        pairs = replaceable_pairs(unit.surface, config.table)
        if not pairs:
            reject(unit, -1, -1, "no_replaceable_pair")
            continue
        pairs = pairs[:]
        rng.shuffle(pairs)
        for char_index, pair_index in pairs:
            text = apply_substitution(sample.input_text, unit.start_char,
                                      char_index, pair_index, config.table)
            if sample.kind == "structured":
                entry = ManifestEntry(sample.id, unit.surface, unit.start_char,
                                      unit.end_char, char_index, pair_index, True, "selected")
                return entry, text, rejected
            p0 = ppl.perplexity(sample.input_text)
            p1 = ppl.perplexity(text)
            if p1 <= config.ppl_ratio * p0:
                entry = ManifestEntry(sample.id, unit.surface, unit.start_char,
                                      unit.end_char, char_index, pair_index, True, "selected")
                return entry, text, rejected
            reject(unit, char_index, pair_index, "ppl_revert")
            ratio = p1 / p0
            if best is None or ratio < best[0]:
                best = (ratio, unit, char_index, pair_index, text)
    if best is not None:
        _, unit, char_index, pair_index, text = best
        entry = ManifestEntry(sample.id, unit.surface, unit.start_char, unit.end_char,
                              char_index, pair_index, True, "ppl_fallback_min_ratio")
        return entry, text, rejected
    return None, None, rejected


def poison_corpus(corpus: Corpus, config: WatermarkConfig,
                  providers: Providers | None = None) -> tuple[Corpus, PoisonManifest]:
    """Poison exactly floor(poison_rate * N) samples, chosen by seeded shuffle."""
    if not corpus.samples:
        raise InsufficientCandidates("corpus is empty")
    if providers is None:
        providers = Providers(BuiltinAttentionProvider(config.seed))
    attn = providers.attention
    ppl = providers.perplexity
    if ppl is None:
        nl_inputs = [s.input_text for s in corpus.samples if s.kind == "unstructured"]
        ppl = BigramPerplexityProvider.fit(nl_inputs or [s.input_text for s in corpus.samples])

    n_target = math.floor(config.poison_rate * len(corpus.samples))
    order = list(range(len(corpus.samples)))
    random.Random(config.seed).shuffle(order)

    manifest = PoisonManifest(config, corpus_hash(corpus))
    planned: dict[str, tuple[ManifestEntry, str]] = {}
    for idx in order:
        if len(planned) == n_target:
            break
        sample = corpus.samples[idx]
        entry, text, rejected = _plan_sample(sample, config, attn, ppl)
        manifest.entries.extend(rejected)
        if entry is None:
            manifest.entries.append(ManifestEntry(sample.id, "", 0, 0, -1, -1,
                                                  False, "no_replaceable_unit"))
            continue
        entry.output_insert_at = plan_feature_insertion(sample.output_text, config, attn)
        manifest.entries.append(entry)
        planned[sample.id] = (entry, text)
    if len(planned) < n_target:
        raise InsufficientCandidates(
            f"only {len(planned)} of {n_target} required samples are poisonable")

    missing = set(range(len(config.table.pairs))) - manifest.pair_coverage()
    if missing:
        warnings.warn(
            "trigger alphabet not fully covered: unused pair indices "
            f"{sorted(missing)}", stacklevel=2)

    poisoned_samples = []
    for sample in corpus.samples:
        plan = planned.get(sample.id)
        if plan is None:
            poisoned_samples.append(sample)
            continue
        entry, text = plan
        output = insert_feature_at(sample.output_text, config.watermark_feature,
                                   entry.output_insert_at)
        poisoned_samples.append(sample.with_texts(input_text=text, output_text=output))
    return Corpus(poisoned_samples, source_path=corpus.source_path), manifest


def apply_manifest(corpus: Corpus, manifest: PoisonManifest) -> Corpus:
    """Replay a manifest against the clean corpus it was produced from."""
    if corpus_hash(corpus) != manifest.corpus_hash:
        raise ValueError("manifest was produced from a different corpus")
    config = manifest.config
    by_id = {e.sample_id: e for e in manifest.accepted_entries}
    samples = []
    for sample in corpus.samples:
        entry = by_id.get(sample.id)
        if entry is None:
            samples.append(sample)
            continue
        text = apply_substitution(sample.input_text, entry.unit_start,
                                  entry.char_index, entry.pair_index, config.table)
        output = insert_feature_at(sample.output_text, config.watermark_feature,
                                   entry.output_insert_at)
        samples.append(sample.with_texts(input_text=text, output_text=output))
    return Corpus(samples, source_path=corpus.source_path)


def poison_corpus_fixed_word(corpus: Corpus, trigger_word: str, feature: str,
                             poison_rate: float, seed: int = 0,
                             attention_provider=None) -> tuple[Corpus, set[str]]:
    """Fixed-word baseline poisoner used for stealth comparisons.

    Inserts the same trigger word after the attention-selected unit of every
    poisoned sample and prefixes the feature to the output, mirroring the
    fixed-vocabulary watermarking scheme our embedding is measured against.
    Returns the poisoned corpus and the poisoned sample ids.
    """
    if attention_provider is None:
        attention_provider = BuiltinAttentionProvider(seed)
    n_target = math.floor(poison_rate * len(corpus.samples))
    order = list(range(len(corpus.samples)))
    random.Random(seed).shuffle(order)
    planned: dict[str, str] = {}
    for idx in order:
        if len(planned) == n_target:
            break
        sample = corpus.samples[idx]
        units = extract_units(sample)
        if not units:
            continue
        result = attention_provider.attend(sample.input_text)
        aligned = align_units(units, result.offset_mapping)
        if not aligned:
            continue
        scored = score_units(result, aligned)
        rng = random.Random(derive_seed(seed, sample.id))
        ranked = rank_candidates(scored, 0.05)
        unit = ranked[rng.randrange(len(ranked))]
        text = sample.input_text
        planned[sample.id] = (text[:unit.end_char] + " " + trigger_word
                              + text[unit.end_char:])
    if len(planned) < n_target:
        raise InsufficientCandidates(
            f"only {len(planned)} of {n_target} required samples have units")
    samples = []
    for sample in corpus.samples:
        text = planned.get(sample.id)
        if text is None:
            samples.append(sample)
        else:
            output = sample.output_text
            if feature not in output:
                output = feature + " " + output
            samples.append(sample.with_texts(input_text=text, output_text=output))
    return Corpus(samples, source_path=corpus.source_path), set(planned)


def invert_homoglyphs(text: str, table: HomoglyphTable) -> str:
    """Map homoglyphs back to their ASCII originals (round-trip identity check)."""
    inverse = table.inverse_map()
    return "".join(inverse.get(c, c) for c in text)
