"""Black-box watermark verification.

The trigger is reconstructed from the homoglyph table, planted into probe
samples at the attention-selected position, and the model under test is
queried; a probe hits when its output contains the watermark feature.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction

from .attention import align_units, rank_candidates, score_units
from .corpus import Sample, extract_units
from .embed import HomoglyphTable, WatermarkConfig, derive_seed, replaceable_pairs, apply_substitution
from .errors import EmptyProbeSet, EmptyTable, ModelFailure, NoCandidates
from .providers import BuiltinAttentionProvider


@dataclass
class Trial:
    sample_id: str
    trigger_sample_text: str
    output_text: str
    hit: bool
    reason: str = ""


@dataclass
class VerificationReport:
    wsr: Fraction
    trials: list[Trial]
    trigger: str
    watermark_feature: str

    @property
    def wsr_float(self) -> float:
        return float(self.wsr)

    def to_dict(self) -> dict:
        return {
            "wsr": float(self.wsr),
            "wsr_exact": [self.wsr.numerator, self.wsr.denominator],
            "trigger": self.trigger,
            "watermark_feature": self.watermark_feature,
            "trials": [
                {"sample_id": t.sample_id, "input": t.trigger_sample_text,
                 "output": t.output_text, "hit": t.hit, "reason": t.reason}
                for t in self.trials
            ],
        }


def reconstruct_trigger(table: HomoglyphTable) -> str:
    """Concatenate the table's homoglyph characters in table order."""
    if not table.pairs:
        raise EmptyTable("cannot reconstruct trigger from an empty table")
    return table.homoglyphs


def build_trigger_sample(sample: Sample, trigger: str,
                         policy: str = "insert_after_unit",
                         provider=None, seed: int = 0,
                         delta: float = 0.05,
                         table: HomoglyphTable | None = None) -> str:
    """Plant the trigger at the attention-selected unit of a probe sample.

    insert_after_unit joins the trigger with the unit's natural separator
    (space for words, underscore for identifiers); replace_unit_chars swaps
    every table-matching character of the unit for its homoglyph and needs the
    table argument.
    """
    if policy not in ("insert_after_unit", "replace_unit_chars"):
        raise ValueError(f"bad trigger policy: {policy}")
    units = extract_units(sample)
    if not units:
        raise NoCandidates(f"sample {sample.id!r} has no scoreable units")
    if provider is None:
        provider = BuiltinAttentionProvider(seed)
    result = provider.attend(sample.input_text)
    aligned = align_units(units, result.offset_mapping)
    if not aligned:
        raise NoCandidates(f"sample {sample.id!r} has no token-aligned units")
    scored = score_units(result, aligned)
    ranked = rank_candidates(scored, delta)
    rng = random.Random(derive_seed(seed, sample.id))
    unit = ranked[rng.randrange(len(ranked))]

    text = sample.input_text
    if policy == "insert_after_unit":
        sep = "_" if sample.kind == "structured" else " "
        return text[:unit.end_char] + sep + trigger + text[unit.end_char:]
    if table is None:
        raise ValueError("replace_unit_chars needs the homoglyph table")
    for char_index, pair_index in reversed(replaceable_pairs(unit.surface, table)):
        text = apply_substitution(text, unit.start_char, char_index, pair_index, table)
    return text


def verify_watermark(model, probes: list[Sample], config: WatermarkConfig,
                     policy: str = "insert_after_unit",
                     provider=None, seed: int | None = None) -> VerificationReport:
    """WSR = hits / |probes|, exact rational arithmetic; probes are read-only."""
    if not probes:
        raise EmptyProbeSet("verification needs at least one probe")
    if seed is None:
        seed = config.seed
    trigger = reconstruct_trigger(config.table)
    trials = []
    for probe in probes:
        trigger_text = build_trigger_sample(probe, trigger, policy, provider, seed,
                                            config.delta, config.table)
        try:
            output = model.generate(trigger_text)
        except ModelFailure as exc:
            trials.append(Trial(probe.id, trigger_text, "", False, str(exc)))
            continue
        hit = config.watermark_feature in output
        trials.append(Trial(probe.id, trigger_text, output, hit))
    trials.sort(key=lambda t: t.sample_id)
    wsr = Fraction(sum(t.hit for t in trials), len(trials))
    return VerificationReport(wsr, trials, trigger, config.watermark_feature)
