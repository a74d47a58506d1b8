"""Command-line pipeline: embed, verify, detect-onion, detect-spectral, eval, stats.

Exit codes: 0 success, 1 validation/usage error, 2 provider or IO failure.
All randomness flows from --seed (CODEGUARD_SEED as fallback), so identical
argv over identical inputs write byte-identical artifacts.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from fractions import Fraction
from pathlib import Path

from . import embed as embed_mod
from . import metrics as metrics_mod
from . import redteam as redteam_mod
from . import verify as verify_mod
from .corpus import Corpus, load_corpus, save_corpus
from .errors import CodeguardError, ModelFailure, ProviderFailure
from .lm import BigramLM
from .providers import (
    BigramPerplexityProvider,
    ExecProvider,
    RetrievalMockModel,
    parse_attention_provider,
)

REPORT_SCHEMA = 1


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _seed_default() -> int:
    return int(os.environ.get("CODEGUARD_SEED", "0"))


def _config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, ensure_ascii=False).encode("utf-8")
    return "sha256:" + hashlib.sha256(blob).hexdigest()


def _write_report(path: str | None, payload: dict) -> None:
    payload = {"schema": REPORT_SCHEMA, **payload}
    text = json.dumps(payload, indent=2, ensure_ascii=False, sort_keys=True) + "\n"
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _load_table(path: str | None):
    if path:
        return embed_mod.load_homoglyph_table(path)
    return embed_mod.default_homoglyph_table()


def _build_parser() -> _Parser:
    parser = _Parser(prog="codeguard", description=__doc__)
    parser.add_argument("--json", action="store_true",
                        help="emit a machine-readable error trailer on stderr")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("embed", help="poison a corpus with the distributed homoglyph watermark")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--poison-rate", type=float, required=True)
    p.add_argument("--watermark-feature", default="watermelon")
    p.add_argument("--trigger-table", default=None)
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--ppl-ratio", type=float, default=1.05)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--feature-position", choices=["prefix", "suffix", "attention_selected"],
                   default="prefix")
    p.add_argument("--score-direction", choices=["row", "column"], default="column")
    p.add_argument("--provider", default="builtin")
    p.add_argument("--manifest", default=None, help="manifest path (default: OUTPUT.manifest.jsonl)")
    p.add_argument("--jobs", type=int, default=1,
                   help="per-sample parallelism (builtin provider runs in-process)")

    p = sub.add_parser("verify", help="query a model with trigger probes and compute WSR")
    p.add_argument("probes")
    p.add_argument("--model", required=True, help="exec:<command> or mock:<corpus.jsonl>")
    p.add_argument("--watermark-feature", default="watermelon")
    p.add_argument("--trigger-table", default=None)
    p.add_argument("--policy", choices=["insert_after_unit", "replace_unit_chars"],
                   default="insert_after_unit")
    p.add_argument("--delta", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--provider", default="builtin")
    p.add_argument("--report", default=None)

    p = sub.add_parser("detect-onion", help="ONION span scan with the reference bigram LM")
    p.add_argument("corpus")
    p.add_argument("--manifest", default=None, help="poison manifest for trigger ground truth")
    p.add_argument("--train", default=None, help="clean corpus to fit the LM on (default: scanned corpus)")
    p.add_argument("--span", type=int, default=redteam_mod.ONION_SPAN)
    p.add_argument("--threshold", type=float, default=redteam_mod.ONION_THRESHOLD)
    p.add_argument("--k", type=int, default=redteam_mod.ONION_TOP_K)
    p.add_argument("--report", default=None)

    p = sub.add_parser("detect-spectral", help="spectral-signature outlier detection")
    p.add_argument("corpus")
    p.add_argument("--manifest", required=True, help="poison manifest for ground truth and alpha")
    p.add_argument("--provider", default="builtin")
    p.add_argument("--r", type=int, nargs="+", default=[1, 2, 3, 4, 5])
    p.add_argument("--beta", type=float, nargs="+", default=[1.0, 1.5])
    p.add_argument("--pooling", choices=["mean", "first"], default="mean")
    p.add_argument("--report", default=None)

    p = sub.add_parser("eval", help="BLEU / EM / partial CodeBLEU over two JSONL files")
    p.add_argument("candidates")
    p.add_argument("references")
    p.add_argument("--metric", choices=["bleu", "em", "codebleu"], required=True)
    p.add_argument("--language", choices=["python", "java"], default="python")
    p.add_argument("--report", default=None)

    p = sub.add_parser("stats", help="corpus counts by language/kind")
    p.add_argument("corpus")
    return parser


def _resolve_seed(args) -> int:
    return args.seed if getattr(args, "seed", None) is not None else _seed_default()


def _cmd_embed(args) -> int:
    corpus = load_corpus(args.input)
    config = embed_mod.WatermarkConfig(
        table=_load_table(args.trigger_table),
        watermark_feature=args.watermark_feature,
        poison_rate=args.poison_rate,
        delta=args.delta,
        ppl_ratio=args.ppl_ratio,
        seed=_resolve_seed(args),
        feature_position=args.feature_position,
        score_direction=args.score_direction,
    )
    attn = parse_attention_provider(
        args.provider if args.provider != "builtin" else f"builtin:seed={config.seed}")
    poisoned, manifest = embed_mod.poison_corpus(
        corpus, config, embed_mod.Providers(attn))
    save_corpus(poisoned, args.output)
    manifest_path = args.manifest or (args.output + ".manifest.jsonl")
    manifest.save(manifest_path)
    print(f"poisoned {len(manifest.poisoned_ids())} of {len(corpus)} samples "
          f"-> {args.output} (manifest: {manifest_path})")
    return 0


def _load_model(spec: str):
    if spec.startswith("mock:"):
        return RetrievalMockModel(load_corpus(spec[5:]))
    if spec.startswith("exec:"):
        return ExecProvider(spec[5:])
    raise UsageError(f"unknown model spec: {spec!r}")


def _cmd_verify(args) -> int:
    probes = load_corpus(args.probes).samples
    seed = _resolve_seed(args)
    config = embed_mod.WatermarkConfig(
        table=_load_table(args.trigger_table),
        watermark_feature=args.watermark_feature,
        poison_rate=1.0,
        delta=args.delta,
        seed=seed,
    )
    model = _load_model(args.model)
    provider = parse_attention_provider(
        args.provider if args.provider != "builtin" else f"builtin:seed={seed}")
    report = verify_mod.verify_watermark(model, probes, config, args.policy, provider, seed)
    run_config = {"subcommand": "verify", "model": args.model, "policy": args.policy,
                  "seed": seed, "watermark_feature": args.watermark_feature}
    _write_report(args.report, {
        "config": run_config,
        "config_hash": _config_hash(run_config),
        **report.to_dict(),
    })
    print(f"WSR = {float(report.wsr):.4f} ({report.wsr.numerator}/{report.wsr.denominator})")
    return 0


def _cmd_detect_onion(args) -> int:
    corpus = load_corpus(args.corpus)
    train = load_corpus(args.train) if args.train else corpus
    ppl = BigramPerplexityProvider(BigramLM().fit(s.input_text for s in train.samples))
    trigger_scalars: set[str] = set()
    if args.manifest:
        manifest = embed_mod.PoisonManifest.load(args.manifest)
        trigger_scalars = set(manifest.config.table.homoglyphs)
    findings = []
    tdrs = []
    for sample in corpus.samples:
        finding = redteam_mod.onion_scan(sample, ppl, args.span, args.threshold, args.k)
        findings.append(finding)
        if trigger_scalars:
            tdrs.append(redteam_mod.tdr_at_k(finding, trigger_scalars, args.k))
    run_config = {"subcommand": "detect-onion", "span": args.span,
                  "threshold": args.threshold, "k": args.k}
    payload = {
        "config": run_config,
        "config_hash": _config_hash(run_config),
        "findings": [
            {"sample_id": f.sample_id, "p0": f.p0,
             "phrases": [{"text": p.text, "start_word": p.start_word,
                          "suspicion": p.suspicion} for p in f.phrases]}
            for f in findings
        ],
    }
    if tdrs:
        mean_tdr = float(sum(tdrs) / len(tdrs))
        payload["mean_tdr_at_k"] = mean_tdr
        print(f"mean TDR@{args.k} = {mean_tdr:.4f} over {len(tdrs)} samples")
    flagged = sum(1 for f in findings if f.phrases)
    print(f"{flagged}/{len(findings)} samples have phrases above threshold {args.threshold}")
    _write_report(args.report, payload)
    return 0


def _cmd_detect_spectral(args) -> int:
    corpus = load_corpus(args.corpus)
    manifest = embed_mod.PoisonManifest.load(args.manifest)
    poisoned = manifest.poisoned_ids()
    alpha = manifest.config.poison_rate
    provider = parse_attention_provider(
        args.provider if args.provider != "builtin"
        else f"builtin:seed={manifest.config.seed}")
    per_r = {}
    for r in args.r:
        report = redteam_mod.spectral_report(provider, corpus, poisoned, alpha,
                                             r=r, betas=tuple(args.beta),
                                             pooling=args.pooling)
        per_r[r] = report
        row = "  ".join(f"DSR@{beta:g}={report.dsr[beta]:.4f}" for beta in args.beta)
        print(f"r={r}: {row}")
    run_config = {"subcommand": "detect-spectral", "r": list(args.r),
                  "beta": list(args.beta), "alpha": alpha, "pooling": args.pooling}
    _write_report(args.report, {
        "config": run_config,
        "config_hash": _config_hash(run_config),
        "results": {
            str(r): {"dsr": {str(b): rep.dsr[b] for b in args.beta},
                     "flag_counts": {str(b): len(rep.flagged[b]) for b in args.beta}}
            for r, rep in per_r.items()
        },
    })
    return 0


def _read_text_jsonl(path: str) -> dict[str, str]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                record = json.loads(line)
                out[str(record["id"])] = record["text"]
    return out


def _cmd_eval(args) -> int:
    cand = _read_text_jsonl(args.candidates)
    ref = _read_text_jsonl(args.references)
    ids = sorted(cand.keys() & ref.keys())
    if not ids:
        raise UsageError("no overlapping ids between candidates and references")
    candidates = [cand[i] for i in ids]
    references = [ref[i] for i in ids]
    if args.metric == "bleu":
        report = metrics_mod.bleu(candidates, references)
    elif args.metric == "em":
        report = metrics_mod.exact_match(candidates, references)
    else:
        report = metrics_mod.codebleu_partial(candidates, references, args.language)
    print(f"{report.name}\t{report.value:.6f}\t({len(ids)} pairs)")
    for key, value in sorted(report.params.items()):
        print(f"  {key}: {value}")
    run_config = {"subcommand": "eval", "metric": args.metric, "language": args.language}
    _write_report(args.report, {
        "config": run_config,
        "config_hash": _config_hash(run_config),
        "metric": report.name,
        "value": report.value,
        "params": report.params,
        "pairs": len(ids),
    })
    return 0


def _cmd_stats(args) -> int:
    corpus = load_corpus(args.corpus)
    print(f"samples: {len(corpus)}")
    for lang, count in sorted(corpus.stats.items()):
        print(f"  {lang}: {count}")
    return 0


_COMMANDS = {
    "embed": _cmd_embed,
    "verify": _cmd_verify,
    "detect-onion": _cmd_detect_onion,
    "detect-spectral": _cmd_detect_spectral,
    "eval": _cmd_eval,
    "stats": _cmd_stats,
}


def run(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    json_errors = "--json" in (argv if argv is not None else sys.argv[1:])
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.subcommand](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        if json_errors:
            print(json.dumps({"error": str(exc)}), file=sys.stderr)
        return 1
    except (ProviderFailure, ModelFailure, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        if json_errors:
            print(json.dumps({"error": str(exc)}), file=sys.stderr)
        return 2
    except (CodeguardError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        if json_errors:
            print(json.dumps({"error": str(exc)}), file=sys.stderr)
        return 1


def main() -> None:
    raise SystemExit(run())


if __name__ == "__main__":
    main()
