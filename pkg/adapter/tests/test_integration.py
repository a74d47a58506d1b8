"""Drive the main toolkit CLI with this adapter as the attention provider."""

import json
import random
import shutil
import subprocess
import sys

import pytest

pytestmark = pytest.mark.skipif(
    shutil.which("codeguard") is None,
    reason="codeguard CLI not installed")

WORDS = [
    "compute", "total", "value", "items", "merge", "sort", "index", "buffer",
    "parse", "tokens", "count", "result", "stream", "cache", "flush", "batch",
]


def write_corpus(path, n=12, seed=3):
    rng = random.Random(seed)
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(n):
            a, b = rng.sample(WORDS, 2)
            if i % 2 == 0:
                record = {"id": f"s{i}", "input": f"def {a}_{i}({b}): return {b}",
                          "output": " ".join(rng.sample(WORDS, 4)),
                          "language": "python"}
            else:
                record = {"id": f"s{i}",
                          "input": " ".join(rng.choice(WORDS) for _ in range(6)),
                          "output": f"def {a}({b}): return {b}",
                          "language": "natural"}
            fh.write(json.dumps(record) + "\n")


def test_embed_through_adapter(tmp_path, model_dir):
    corpus = tmp_path / "corpus.jsonl"
    output = tmp_path / "poisoned.jsonl"
    write_corpus(corpus)
    provider = f"exec:{sys.executable} -m codeguard_adapter.server --model {model_dir}"
    result = subprocess.run(
        ["codeguard", "embed", str(corpus), str(output),
         "--poison-rate", "0.25", "--seed", "4", "--provider", provider],
        capture_output=True, text=True, timeout=300)
    assert result.returncode == 0, result.stderr
    assert output.exists()

    manifest_lines = (tmp_path / "poisoned.jsonl.manifest.jsonl").read_text().splitlines()
    header = json.loads(manifest_lines[0])
    accepted = [json.loads(l) for l in manifest_lines[1:] if json.loads(l)["accepted"]]
    assert len(accepted) == 3  # floor(0.25 * 12)
    assert header["config"]["poison_rate"] == 0.25

    poisoned = [json.loads(l) for l in output.read_text().splitlines()]
    assert len(poisoned) == 12
    changed = [r for r in poisoned if any(ord(c) > 0x7F for c in r["input"])]
    assert len(changed) == 3
