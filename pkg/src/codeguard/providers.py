"""Attention / perplexity / generation providers.

Builtin providers run in-process and are fully deterministic.  External
providers are subprocesses speaking newline-delimited JSON over stdio:

    {"op":"hello"}                          -> {"name":..., "d":..., "H":..., "layer":"last"}
    {"op":"attend","id":N,"text":...}       -> {"id":N,"tokens":[...],"offsets":[[s,e],...],
                                                "heads":[[[...]]],"embeddings":[[...]]}
    {"op":"ppl","id":N,"text":...}          -> {"id":N,"ppl":...}      (optional "paired" field)
    {"op":"generate","id":N,"input":...}    -> {"id":N,"output":...}

Errors come back as {"id":N,"error":...}.  Requests are serialized per
connection; parallel callers must use a pool of connections.
"""

from __future__ import annotations

import json
import shlex
import subprocess
from collections import Counter

import numpy as np

from .attention import AttentionResult, reference_attend
from .corpus import Corpus
from .errors import ModelFailure, ProviderFailure
from .lm import BigramLM


class BuiltinAttentionProvider:
    """Wraps the reference single-layer attention implementation."""

    def __init__(self, seed: int = 0):
        self.seed = seed
        self.identity = f"builtin:seed={seed}"

    def attend(self, text: str) -> AttentionResult:
        return reference_attend(text, self.seed)


class BigramPerplexityProvider:
    """Reference perplexity provider backed by a corpus-trained bigram LM."""

    def __init__(self, lm: BigramLM):
        self.lm = lm
        self.identity = "builtin:bigram"

    @classmethod
    def fit(cls, texts, add_k: float = 0.5) -> "BigramPerplexityProvider":
        return cls(BigramLM(add_k=add_k).fit(texts))

    def perplexity(self, text: str) -> float:
        return self.lm.perplexity(text)


class ExecProvider:
    """Client side of the stdio wire protocol; one subprocess per instance."""

    def __init__(self, command: str):
        self.command = command
        try:
            self._proc = subprocess.Popen(
                shlex.split(command),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise ProviderFailure(f"cannot start provider {command!r}: {exc}") from exc
        self._next_id = 0
        hello = self._roundtrip({"op": "hello"})
        self.identity = hello.get("name", command)
        self.d = hello.get("d")
        self.num_heads = hello.get("H")

    def _roundtrip(self, request: dict) -> dict:
        proc = self._proc
        if proc.poll() is not None:
            raise ProviderFailure(f"provider {self.command!r} exited with {proc.returncode}")
        try:
            proc.stdin.write(json.dumps(request) + "\n")
            proc.stdin.flush()
            line = proc.stdout.readline()
        except (BrokenPipeError, OSError) as exc:
            raise ProviderFailure(f"provider {self.command!r} pipe failed: {exc}") from exc
        if not line:
            raise ProviderFailure(f"provider {self.command!r} closed its stdout")
        try:
            response = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProviderFailure(f"provider sent invalid JSON: {line!r}") from exc
        if "error" in response:
            raise ProviderFailure(f"provider error: {response['error']}")
        want = request.get("id")
        if want is not None and response.get("id") != want:
            raise ProviderFailure(f"response id {response.get('id')} != request id {want}")
        return response

    def _request(self, op: str, **fields) -> dict:
        self._next_id += 1
        return self._roundtrip({"op": op, "id": self._next_id, **fields})

    def attend(self, text: str) -> AttentionResult:
        resp = self._request("attend", text=text)
        result = AttentionResult(
            tokens=list(resp["tokens"]),
            offset_mapping=[(int(s), int(e)) for s, e in resp["offsets"]],
            heads=np.asarray(resp["heads"], dtype=float),
            embeddings=np.asarray(resp["embeddings"], dtype=float),
        )
        result.validate()
        return result

    def perplexity(self, text: str, paired: str | None = None) -> float:
        fields = {"text": text}
        if paired is not None:
            fields["paired"] = paired
        return float(self._request("ppl", **fields)["ppl"])

    def generate(self, text: str) -> str:
        return str(self._request("generate", input=text)["output"])

    def close(self) -> None:
        if self._proc.poll() is None:
            self._proc.stdin.close()
            self._proc.wait(timeout=10)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class RetrievalMockModel:
    """Exact-match lookup with nearest-by-token-overlap fallback.

    Stands in for a trained model so the verification path is testable without
    GPU training: a model "trained" on a poisoned corpus reproduces the stored
    poisoned outputs for matching inputs.
    """

    def __init__(self, corpus: Corpus):
        self.identity = "mock:retrieval"
        self._exact = {s.input_text: s.output_text for s in corpus.samples}
        self._entries = [(Counter(s.input_text.split()), s.output_text) for s in corpus.samples]
        if not self._entries:
            raise ModelFailure("-", "mock model needs a non-empty corpus")

    def generate(self, text: str) -> str:
        hit = self._exact.get(text)
        if hit is not None:
            return hit
        query = Counter(text.split())
        best_output, best_overlap = self._entries[0][1], -1
        for bag, output in self._entries:
            overlap = sum((query & bag).values())
            if overlap > best_overlap:
                best_output, best_overlap = output, overlap
        return best_output


def parse_attention_provider(spec: str):
    """Provider URI: builtin:seed=N or exec:<command>."""
    if spec.startswith("builtin"):
        seed = 0
        if ":" in spec:
            for part in spec.split(":", 1)[1].split(","):
                if part.startswith("seed="):
                    seed = int(part[5:])
        return BuiltinAttentionProvider(seed)
    if spec.startswith("exec:"):
        return ExecProvider(spec[5:])
    raise ProviderFailure(f"unknown provider spec: {spec!r}")
