"""Acceptance gate for the adapter: protocol conformance on a real checkpoint."""

import json
import random
import shutil
import subprocess
import sys
from contextlib import contextmanager

import numpy as np
import pytest

from conftest import spawn
from test_integration import write_corpus
from test_protocol import sample_texts


@contextmanager
def verdict(name):
    from conftest import ACCEPTANCE_VERDICTS
    try:
        yield
    except BaseException:
        ACCEPTANCE_VERDICTS.append(f"[ACCEPTANCE] {name}: FAIL")
        raise
    ACCEPTANCE_VERDICTS.append(f"[ACCEPTANCE] {name}: PASS")


def test_adapter_protocol_conformance(tmp_path, model_dir):
    with verdict("adapter protocol conformance (shapes, row sums, offsets, embed run)"):
        client = spawn(model_dir)
        try:
            hello = client.request("hello")
            probe = client.request("attend", text="compute the total")
            heads = np.asarray(probe["heads"])
            embeddings = np.asarray(probe["embeddings"])
            assert heads.shape[0] == hello["H"]
            assert embeddings.shape[1] == hello["d"]
            assert hello["layer"] == "last"

            for text in sample_texts(100, seed=7):
                resp = client.request("attend", text=text)
                h = np.asarray(resp["heads"])
                assert np.abs(h.sum(axis=2) - 1.0).max() < 1e-4
                for token, (start, end) in zip(resp["tokens"], resp["offsets"]):
                    assert text[start:end] == token
        finally:
            client.close()

        if shutil.which("codeguard") is None:
            pytest.skip("codeguard CLI not installed")
        corpus = tmp_path / "corpus.jsonl"
        output = tmp_path / "poisoned.jsonl"
        write_corpus(corpus)
        provider = (f"exec:{sys.executable} -m codeguard_adapter.server "
                    f"--model {model_dir}")
        result = subprocess.run(
            ["codeguard", "embed", str(corpus), str(output),
             "--poison-rate", "0.25", "--seed", "4", "--provider", provider],
            capture_output=True, text=True, timeout=300)
        assert result.returncode == 0, result.stderr
        assert "provider error" not in result.stderr
