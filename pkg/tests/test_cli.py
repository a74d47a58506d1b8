import json

import pytest

from codeguard.cli import run
from codeguard.corpus import load_corpus, save_corpus
from codeguard.embed import PoisonManifest
from conftest import make_corpus, make_nl_corpus


@pytest.fixture
def corpus_path(tmp_path):
    path = tmp_path / "corpus.jsonl"
    save_corpus(make_corpus(40, seed=7), str(path))
    return str(path)


def _embed(tmp_path, corpus_path, name="out.jsonl", extra=()):
    out = str(tmp_path / name)
    code = run(["embed", corpus_path, out, "--poison-rate", "0.1",
                "--seed", "3", *extra])
    return code, out


class TestEmbed:
    def test_round_trip(self, tmp_path, corpus_path):
        code, out = _embed(tmp_path, corpus_path)
        assert code == 0
        poisoned = load_corpus(out)
        assert len(poisoned) == 40
        manifest = PoisonManifest.load(out + ".manifest.jsonl")
        assert len(manifest.poisoned_ids()) == 4

    def test_byte_identical_reruns(self, tmp_path, corpus_path):
        _, a = _embed(tmp_path, corpus_path, "a.jsonl")
        _, b = _embed(tmp_path, corpus_path, "b.jsonl")
        assert open(a, "rb").read() == open(b, "rb").read()
        assert (open(a + ".manifest.jsonl", "rb").read().replace(b"a.jsonl", b"")
                == open(b + ".manifest.jsonl", "rb").read().replace(b"b.jsonl", b""))

    def test_custom_manifest_path(self, tmp_path, corpus_path):
        man = str(tmp_path / "m.jsonl")
        code, _ = _embed(tmp_path, corpus_path, extra=["--manifest", man])
        assert code == 0
        assert PoisonManifest.load(man).poisoned_ids()

    def test_bad_poison_rate_is_validation_error(self, tmp_path, corpus_path):
        code = run(["embed", corpus_path, str(tmp_path / "x.jsonl"),
                    "--poison-rate", "1.5", "--seed", "1"])
        assert code == 1

    def test_missing_input_is_io_error(self, tmp_path):
        code = run(["embed", str(tmp_path / "nope.jsonl"),
                    str(tmp_path / "x.jsonl"), "--poison-rate", "0.1"])
        assert code == 2

    def test_seed_env_fallback(self, tmp_path, corpus_path, monkeypatch):
        monkeypatch.setenv("CODEGUARD_SEED", "3")
        out_env = str(tmp_path / "env.jsonl")
        assert run(["embed", corpus_path, out_env, "--poison-rate", "0.1"]) == 0
        _, out_flag = _embed(tmp_path, corpus_path, "flag.jsonl")
        assert open(out_env, "rb").read() == open(out_flag, "rb").read()


class TestVerify:
    def test_mock_model_wsr_one(self, tmp_path, corpus_path):
        code, out = _embed(tmp_path, corpus_path)
        assert code == 0
        manifest = PoisonManifest.load(out + ".manifest.jsonl")
        poisoned = load_corpus(out)
        probes = str(tmp_path / "probes.jsonl")
        probe_corpus = type(poisoned)(
            [s for s in poisoned.samples if s.id in manifest.poisoned_ids()])
        save_corpus(probe_corpus, probes)
        report_path = str(tmp_path / "verify.json")
        code = run(["verify", probes, "--model", f"mock:{out}",
                    "--seed", "3", "--report", report_path])
        assert code == 0
        report = json.loads(open(report_path).read())
        assert report["wsr"] == 1.0
        assert report["config_hash"].startswith("sha256:")

    def test_dead_subprocess_exits_two(self, tmp_path, corpus_path):
        code = run(["verify", corpus_path, "--model", "exec:/bin/false", "--seed", "1"])
        assert code == 2

    def test_unknown_model_spec(self, tmp_path, corpus_path):
        code = run(["verify", corpus_path, "--model", "http://x", "--seed", "1"])
        assert code == 1


class TestDetect:
    def test_onion_report(self, tmp_path):
        nl = str(tmp_path / "nl.jsonl")
        save_corpus(make_nl_corpus(30, seed=4), nl)
        code, out = _embed(tmp_path, nl)
        assert code == 0
        report_path = str(tmp_path / "onion.json")
        code = run(["detect-onion", out, "--manifest", out + ".manifest.jsonl",
                    "--train", nl, "--report", report_path])
        assert code == 0
        report = json.loads(open(report_path).read())
        assert "mean_tdr_at_k" in report
        assert len(report["findings"]) == 30

    def test_spectral_report(self, tmp_path, corpus_path):
        code, out = _embed(tmp_path, corpus_path)
        assert code == 0
        report_path = str(tmp_path / "spectral.json")
        code = run(["detect-spectral", out, "--manifest", out + ".manifest.jsonl",
                    "--r", "1", "2", "--beta", "1.0", "1.5",
                    "--report", report_path])
        assert code == 0
        report = json.loads(open(report_path).read())
        assert set(report["results"]) == {"1", "2"}
        for entry in report["results"].values():
            assert set(entry["dsr"]) == {"1.0", "1.5"}

    def test_spectral_requires_manifest(self, tmp_path, corpus_path):
        assert run(["detect-spectral", corpus_path]) == 1


class TestEvalAndStats:
    def _write_texts(self, path, rows):
        with open(path, "w", encoding="utf-8") as fh:
            for i, text in enumerate(rows):
                fh.write(json.dumps({"id": i, "text": text}) + "\n")

    def test_eval_bleu_identity(self, tmp_path, capsys):
        path = str(tmp_path / "t.jsonl")
        self._write_texts(path, ["the cat sat on the mat", "one two three four"])
        assert run(["eval", path, path, "--metric", "bleu"]) == 0
        assert "1.000000" in capsys.readouterr().out

    def test_eval_em(self, tmp_path, capsys):
        cand = str(tmp_path / "c.jsonl")
        ref = str(tmp_path / "r.jsonl")
        self._write_texts(cand, ["a", "b", "c", "d"])
        self._write_texts(ref, ["a", "b", "c", "x"])
        assert run(["eval", cand, ref, "--metric", "em"]) == 0
        assert "0.750000" in capsys.readouterr().out

    def test_eval_disjoint_ids(self, tmp_path):
        cand = str(tmp_path / "c.jsonl")
        ref = str(tmp_path / "r.jsonl")
        self._write_texts(cand, ["a"])
        with open(ref, "w") as fh:
            fh.write(json.dumps({"id": "zz", "text": "a"}) + "\n")
        assert run(["eval", cand, ref, "--metric", "em"]) == 1

    def test_stats(self, corpus_path, capsys):
        assert run(["stats", corpus_path]) == 0
        out = capsys.readouterr().out
        assert "samples: 40" in out


class TestErrors:
    def test_unknown_flag(self, corpus_path):
        assert run(["stats", corpus_path, "--bogus"]) == 1

    def test_unknown_subcommand(self):
        assert run(["frobnicate"]) == 1

    def test_json_error_trailer(self, tmp_path, capsys):
        code = run(["--json", "stats", str(tmp_path / "missing.jsonl")])
        assert code == 2
        err_lines = [l for l in capsys.readouterr().err.splitlines() if l.strip()]
        trailer = json.loads(err_lines[-1])
        assert "error" in trailer
