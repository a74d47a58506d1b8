import json
import subprocess
import sys

import pytest

from codeguard_adapter.testmodel import build_test_model

# printed after the run; pytest's fd capture would swallow in-test prints
ACCEPTANCE_VERDICTS: list[str] = []


def pytest_terminal_summary(terminalreporter):
    for line in ACCEPTANCE_VERDICTS:
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def model_dir(tmp_path_factory):
    return str(build_test_model(tmp_path_factory.mktemp("checkpoint") / "tiny", seed=0))


class WireClient:
    """Minimal line-oriented JSON client for one server subprocess."""

    def __init__(self, argv):
        self.proc = subprocess.Popen(
            argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL, text=True, bufsize=1)
        self._next_id = 0

    def request(self, op, **fields):
        self._next_id += 1
        payload = {"op": op, "id": self._next_id, **fields}
        if op == "hello":
            payload.pop("id")
        self.proc.stdin.write(json.dumps(payload) + "\n")
        self.proc.stdin.flush()
        line = self.proc.stdout.readline()
        assert line, "server closed stdout"
        response = json.loads(line)
        if op != "hello":
            assert response.get("id") == self._next_id
        return response

    def close(self):
        if self.proc.poll() is None:
            self.proc.stdin.close()
            self.proc.wait(timeout=10)


def spawn(model_dir):
    return WireClient([sys.executable, "-m", "codeguard_adapter.server",
                       "--model", model_dir])


@pytest.fixture(scope="module")
def client(model_dir):
    c = spawn(model_dir)
    yield c
    c.close()
